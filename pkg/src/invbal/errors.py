"""Exception hierarchy shared by all modules."""


class InvbalError(Exception):
    """Base class for errors raised by this package."""


class MalformedInstanceError(InvbalError, ValueError):
    """An instance, law or trace is internally inconsistent."""


class StateCorruptionError(InvbalError, ValueError):
    """Inventory counters left their admissible range."""


class ConfigError(InvbalError, ValueError):
    """Invalid experiment or learner configuration."""


class SolverError(InvbalError, RuntimeError):
    """The LP solver failed (stall, iteration limit, unbounded or infeasible)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SizeError(InvbalError, ValueError):
    """A brute-force computation would exceed its state-space budget."""


class StatisticalPowerError(InvbalError, ValueError):
    """Too few replicates for the requested statistic."""
