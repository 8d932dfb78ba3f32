"""Inventory balancing with online learning: simulation, learners, LP benchmarks and experiments."""

__version__ = "0.1.0"

from .engine import SimulationTrace, compute_regret, run_conservative_baseline, run_greedy_baseline, run_integrated
from .errors import (ConfigError, InvbalError, MalformedInstanceError, SizeError, SolverError,
                     StateCorruptionError, StatisticalPowerError)
from .learners import ClairvoyantLearner, TsMnlLearner, UcbLearner, make_learner, rad
from .model import (Instance, InventoryState, MatchingLaw, MnlLaw, Resource, TabularLaw, apply_outcome,
                    expected_auxiliary_reward, sample_outcome)
from .penalty import PenaltyCurve, PenaltySchedule, competitive_factor, discounted_reward, psi

__all__ = [
    "ClairvoyantLearner", "ConfigError", "Instance", "InventoryState", "InvbalError", "MalformedInstanceError",
    "MatchingLaw", "MnlLaw", "PenaltyCurve", "PenaltySchedule", "Resource", "SimulationTrace", "SizeError",
    "SolverError", "StateCorruptionError", "StatisticalPowerError", "TabularLaw", "TsMnlLearner", "UcbLearner",
    "apply_outcome", "competitive_factor", "compute_regret", "discounted_reward", "expected_auxiliary_reward",
    "make_learner", "psi", "rad", "run_conservative_baseline", "run_greedy_baseline", "run_integrated",
    "sample_outcome",
]
