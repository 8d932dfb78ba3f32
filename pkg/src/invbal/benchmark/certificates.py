"""Dual certificates for the fluid LP and the per-path certificate built from a trace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import SimulationTrace
from ..errors import MalformedInstanceError
from ..model import MULTI, Instance
from ..penalty import PenaltySchedule
from .lp import LpProblem, LpSolution

CERT_TOL = 1e-9


@dataclass(frozen=True)
class DualCertificate:
    """Resource prices ``lam`` (one per resource) and period values ``gamma`` (one per period)."""

    lam: np.ndarray
    gamma: np.ndarray

    def objective(self, instance: Instance) -> float:
        """Dual objective ``sum_i b_i lam_i + sum_t gamma_t``; an upper bound on OPT when feasible."""
        return float(instance.items.inventory @ self.lam + self.gamma.sum())


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    worst_violation: float
    where: tuple | None
    n_violations: int

    def __bool__(self):
        return self.feasible


def _schedule_for(instance, schedule):
    if schedule is not None:
        return schedule
    from ..engine import _default_schedule

    return _default_schedule(instance)


def dual_from_trace(trace: SimulationTrace, instance: Instance, schedule: PenaltySchedule | None = None
                    ) -> DualCertificate:
    """Random dual variables realized on one sample path.

    ``lam_i`` is the resource's penalty at its final depletion level
    (``r_i psi(N_i^T / b_i)`` or ``Phi_i(N_i^T / b_i)``). ``gamma_t`` is the best
    expected virtual reward available in period t, recomputed from the
    recorded inventory rather than read from the trace.
    """
    if trace.horizon != instance.horizon:
        raise MalformedInstanceError(f"trace has {trace.horizon} periods, instance has {instance.horizon}")
    if trace.inventory.shape[1:] != (instance.n,):
        raise MalformedInstanceError("trace inventory width does not match the instance")
    if not np.array_equal(trace.contexts, instance.arrivals):
        raise MalformedInstanceError("trace contexts differ from the instance arrivals")
    schedule = _schedule_for(instance, schedule)
    items = instance.items
    lam = schedule.dual_prices(items, trace.final_consumed(instance.n))
    multi = instance.mode == MULTI
    gamma = np.zeros(instance.horizon)
    for t in range(1, instance.horizon + 1):
        N = trace.consumed_before(t)
        R = instance.consumption_at(t - 1) @ schedule.virtual_rewards(items, N)
        if multi:
            depleted = N[items.resource] >= items.inventory[items.resource]
            R = R[~instance.incidence()[:, depleted].any(axis=1)]
        gamma[t - 1] = R.max() if len(R) else 0.0
    return DualCertificate(np.asarray(lam, dtype=float), gamma)


def check_dual_feasibility(cert: DualCertificate, instance: Instance, tol: float = CERT_TOL) -> FeasibilityReport:
    """Check every constraint of the dual LP and report the worst violation.

    Single-reward form: ``0 <= lam_i <= r_i``, ``gamma_t >= 0`` and
    ``gamma_t >= sum_i q_i(x^t, a) (r_i - lam_i)`` for every action. The
    multi-price form drops the upper bound on ``lam`` and charges each item
    its price minus its resource's ``lam``.
    """
    items = instance.items
    lam = np.asarray(cert.lam, dtype=float)
    gamma = np.asarray(cert.gamma, dtype=float)
    if lam.shape != (instance.n,) or gamma.shape != (instance.horizon,):
        raise MalformedInstanceError("certificate dimensions do not match the instance")
    worst, where, count = 0.0, None, 0

    def note(v, loc):
        nonlocal worst, where, count
        if v > tol:
            count += 1
        if v > worst:
            worst, where = float(v), loc

    for i in range(instance.n):
        note(-lam[i], ("lam_nonneg", i))
        if instance.mode != MULTI:
            note(lam[i] - items.price[i], ("lam_le_reward", i))
    for t in range(instance.horizon):
        note(-gamma[t], ("gamma_nonneg", t + 1))
    margin = items.price - lam[items.resource]
    if instance.horizon:
        contexts, period_class, _ = instance.context_classes()
        best = []
        for x in contexts:
            R = instance.law.consumption_matrix(x) @ margin
            a = int(np.argmax(R))
            best.append((float(R[a]), a))
        for t in range(instance.horizon):
            val, a = best[period_class[t]]
            v = val - gamma[t]
            if v > tol:
                count += 1
            if v > worst:
                worst, where = float(v), ("period", a, t + 1)
    return FeasibilityReport(count == 0, worst, where, count)


def certificate_from_lp(solution: LpSolution, problem: LpProblem, instance: Instance) -> DualCertificate:
    """Map the solver's row duals to ``(lam, gamma)`` in the paper-form dual."""
    y = solution.duals
    period = y[problem.row_blocks["period"]]
    gamma = period[problem.period_class] if instance.horizon else np.zeros(0)
    if problem.mode == MULTI:
        lam = y[problem.row_blocks["inventory"]]
    else:
        lam = np.minimum(y[problem.row_blocks["cap"]], instance.items.price)
    return DualCertificate(np.maximum(lam, 0.0), np.maximum(gamma, 0.0))
