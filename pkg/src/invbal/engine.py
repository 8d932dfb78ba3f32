"""The integrated inventory-balancing loop, its baselines, and regret accounting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MalformedInstanceError
from .model import MULTI, NULL_ACTION, SINGLE, Instance, InventoryState, apply_outcome
from .penalty import PenaltySchedule

GAP_TOL = 1e-9

INTEGRATED = "integrated"
GREEDY = "greedy"
CONSERVATIVE = "conservative"


@dataclass(eq=False)
class SimulationTrace:
    """Per-period record of one run. Period t (1-based) is row t-1.

    ``inventory[t-1]`` is N^t (after period t); ``gaps[t-1]`` is
    R^t(a*_t) - R^t(a^t) under the recorded virtual rewards.
    """

    policy: str
    contexts: np.ndarray
    virtual_rewards: np.ndarray
    actions: np.ndarray
    outcomes: list
    rewards: np.ndarray
    inventory: np.ndarray
    gaps: np.ndarray
    restriction: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def alg(self) -> float:
        return float(self.rewards.sum())

    @property
    def reg(self) -> float:
        return float(self.gaps.sum())

    def consumed_before(self, t: int) -> np.ndarray:
        """N^{t-1}, the counters at the start of 1-based period t."""
        if t == 1:
            return np.zeros(self.inventory.shape[1], dtype=np.int64)
        return self.inventory[t - 2]

    def final_consumed(self, n) -> np.ndarray:
        return self.inventory[-1] if self.horizon else np.zeros(n, dtype=np.int64)

    def records(self):
        """Line-delimited export: one dict per period followed by a summary."""
        for t in range(self.horizon):
            a = int(self.actions[t])
            yield {
                "t": t + 1,
                "context": self.contexts[t].tolist(),
                "virtual_rewards": self.virtual_rewards[t].tolist(),
                "action": a,
                "outcome": list(self.outcomes[t]),
                "reward": float(self.rewards[t]),
                "inventory": self.inventory[t].tolist(),
                "gap": float(self.gaps[t]),
            }
        yield {"summary": True, "policy": self.policy, "T": self.horizon, "ALG": self.alg, "REG": self.reg,
               **self.meta}

    def write_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for rec in self.records():
                f.write(json.dumps(rec) + "\n")


def _check_learner(instance, learner):
    name = getattr(learner, "name", "")
    if name == "ucb" and (instance.mode == MULTI or instance.law.kind != "matching"):
        raise ConfigError("UCB learner is only compatible with single-reward matching instances")
    if name == "ts" and instance.law.kind != "mnl":
        raise ConfigError("Thompson-sampling learner is only compatible with MNL instances")


def _simulate(instance: Instance, learner, rng: np.random.Generator, reward_rule, policy: str,
              restriction: np.ndarray | None = None) -> SimulationTrace:
    _check_learner(instance, learner)
    T, n = instance.horizon, instance.n
    items = instance.items
    m = len(items.price)
    multi = instance.mode == MULTI
    inc = instance.incidence() if multi else None
    law = instance.law

    vr = np.zeros((T, m))
    actions = np.full(T, NULL_ACTION, dtype=np.int64)
    outcomes = []
    rewards = np.zeros(T)
    inventory = np.zeros((T, n), dtype=np.int64)
    gaps = np.zeros(T)
    state = InventoryState.initial(n)
    consumed = np.zeros(n, dtype=np.int64)

    for t in range(T):
        x = instance.arrivals[t]
        r = reward_rule(consumed)
        allowed = restriction
        if multi:
            depleted_items = consumed[items.resource] >= items.inventory[items.resource]
            offerable = ~(inc[:, depleted_items].any(axis=1))
            allowed = offerable if allowed is None else (allowed & offerable)
        a = learner.select(t + 1, x, r, allowed)
        if a != NULL_ACTION and allowed is not None and not allowed[a]:
            raise MalformedInstanceError(f"learner chose disallowed action {a} in period {t + 1}")
        gap = period_gap(instance.consumption_at(t) @ r, allowed, a, t + 1)
        y = law.sample(x, a, rng)
        earned, state = apply_outcome(state, y, instance.resources)
        consumed = np.array(state.consumed, dtype=np.int64)
        learner.update(t + 1, x, a, y)

        vr[t] = r
        actions[t] = a
        outcomes.append(y)
        rewards[t] = earned
        inventory[t] = consumed
        gaps[t] = gap

    return SimulationTrace(policy, instance.arrivals, vr, actions, outcomes, rewards, inventory, gaps,
                           restriction, {"learner": getattr(learner, "name", type(learner).__name__)})


def run_integrated(instance: Instance, learner, schedule: PenaltySchedule | None = None,
                   rng: np.random.Generator | None = None) -> SimulationTrace:
    """Inventory-balancing algorithm: feed penalized virtual rewards to the learner each period."""
    schedule = schedule or _default_schedule(instance)
    _check_schedule(instance, schedule)
    rng = rng if rng is not None else np.random.default_rng()
    items = instance.items
    return _simulate(instance, learner, rng, lambda N: schedule.virtual_rewards(items, N), INTEGRATED)


def run_greedy_baseline(instance: Instance, learner, rng: np.random.Generator | None = None) -> SimulationTrace:
    """Same loop with undiscounted rewards, zeroed on depleted resources."""
    rng = rng if rng is not None else np.random.default_rng()
    items = instance.items

    def rule(N):
        return items.price * (N[items.resource] < items.inventory[items.resource])

    return _simulate(instance, learner, rng, rule, GREEDY)


def conservative_restriction(instance: Instance) -> np.ndarray:
    """Mask of assortments that only contain each resource's higher price."""
    if instance.mode != MULTI or any(len(r.prices) != 2 for r in instance.resources):
        raise ConfigError("conservative baseline needs a multi-price instance with exactly two prices per resource")
    items = instance.items
    low = np.zeros(len(items.price), dtype=bool)
    low[np.searchsorted(items.resource, np.arange(instance.n))] = True
    return ~(instance.incidence()[:, low].any(axis=1))


def run_conservative_baseline(instance: Instance, learner, schedule: PenaltySchedule | None = None,
                              rng: np.random.Generator | None = None) -> SimulationTrace:
    """Integrated algorithm restricted to assortments of high-price combinations."""
    restriction = conservative_restriction(instance)
    schedule = schedule or _default_schedule(instance)
    _check_schedule(instance, schedule)
    rng = rng if rng is not None else np.random.default_rng()
    items = instance.items
    return _simulate(instance, learner, rng, lambda N: schedule.virtual_rewards(items, N), CONSERVATIVE,
                     restriction)


def _default_schedule(instance):
    if instance.mode == SINGLE:
        return PenaltySchedule.single()
    return PenaltySchedule.scaled_psi(instance.resources)


def _check_schedule(instance, schedule):
    if (instance.mode == SINGLE) != (schedule.kind == "single"):
        raise ConfigError(f"schedule kind {schedule.kind!r} does not match instance mode {instance.mode!r}")
    schedule.check(instance.resources)


def compute_regret(trace: SimulationTrace, instance: Instance, schedule: PenaltySchedule | None = None) -> float:
    """Recompute the regret sum from the recorded virtual rewards and the true law.

    The per-period allowed set is rebuilt from the recorded inventory counters
    rather than read back from the loop.
    """
    if trace.virtual_rewards is None or len(trace.virtual_rewards) != trace.horizon:
        raise MalformedInstanceError("trace has no virtual rewards")
    if trace.horizon != instance.horizon:
        raise MalformedInstanceError("trace and instance horizons differ")
    items = instance.items
    multi = instance.mode == MULTI
    total = 0.0
    for t in range(1, trace.horizon + 1):
        R = instance.consumption_at(t - 1) @ trace.virtual_rewards[t - 1]
        allowed = np.ones(len(R), dtype=bool) if trace.restriction is None else trace.restriction.copy()
        if multi:
            N = trace.consumed_before(t)
            depleted = N[items.resource] >= items.inventory[items.resource]
            allowed &= ~(instance.incidence()[:, depleted].any(axis=1))
        total += period_gap(R, allowed, int(trace.actions[t - 1]), t)
    return total


def period_gap(R: np.ndarray, allowed: np.ndarray | None, a: int, t: int) -> float:
    """R^t(a*) - R^t(a), with a* the best allowed action; clamped at zero within GAP_TOL."""
    if allowed is None:
        best = float(R.max()) if len(R) else 0.0
    else:
        best = float(R[allowed].max()) if allowed.any() else 0.0
    if a == NULL_ACTION:
        best, got = max(best, 0.0), 0.0
    else:
        got = float(R[a])
    gap = best - got
    if gap < -GAP_TOL:
        raise MalformedInstanceError(f"negative regret gap {gap} in period {t}")
    return max(gap, 0.0)
