"""Exact backward induction for tiny instances, an independent check on the LP bound."""

from __future__ import annotations

import numpy as np

from ..errors import SizeError
from ..model import MULTI, Instance

MAX_WORK = 10**7


def state_space_size(instance: Instance) -> int:
    return int(np.prod(instance.inventory + 1))


def brute_force_opt(instance: Instance, max_work: int = MAX_WORK) -> float:
    """Expected reward of the best non-anticipating policy that knows the law and the arrivals.

    The state is the vector of consumed counters. Every period the policy may
    also decline to act. The work budget ``T * states * |A|`` is checked up
    front; exceeding it raises :class:`SizeError`.
    """
    T = instance.horizon
    inv = instance.inventory.astype(np.int64)
    n = instance.n
    n_states = state_space_size(instance)
    n_act = len(instance.actions)
    work = T * n_states * max(n_act, 1)
    if work > max_work:
        raise SizeError(f"brute force needs {work} state-action evaluations (limit {max_work})")
    if T == 0:
        return 0.0

    items = instance.items
    strides = np.cumprod(np.concatenate([[1], inv[:-1] + 1])).astype(np.int64)
    grid = np.stack(np.unravel_index(np.arange(n_states), tuple(inv + 1), order="F"), axis=1)
    open_res = grid < inv  # (S, n) resource still has stock
    multi = instance.mode == MULTI
    if multi:
        depleted_items = ~open_res[:, items.resource]
        allowed = ~((depleted_items.astype(np.int8) @ instance.incidence().T.astype(np.int8)) > 0)
    contexts, period_class, _ = instance.context_classes()
    dists = [[instance.law.distribution(x, a) for a in range(n_act)] for x in contexts]

    value = np.zeros(n_states)
    state_idx = np.arange(n_states)
    for t in range(T - 1, -1, -1):
        best = value.copy()  # decline to act
        for a, dist in enumerate(dists[period_class[t]]):
            q = np.zeros(n_states)
            for outcome, p in dist:
                if p == 0:
                    continue
                nxt = state_idx.copy()
                gain = np.zeros(n_states)
                for j in outcome:
                    i = items.resource[j]
                    ok = open_res[:, i]
                    nxt = nxt + ok * strides[i]
                    gain = gain + ok * items.price[j]
                q += p * (gain + value[nxt])
            if multi:
                q = np.where(allowed[:, a], q, -np.inf)
            best = np.maximum(best, q)
        value = best
    return float(value[0])
