"""Shared builders for tests."""

import numpy as np

from invbal.model import Instance, Resource, TabularLaw


def tabular_instance(rows, inventory, rewards, arrivals, n_items=None):
    """Build a single-reward tabular instance from ``rows[c][a] = [(items, p), ...]``."""
    n_items = len(rewards) if n_items is None else n_items
    contexts = np.arange(len(rows), dtype=float)[:, None]
    n_act = len(rows[0])
    table = {(c, a): rows[c][a] for c in range(len(rows)) for a in range(n_act)}
    law = TabularLaw(contexts, list(range(n_act)), table, n_items)
    resources = tuple(Resource(b, reward=r) for b, r in zip(inventory, rewards))
    return Instance(resources, law, np.asarray(arrivals, dtype=float)[:, None])
