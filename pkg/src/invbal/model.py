"""Problem primitives: resources, outcome laws, instances and inventory dynamics.

Outcomes are stored sparsely as a tuple of consumed *item* indices. In
single-reward mode the items are the resources themselves; in multi-price mode
an item is a (resource, price) combination, ordered resource-major with prices
ascending. Actions are referenced by their position in ``law.actions``; the
null action (nothing offered) is ``None`` externally and ``-1`` internally.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import MalformedInstanceError

NULL_ACTION = -1
NORMALIZATION_TOL = 1e-12

SINGLE = "single"
MULTI = "multi"


@dataclass(frozen=True)
class Resource:
    """One resource with its starting inventory and either a reward or a price set."""

    inventory: int
    reward: float | None = None
    prices: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.inventory) != self.inventory or self.inventory < 1:
            raise MalformedInstanceError(f"inventory must be a positive integer, got {self.inventory}")
        if (self.reward is None) == (self.prices is None):
            raise MalformedInstanceError("a resource needs exactly one of reward or prices")
        if self.reward is not None and not self.reward > 0:
            raise MalformedInstanceError(f"reward must be positive, got {self.reward}")
        if self.prices is not None:
            prices = tuple(float(p) for p in self.prices)
            if not prices:
                raise MalformedInstanceError("price set must be non-empty")
            if any(p < 0 for p in prices) or any(b <= a for a, b in zip(prices, prices[1:])):
                raise MalformedInstanceError(f"price set must be nonnegative and strictly ascending: {prices}")
            object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "inventory", int(self.inventory))

    @property
    def max_price(self) -> float:
        return self.reward if self.prices is None else self.prices[-1]


@dataclass(frozen=True)
class ItemTable:
    resource: np.ndarray  # item -> resource index
    price: np.ndarray  # item -> reward earned when the item is consumed
    inventory: np.ndarray  # per resource


@functools.lru_cache(maxsize=256)
def item_table(resources: tuple[Resource, ...]) -> ItemTable:
    res, price = [], []
    for i, r in enumerate(resources):
        for p in (r.reward,) if r.prices is None else r.prices:
            res.append(i)
            price.append(float(p))
    inv = np.array([r.inventory for r in resources], dtype=np.int64)
    table = ItemTable(np.array(res, dtype=np.int64), np.array(price, dtype=float), inv)
    for a in (table.resource, table.price, table.inventory):
        a.flags.writeable = False
    return table


# --------------------------------------------------------------------------- laws


class OutcomeLaw:
    """Base class for ground-truth outcome distributions rho_{x,a}.

    Subclasses provide the action family, the expected-consumption matrix
    (exact, no sampling), the full outcome distribution, and a sampler that
    draws exactly one uniform from the stream per call.
    """

    kind = "abstract"
    actions: tuple
    n_items: int

    def __init__(self):
        self._action_index = {a: j for j, a in enumerate(self.actions)}

    def action_index(self, action) -> int:
        if action is None:
            return NULL_ACTION
        try:
            return self._action_index[_hashable(action)]
        except KeyError:
            raise MalformedInstanceError(f"unknown action {action!r}") from None

    def check_context(self, x: np.ndarray) -> None:
        pass

    def consumption_matrix(self, x: np.ndarray) -> np.ndarray:
        """Expected consumption of every item under every action, shape (|A|, n_items)."""
        raise NotImplementedError

    def consumption(self, x: np.ndarray, a: int) -> np.ndarray:
        if a == NULL_ACTION:
            return np.zeros(self.n_items)
        return self.consumption_matrix(x)[a]

    def distribution(self, x: np.ndarray, a: int) -> list[tuple[tuple[int, ...], float]]:
        raise NotImplementedError

    def sample(self, x: np.ndarray, a: int, rng: np.random.Generator) -> tuple[int, ...]:
        if a == NULL_ACTION:
            return ()
        u = rng.random()
        acc = 0.0
        dist = self.distribution(x, a)
        for items, prob in dist:
            acc += prob
            if u < acc:
                return items
        return dist[-1][0]

    @property
    def incidence(self) -> np.ndarray:
        """Boolean (|A|, n_items) matrix of the items each action offers."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _hashable(action):
    if isinstance(action, list):
        return tuple(_hashable(a) for a in action)
    return action


class MatchingLaw(OutcomeLaw):
    """Click law of the matching setting: action (i, k) consumes item i w.p. x_i * p[i, k]."""

    kind = "matching"

    def __init__(self, p):
        p = np.array(p, dtype=float)
        if p.ndim != 2 or p.size == 0:
            raise MalformedInstanceError("click probabilities must be an (n, K) table")
        if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
            raise MalformedInstanceError("click probabilities must lie in [0, 1]")
        p.flags.writeable = False
        self.p = p
        self.n, self.K = p.shape
        self.n_items = self.n
        self.actions = tuple((i, k) for i in range(self.n) for k in range(self.K))
        self._arm_resource = np.repeat(np.arange(self.n), self.K)
        super().__init__()

    def check_context(self, x):
        if x.shape != (self.n,) or not np.isin(x, (0.0, 1.0)).all():
            raise MalformedInstanceError(f"matching contexts must be binary of length {self.n}")

    def consumption_matrix(self, x):
        q = np.zeros((self.n * self.K, self.n))
        q[np.arange(self.n * self.K), self._arm_resource] = (self.p * x[:, None]).ravel()
        return q

    def consumption(self, x, a):
        q = np.zeros(self.n)
        if a != NULL_ACTION:
            i, k = self.actions[a]
            q[i] = x[i] * self.p[i, k]
        return q

    def click_probability(self, x, a) -> float:
        i, k = self.actions[a]
        return float(x[i] * self.p[i, k])

    def distribution(self, x, a):
        if a == NULL_ACTION:
            return [((), 1.0)]
        i, _ = self.actions[a]
        q = self.click_probability(x, a)
        return [((i,), q), ((), 1.0 - q)]

    def sample(self, x, a, rng):
        if a == NULL_ACTION:
            return ()
        u = rng.random()
        i, _ = self.actions[a]
        return (i,) if u < self.click_probability(x, a) else ()

    @property
    def incidence(self):
        inc = np.zeros((len(self.actions), self.n), dtype=bool)
        inc[np.arange(len(self.actions)), self._arm_resource] = True
        return inc

    def to_dict(self):
        return {"kind": self.kind, "p": self.p.tolist()}


def assortment_family(n_items, max_size=None, item_resource=None, one_per_resource=False):
    """All assortments (sorted item tuples) under the given restrictions, lexicographically ordered."""
    max_size = n_items if max_size is None else max_size
    family = []
    for size in range(max_size + 1):
        for combo in itertools.combinations(range(n_items), size):
            if one_per_resource and item_resource is not None:
                owners = [item_resource[j] for j in combo]
                if len(set(owners)) < len(owners):
                    continue
            family.append(combo)
    return tuple(sorted(family))


def _check_downward_closed(family):
    members = set(family)
    if () not in members:
        raise MalformedInstanceError("assortment family must contain the empty assortment")
    for a in family:
        for j in range(len(a)):
            if a[:j] + a[j + 1:] not in members:
                raise MalformedInstanceError(f"assortment family is not downward-closed at {a}")


class MnlLaw(OutcomeLaw):
    """Multinomial-logit purchase law over assortments of items.

    Parameters
    ----------
    beta : array_like, shape (n_items, D)
        Latent vector per item (product); attraction is ``exp(x @ beta_j)``.
    v0 : float
        Attraction of the no-purchase option.
    actions : sequence of tuples, optional
        Downward-closed family of assortments. Defaults to all subsets.
    """

    kind = "mnl"

    def __init__(self, beta, v0, actions=None):
        beta = np.array(beta, dtype=float)
        if beta.ndim != 2:
            raise MalformedInstanceError("beta must be an (n_items, D) array")
        if not np.isfinite(beta).all():
            raise MalformedInstanceError("beta must be finite")
        if not v0 > 0:
            raise MalformedInstanceError(f"no-purchase weight must be positive, got {v0}")
        beta.flags.writeable = False
        self.beta = beta
        self.v0 = float(v0)
        self.n_items, self.dim = beta.shape
        if actions is None:
            actions = assortment_family(self.n_items)
        family = tuple(sorted(tuple(sorted(int(j) for j in a)) for a in actions))
        if len(set(family)) != len(family):
            raise MalformedInstanceError("duplicate assortments in family")
        if any(j < 0 or j >= self.n_items for a in family for j in a):
            raise MalformedInstanceError("assortment references an unknown item")
        _check_downward_closed(family)
        self.actions = family
        inc = np.zeros((len(family), self.n_items), dtype=bool)
        for r, a in enumerate(family):
            inc[r, list(a)] = True
        inc.flags.writeable = False
        self._incidence = inc
        self._incidence_f = inc.astype(float)
        super().__init__()

    @property
    def incidence(self):
        return self._incidence

    def check_context(self, x):
        if x.shape != (self.dim,):
            raise MalformedInstanceError(f"assortment contexts must have length {self.dim}")
        if x[0] != 1.0:
            raise MalformedInstanceError("assortment contexts must start with the constant feature 1")

    def weights(self, x, beta=None):
        """Attractions and no-purchase weight, jointly rescaled by the max exponent."""
        u = (self.beta if beta is None else beta) @ x
        c = max(float(u.max()), math.log(self.v0))
        return np.exp(u - c), self.v0 * math.exp(-c)

    def consumption_matrix(self, x):
        w, v = self.weights(x)
        return self._incidence_f * w / (v + self._incidence_f @ w)[:, None]

    def distribution(self, x, a):
        if a == NULL_ACTION:
            return [((), 1.0)]
        items = self.actions[a]
        probs, none = mnl_choice_prob(x, items, self.beta, self.v0)
        return [((j,), float(p)) for j, p in zip(items, probs)] + [((), float(none))]

    def sample(self, x, a, rng):
        if a == NULL_ACTION:
            return ()
        u = rng.random()
        items = self.actions[a]
        if not items:
            return ()
        probs, _ = mnl_choice_prob(x, items, self.beta, self.v0)
        acc = 0.0
        for j, p in zip(items, probs):
            acc += p
            if u < acc:
                return (j,)
        return ()

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta.tolist(), "v0": self.v0,
                "actions": [list(a) for a in self.actions]}


def mnl_choice_prob(x, assortment, beta, v0):
    """Purchase probability of each offered item and the no-purchase probability.

    The exponent is shifted by ``max(x @ beta_j, log v0)`` so large utilities
    cannot overflow.
    """
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.isnan(x).any() or np.isnan(beta).any() or math.isnan(v0):
        raise ValueError("NaN in MNL inputs")
    if not v0 > 0:
        raise ValueError("no-purchase weight must be positive")
    items = list(assortment)
    if not items:
        return np.zeros(0), 1.0
    u = beta[items] @ x
    c = max(float(u.max()), math.log(v0))
    w = np.exp(u - c)
    v = v0 * math.exp(-c)
    den = v + w.sum()
    return w / den, v / den


class TabularLaw(OutcomeLaw):
    """Explicit probability table rho_{x,a}(y) over a finite context set.

    ``table[(c, a)]`` is a list of ``(items, prob)`` pairs for context index
    ``c`` (row of ``contexts``) and action index ``a``.
    """

    kind = "tabular"

    def __init__(self, contexts, actions, table, n_items):
        contexts = np.array(contexts, dtype=float)
        if contexts.ndim != 2:
            raise MalformedInstanceError("tabular contexts must be a 2-d array")
        contexts.flags.writeable = False
        self.contexts = contexts
        self.actions = tuple(_hashable(a) for a in actions)
        self.n_items = int(n_items)
        self._context_index = {c.tobytes(): j for j, c in enumerate(contexts)}
        if len(self._context_index) != len(contexts):
            raise MalformedInstanceError("duplicate tabular contexts")
        clean = {}
        for (c, a), outcomes in table.items():
            if not (0 <= c < len(contexts) and 0 <= a < len(self.actions)):
                raise MalformedInstanceError(f"table cell ({c}, {a}) out of range")
            rows = []
            for items, prob in outcomes:
                items = tuple(sorted(int(j) for j in items))
                if any(j < 0 or j >= self.n_items for j in items) or len(set(items)) != len(items):
                    raise MalformedInstanceError(f"bad outcome {items} in cell ({c}, {a})")
                if not 0 <= prob <= 1:
                    raise MalformedInstanceError(f"probability {prob} out of range in cell ({c}, {a})")
                rows.append((items, float(prob)))
            if abs(math.fsum(p for _, p in rows) - 1.0) > NORMALIZATION_TOL:
                raise MalformedInstanceError(f"cell ({c}, {a}) does not sum to 1")
            clean[(int(c), int(a))] = rows
        for c in range(len(contexts)):
            for a in range(len(self.actions)):
                if (c, a) not in clean:
                    raise MalformedInstanceError(f"missing table cell ({c}, {a})")
        self.table = clean
        self._matrices = {}
        for c in range(len(contexts)):
            q = np.zeros((len(self.actions), self.n_items))
            for a in range(len(self.actions)):
                for items, prob in clean[(c, a)]:
                    q[a, list(items)] += prob
            q.flags.writeable = False
            self._matrices[c] = q
        super().__init__()

    def context_id(self, x) -> int:
        try:
            return self._context_index[np.asarray(x, dtype=float).tobytes()]
        except KeyError:
            raise MalformedInstanceError(f"context {x} not in tabular law") from None

    def check_context(self, x):
        self.context_id(x)

    def consumption_matrix(self, x):
        return self._matrices[self.context_id(x)]

    def distribution(self, x, a):
        if a == NULL_ACTION:
            return [((), 1.0)]
        return list(self.table[(self.context_id(x), a)])

    @property
    def incidence(self):
        inc = np.zeros((len(self.actions), self.n_items), dtype=bool)
        for a, action in enumerate(self.actions):
            if isinstance(action, tuple) and all(isinstance(j, int) for j in action):
                inc[a, list(action)] = True
            else:
                for q in self._matrices.values():
                    inc[a] |= q[a] > 0
        return inc

    def to_dict(self):
        return {
            "kind": self.kind,
            "n_items": self.n_items,
            "contexts": self.contexts.tolist(),
            "actions": [list(a) if isinstance(a, tuple) else a for a in self.actions],
            "table": [
                {"context": c, "action": a, "outcomes": [[list(items), p] for items, p in rows]}
                for (c, a), rows in sorted(self.table.items())
            ],
        }


def law_from_dict(d: dict) -> OutcomeLaw:
    kind = d.get("kind")
    if kind == "matching":
        return MatchingLaw(d["p"])
    if kind == "mnl":
        return MnlLaw(d["beta"], d["v0"], [tuple(a) for a in d["actions"]] if "actions" in d else None)
    if kind == "tabular":
        table = {(e["context"], e["action"]): [(tuple(i), p) for i, p in e["outcomes"]] for e in d["table"]}
        return TabularLaw(d["contexts"], d["actions"], table, d["n_items"])
    raise MalformedInstanceError(f"unknown law kind {kind!r}")


# ------------------------------------------------------------------------ instance


@dataclass(frozen=True, eq=False)
class Instance:
    """A complete problem description.

    Parameters
    ----------
    resources : tuple of Resource
    law : OutcomeLaw
        Ground-truth outcome law; its ``actions`` is the action family.
    arrivals : ndarray, shape (T, d)
        The fixed context sequence x^1..x^T.
    mode : {"single", "multi"}
        Single-reward rule (depleted resources stay offerable, consume nothing)
        or multi-price rule (depleted combinations are never offered).
    """

    resources: tuple[Resource, ...]
    law: OutcomeLaw
    arrivals: np.ndarray
    mode: str = SINGLE
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))
        arrivals = np.array(self.arrivals, dtype=float)
        if arrivals.ndim == 1 and arrivals.size == 0:
            arrivals = arrivals.reshape(0, 0)
        if arrivals.ndim != 2:
            raise MalformedInstanceError("arrivals must be a (T, d) array")
        arrivals.flags.writeable = False
        object.__setattr__(self, "arrivals", arrivals)
        if self.mode not in (SINGLE, MULTI):
            raise MalformedInstanceError(f"unknown mode {self.mode!r}")
        if not self.resources:
            raise MalformedInstanceError("an instance needs at least one resource")
        single = [r.prices is None for r in self.resources]
        if self.mode == SINGLE and not all(single):
            raise MalformedInstanceError("single-reward mode requires a reward on every resource")
        if self.mode == MULTI and any(single):
            raise MalformedInstanceError("multi-price mode requires a price set on every resource")
        if self.law.n_items != len(self.items.price):
            raise MalformedInstanceError(
                f"law has {self.law.n_items} items but resources define {len(self.items.price)}")
        for x in arrivals:
            self.law.check_context(x)

    @property
    def items(self) -> ItemTable:
        return item_table(self.resources)

    @property
    def horizon(self) -> int:
        return len(self.arrivals)

    @property
    def n(self) -> int:
        return len(self.resources)

    @property
    def actions(self) -> tuple:
        return self.law.actions

    @property
    def inventory(self) -> np.ndarray:
        return self.items.inventory

    @property
    def b_min(self) -> int:
        return int(self.items.inventory.min())

    @property
    def r_max(self) -> float:
        return float(self.items.price.max())

    def consumption_at(self, t: int) -> np.ndarray:
        """Expected consumption matrix for period t (0-based), cached per distinct context."""
        x = self.arrivals[t]
        key = x.tobytes()
        q = self._cache.get(key)
        if q is None:
            q = self.law.consumption_matrix(x)
            q.flags.writeable = False
            self._cache[key] = q
        return q

    def incidence(self) -> np.ndarray:
        inc = self._cache.get("__incidence__")
        if inc is None:
            inc = self.law.incidence
            self._cache["__incidence__"] = inc
        return inc

    def context_classes(self):
        """Distinct contexts, the class of every period, and class multiplicities."""
        if self.horizon == 0:
            return np.zeros((0, self.arrivals.shape[1])), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        uniq, first, inverse, counts = np.unique(
            self.arrivals, axis=0, return_index=True, return_inverse=True, return_counts=True)
        # order classes by first appearance so results do not depend on lexsort order
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return uniq[order], rank[np.ravel(inverse)], counts[order]


# ----------------------------------------------------------------------- dynamics


@dataclass(frozen=True)
class InventoryState:
    """Consumed-unit counters N_i after period t."""

    consumed: tuple[int, ...]
    t: int = 0

    @classmethod
    def initial(cls, n: int) -> "InventoryState":
        return cls((0,) * n, 0)


def sample_outcome(law: OutcomeLaw, x, action, rng: np.random.Generator) -> tuple[int, ...]:
    """Draw an outcome (sparse tuple of consumed items) from rho_{x,a}."""
    return law.sample(np.asarray(x, dtype=float), law.action_index(action), rng)


def apply_outcome(state: InventoryState, outcome: Sequence[int], resources: Sequence[Resource]):
    """Consume one unit per demanded item whose resource is not depleted.

    Returns ``(reward, new_state)``. Depleted resources earn nothing and keep
    their counter at capacity.
    """
    items = item_table(tuple(resources))
    consumed = list(state.consumed)
    reward = 0.0
    for j in outcome:
        i = items.resource[j]
        if consumed[i] < items.inventory[i]:
            consumed[i] += 1
            reward += items.price[j]
    return reward, InventoryState(tuple(consumed), state.t + 1)


def dense_outcome(outcome: Sequence[int], n_items: int) -> np.ndarray:
    y = np.zeros(n_items, dtype=np.int8)
    y[list(outcome)] = 1
    return y


def expected_auxiliary_reward(law: OutcomeLaw, x, action, virtual_rewards) -> float:
    """Exact expected auxiliary reward: sum_y rho_{x,a}(y) sum_j y_j r_j."""
    r = np.asarray(virtual_rewards, dtype=float)
    if r.shape != (law.n_items,):
        raise MalformedInstanceError(f"expected {law.n_items} virtual rewards, got shape {r.shape}")
    return float(law.consumption(np.asarray(x, dtype=float), law.action_index(action)) @ r)


# -------------------------------------------------------------------- serialization


def instance_to_dict(instance: Instance) -> dict:
    resources = []
    for r in instance.resources:
        d: dict[str, Any] = {"inventory": r.inventory}
        if r.prices is None:
            d["reward"] = r.reward
        else:
            d["prices"] = list(r.prices)
        resources.append(d)
    return {
        "resources": resources,
        "mode": instance.mode,
        "horizon": instance.horizon,
        "arrivals": instance.arrivals.tolist(),
        "law": instance.law.to_dict(),
    }


def instance_from_dict(d: dict) -> Instance:
    try:
        resources = tuple(
            Resource(r["inventory"], r.get("reward"), tuple(r["prices"]) if "prices" in r else None)
            for r in d["resources"])
        arrivals = d["arrivals"]
        if len(arrivals) != d["horizon"]:
            raise MalformedInstanceError(f"horizon {d['horizon']} but {len(arrivals)} arrivals")
        law = law_from_dict(d["law"])
        if not arrivals:
            arrivals = np.zeros((0, _context_dim(law)))
        return Instance(resources, law, arrivals, d.get("mode", SINGLE))
    except KeyError as e:
        raise MalformedInstanceError(f"missing field {e}") from None


def _context_dim(law):
    if isinstance(law, MatchingLaw):
        return law.n
    if isinstance(law, MnlLaw):
        return law.dim
    return law.contexts.shape[1]


def dumps_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance))


def loads_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def load_instance(path) -> Instance:
    with open(path) as f:
        return instance_from_dict(json.load(f))


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as f:
        json.dump(instance_to_dict(instance), f)
