"""Instance generators: matching, the adversarial lower-bound family, random tabular, and hotel/MNL."""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from importlib import resources as _res
from typing import Sequence

import numpy as np

from .errors import ConfigError, MalformedInstanceError
from .model import MULTI, SINGLE, Instance, MatchingLaw, MnlLaw, Resource, TabularLaw, assortment_family, mnl_choice_prob

__all__ = [
    "HOTEL_PRICES", "HotelParams", "HotelScenario", "LowerBoundParams", "LowerBoundSecret", "draw_hotel_scenario",
    "gen_hotel_instance", "gen_lower_bound_instance", "gen_matching_instance", "hotel_instance",
    "load_arrival_pool", "load_hotel_data", "mnl_choice_prob", "random_matching_instance", "random_tabular_instance",
    "scaled_inventory",
]


# ------------------------------------------------------------------ matching


def gen_matching_instance(n: int, K: int, b, T: int, p, contexts, rewards=None) -> Instance:
    """Matching instance with click law ``p[i, k] * x_i``.

    ``b`` and ``rewards`` may be scalars or per-resource sequences; rewards
    default to 1.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (n, K):
        raise MalformedInstanceError(f"click table has shape {p.shape}, expected {(n, K)}")
    contexts = np.asarray(contexts, dtype=float).reshape(-1, n) if T else np.zeros((0, n))
    if len(contexts) != T:
        raise MalformedInstanceError(f"{len(contexts)} contexts for horizon {T}")
    b = np.broadcast_to(np.asarray(b), (n,))
    rewards = np.broadcast_to(np.asarray(1.0 if rewards is None else rewards, dtype=float), (n,))
    resources = tuple(Resource(int(bi), reward=float(ri)) for bi, ri in zip(b, rewards))
    return Instance(resources, MatchingLaw(p), contexts, SINGLE)


def random_matching_instance(rng: np.random.Generator, n_max=4, K_max=3, T_max=50, b_max=5,
                             reward_range=(0.5, 5.0)) -> Instance:
    """Small matching instance with random shape, rewards, clicks and binary contexts."""
    n = int(rng.integers(1, n_max + 1))
    K = int(rng.integers(1, K_max + 1))
    T = int(rng.integers(1, T_max + 1))
    b = rng.integers(1, b_max + 1, size=n)
    rewards = rng.uniform(*reward_range, size=n)
    p = rng.uniform(0, 1, size=(n, K))
    contexts = rng.integers(0, 2, size=(T, n))
    return gen_matching_instance(n, K, b, T, p, contexts, rewards)


def random_tabular_instance(rng: np.random.Generator, n_max=3, n_actions_max=3, n_contexts_max=3, T_max=8,
                            b_max=3, deterministic=False) -> Instance:
    """Small single-reward instance whose outcomes may consume several resources at once.

    With ``deterministic=True`` each (context, action) cell has one outcome
    of probability 1.
    """
    n = int(rng.integers(1, n_max + 1))
    n_act = int(rng.integers(1, n_actions_max + 1))
    n_ctx = int(rng.integers(1, n_contexts_max + 1))
    T = int(rng.integers(1, T_max + 1))
    contexts = np.arange(n_ctx, dtype=float)[:, None]
    table = {}
    for c in range(n_ctx):
        for a in range(n_act):
            support = sorted({tuple(np.nonzero(rng.random(n) < 0.5)[0]) for _ in range(1 if deterministic else 3)})
            w = np.ones(1) if deterministic else rng.dirichlet(np.ones(len(support)))
            w = _normalized(w)
            table[(c, a)] = list(zip(support, w.tolist()))
    law = TabularLaw(contexts, list(range(n_act)), table, n)
    resources = tuple(Resource(int(rng.integers(1, b_max + 1)), reward=float(rng.uniform(0.5, 5.0)))
                      for _ in range(n))
    arrivals = contexts[rng.integers(0, n_ctx, size=T)]
    return Instance(resources, law, arrivals, SINGLE)


def _normalized(w):
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    w[-1] = 1.0 - math.fsum(w[:-1])
    return np.clip(w, 0.0, 1.0)


# ------------------------------------------------------------------ lower bound


@dataclass(frozen=True)
class LowerBoundParams:
    n: int
    b: int
    K: int
    eps: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("lower-bound instance needs n >= 1")
        if not self.b >= self.K >= 3:
            raise ConfigError(f"lower-bound instance needs b >= K >= 3, got b={self.b}, K={self.K}")
        if self.eps is not None and not 0 < self.eps <= 0.5:
            raise ConfigError("eps override must lie in (0, 1/2]")

    @property
    def gap(self) -> float:
        """Click-probability lift of the secret arm."""
        return self.eps if self.eps is not None else math.sqrt(self.K / (self.b * self.n)) / 34.0

    @property
    def horizon(self) -> int:
        return 2 * self.b * self.n

    @property
    def opt(self) -> int:
        return self.b * self.n


class LowerBoundSecret:
    """Hidden permutation scores and secret arms, readable only through :meth:`reveal`.

    Learners receive the instance shape, never this object.
    """

    __slots__ = ("_payload",)

    def __init__(self, scores, arms, eps):
        object.__setattr__(self, "_payload", (tuple(int(s) for s in scores), tuple(int(a) for a in arms), float(eps)))

    def __setattr__(self, name, value):
        raise AttributeError("lower-bound secret is read-only")

    def __repr__(self):
        return "LowerBoundSecret(<sealed>)"

    def reveal(self):
        """Return ``(scores, arms, eps)``: ``scores[i]`` in 1..n is pi(i), ``arms[i]`` the secret arm."""
        scores, arms, eps = self._payload
        return np.array(scores), np.array(arms), eps


def gen_lower_bound_instance(params: LowerBoundParams, rng: np.random.Generator):
    """Randomized hard instance for learning-based allocation.

    Every resource has inventory b and reward 1. Customers come in n groups
    of 2b; a group-j customer can use resource i only if pi(i) >= j, so
    later groups see a shrinking subset. A usable arm clicks with
    probability ``(1 - eps)/2``, plus ``eps`` on the resource's secret arm.
    Returns ``(instance, secret)``.
    """
    n, b, K = params.n, params.b, params.K
    eps = params.gap
    scores = rng.permutation(n) + 1
    arms = rng.integers(0, K, size=n)
    p = np.full((n, K), (1.0 - eps) / 2.0)
    p[np.arange(n), arms] += eps
    groups = (scores[None, :] >= np.arange(1, n + 1)[:, None]).astype(float)
    contexts = np.repeat(groups, 2 * b, axis=0)
    instance = gen_matching_instance(n, K, b, params.horizon, p, contexts)
    return instance, LowerBoundSecret(scores, arms, eps)


# ------------------------------------------------------------------ hotel


HOTEL_PRICES = ((307.0, 361.0), (304.0, 361.0), (384.0, 496.0), (306.0, 342.0))
HOTEL_CATEGORIES = ("king", "queen", "suite", "two_double")
HOTEL_DATA_FILE = "hotel_synthetic.json"


@functools.lru_cache(maxsize=8)
def load_hotel_data(path=None) -> dict:
    """Synthetic hotel data: prior centers, base inventories, feature encoding and arrival pool.

    The parsed document is cached per path; treat it as read-only.
    """
    if path is None:
        text = _res.files("invbal").joinpath("data", HOTEL_DATA_FILE).read_text()
        return json.loads(text)
    with open(path) as f:
        return json.load(f)


def load_arrival_pool(path=None) -> list[np.ndarray]:
    data = load_hotel_data(path)
    pool = [np.asarray(p, dtype=float) for p in data["paths"]]
    if not pool:
        raise ConfigError("arrival pool is empty")
    return pool


def scaled_inventory(base, scale: float) -> tuple[int, ...]:
    """``ceil(base * scale)`` per resource, at least 1; a tiny guard stops 40 * 0.1 rounding up to 5."""
    if not scale > 0:
        raise ConfigError(f"inventory scale must be positive, got {scale}")
    return tuple(max(1, math.ceil(b * scale - 1e-9)) for b in base)


@dataclass(frozen=True)
class HotelParams:
    """Hotel assortment setup. ``None`` fields fall back to the shipped synthetic data."""

    prices: tuple = HOTEL_PRICES
    double_high: bool = True
    beta_center: tuple | None = None
    eps_prior: float = 1.0
    v0: float = 40.0
    scale: float = 0.3
    base_inventory: tuple | None = None
    max_assortment: int | None = None
    data_path: str | None = None

    def __post_init__(self):
        if any(p <= 0 for pair in self.prices for p in pair):
            raise ConfigError("hotel prices must be positive")
        if self.eps_prior < 0:
            raise ConfigError("prior half-width must be nonnegative")
        if not self.v0 > 0:
            raise ConfigError("no-purchase weight must be positive")
        if not self.scale > 0:
            raise ConfigError("inventory scale must be positive")

    def price_sets(self) -> tuple[tuple[float, ...], ...]:
        out = []
        for pair in self.prices:
            pair = tuple(float(p) for p in pair)
            if self.double_high:
                pair = pair[:-1] + (2.0 * pair[-1],)
            out.append(pair)
        return tuple(out)

    def center(self) -> np.ndarray:
        if self.beta_center is not None:
            return np.asarray(self.beta_center, dtype=float)
        return np.asarray(load_hotel_data(self.data_path)["beta_center"], dtype=float)

    def base(self) -> tuple[int, ...]:
        if self.base_inventory is not None:
            return tuple(int(b) for b in self.base_inventory)
        return tuple(int(b) for b in load_hotel_data(self.data_path)["base_inventory"])

    def family(self, n_items: int):
        return assortment_family(n_items, self.max_assortment)


@dataclass(frozen=True)
class HotelScenario:
    """One draw of the latent vectors and the arrival path, shared across inventory scales."""

    beta: np.ndarray
    path_index: int
    arrivals: np.ndarray
    law: MnlLaw = field(repr=False)


def draw_hotel_scenario(params: HotelParams, rng: np.random.Generator, pool=None) -> HotelScenario:
    """Draw beta* uniformly from the prior box, then one arrival path uniformly from the pool."""
    pool = load_arrival_pool(params.data_path) if pool is None else pool
    if len(pool) == 0:
        raise ConfigError("arrival pool is empty")
    center = params.center()
    beta = center + rng.uniform(-params.eps_prior, params.eps_prior, size=center.shape) if params.eps_prior else center
    k = int(rng.integers(len(pool)))
    law = MnlLaw(beta, params.v0, params.family(center.shape[0]))
    return HotelScenario(beta, k, np.asarray(pool[k], dtype=float), law)


def hotel_instance(params: HotelParams, scenario: HotelScenario, scale: float | None = None) -> Instance:
    scale = params.scale if scale is None else scale
    inv = scaled_inventory(params.base(), scale)
    prices = params.price_sets()
    if len(inv) != len(prices):
        raise ConfigError("base inventory and price table disagree on the number of room categories")
    resources = tuple(Resource(b, prices=p) for b, p in zip(inv, prices))
    return Instance(resources, scenario.law, scenario.arrivals, MULTI)


def gen_hotel_instance(params: HotelParams, rng: np.random.Generator, pool: Sequence | None = None) -> Instance:
    """Multi-price MNL instance: four room categories at two prices each, eight products."""
    return hotel_instance(params, draw_hotel_scenario(params, rng, pool))
