"""Inventory-balancing penalties and competitive-factor constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import MalformedInstanceError, StateCorruptionError

_EXPM1_ONE = math.expm1(1.0)
KNOT_TOL = 1e-12


def psi(w):
    """Convex hedging penalty ``(e^w - 1) / (e - 1)`` on [0, 1].

    Accepts scalars or arrays; raises ``ValueError`` outside the unit interval.
    """
    arr = np.asarray(w, dtype=float)
    if np.isnan(arr).any() or (arr < 0).any() or (arr > 1).any():
        raise ValueError(f"psi is defined on [0, 1], got {w}")
    out = np.where(arr == 1.0, 1.0, np.expm1(arr) / _EXPM1_ONE)
    return float(out) if out.ndim == 0 else out


def discounted_reward(r: float, consumed: int, inventory: int) -> float:
    """Reward ``r * (1 - psi(N / b))`` after N of b units are gone."""
    if consumed < 0 or consumed > inventory:
        raise StateCorruptionError(f"consumed units {consumed} outside [0, {inventory}]")
    if consumed == inventory:
        return 0.0
    return r * (1.0 - psi(consumed / inventory))


@dataclass(frozen=True)
class PenaltyCurve:
    """Strictly increasing piecewise-linear virtual cost on [0, 1].

    ``knots`` are depletion fractions starting at 0 and ending at 1; ``values``
    start at 0 and end at the resource's highest price.
    """

    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if w.shape != v.shape or w.ndim != 1 or len(w) < 2:
            raise MalformedInstanceError("penalty curve needs matching knot and value lists of length >= 2")
        if w[0] != 0.0 or w[-1] != 1.0 or (np.diff(w) <= 0).any():
            raise MalformedInstanceError("penalty knots must increase strictly from 0 to 1")
        if v[0] != 0.0 or (np.diff(v) <= 0).any():
            raise MalformedInstanceError("penalty values must start at 0 and increase strictly")
        object.__setattr__(self, "knots", tuple(float(a) for a in w))
        object.__setattr__(self, "values", tuple(float(a) for a in v))

    @property
    def top(self) -> float:
        return self.values[-1]

    def __call__(self, w):
        return np.interp(w, self.knots, self.values)

    @classmethod
    def scaled_psi(cls, top: float, n_knots: int = 101) -> "PenaltyCurve":
        """Tabulate ``top * psi(w)`` on an even grid; exact at the knots."""
        w = np.linspace(0.0, 1.0, n_knots)
        v = top * psi(w)
        v[-1] = top
        return cls(tuple(w), tuple(v))


@dataclass(frozen=True)
class PenaltySchedule:
    """How virtual rewards are formed from inventory counters.

    ``kind == "single"`` discounts each reward multiplicatively by psi.
    ``kind == "multi"`` subtracts a per-resource virtual cost curve from each
    price and carries the ratio constants alpha^(1) used in reporting.
    """

    kind: str = "single"
    curves: tuple[PenaltyCurve, ...] = ()
    alphas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("single", "multi"):
            raise MalformedInstanceError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "multi":
            if not self.curves or len(self.curves) != len(self.alphas):
                raise MalformedInstanceError("multi-price schedule needs one curve and one alpha per resource")
            if any(not a > 0 for a in self.alphas):
                raise MalformedInstanceError("alpha constants must be positive")

    @classmethod
    def single(cls) -> "PenaltySchedule":
        return cls("single")

    @classmethod
    def scaled_psi(cls, resources, alpha=None, n_knots: int = 101) -> "PenaltySchedule":
        """Multi-price default: Phi_i = max(P_i) * psi, one alpha for every resource."""
        curves = tuple(PenaltyCurve.scaled_psi(r.max_price, n_knots) for r in resources)
        alpha = 1.0 if alpha is None else alpha
        return cls("multi", curves, (float(alpha),) * len(curves))

    @property
    def alpha_min(self) -> float:
        return min(self.alphas) if self.alphas else 1.0

    def check(self, resources) -> None:
        if self.kind == "multi":
            if len(self.curves) != len(resources):
                raise MalformedInstanceError("schedule has a different number of curves than resources")
            for r, c in zip(resources, self.curves):
                if abs(c.top - r.max_price) > KNOT_TOL * max(1.0, r.max_price):
                    raise MalformedInstanceError(f"curve ends at {c.top}, expected max price {r.max_price}")

    def virtual_rewards(self, items, consumed: np.ndarray) -> np.ndarray:
        """Virtual reward of every item given per-resource consumed counts."""
        frac = consumed / items.inventory
        if (frac < 0).any() or (frac > 1).any():
            raise StateCorruptionError(f"consumed counts {consumed} outside [0, inventory]")
        if self.kind == "single":
            return items.price * (1.0 - psi(frac)[items.resource])
        cost = np.array([c(f) for c, f in zip(self.curves, frac)])
        return items.price - cost[items.resource]

    def dual_prices(self, items, consumed: np.ndarray) -> np.ndarray:
        """Per-resource dual value ``r_i psi(N/b)`` or ``Phi_i(N/b)`` at the given counts."""
        frac = consumed / items.inventory
        if self.kind == "single":
            first = np.searchsorted(items.resource, np.arange(len(items.inventory)))
            return items.price[first] * psi(frac)
        return np.array([c(f) for c, f in zip(self.curves, frac)])

    def to_dict(self) -> dict:
        if self.kind == "single":
            return {"kind": "single"}
        return {"kind": "multi",
                "curves": [[list(c.knots), list(c.values)] for c in self.curves],
                "alphas": list(self.alphas)}

    @classmethod
    def from_dict(cls, d: dict, resources=None) -> "PenaltySchedule":
        kind = d.get("kind", "single")
        if kind == "single":
            return cls.single()
        if kind == "scaled_psi":
            if resources is None:
                raise MalformedInstanceError("scaled_psi schedule needs the instance resources")
            return cls.scaled_psi(resources, d.get("alpha"), d.get("n_knots", 101))
        curves = tuple(PenaltyCurve(tuple(w), tuple(v)) for w, v in d["curves"])
        return cls("multi", curves, tuple(d["alphas"]))


def virtual_reward_multiprice(price: float, price_set: Sequence[float], curve: PenaltyCurve,
                              consumed: int, inventory: int) -> float:
    """Price minus the resource's virtual cost at its current depletion; may be negative."""
    if price not in tuple(price_set):
        raise MalformedInstanceError(f"price {price} not in price set {tuple(price_set)}")
    if consumed < 0 or consumed > inventory:
        raise StateCorruptionError(f"consumed units {consumed} outside [0, {inventory}]")
    return float(price - curve(consumed / inventory))


def inventory_term(b_min) -> float:
    """``(1 + b)(1 - e^{-1/b})``; tends to 1 as b grows."""
    if b_min == math.inf:
        return 1.0
    return (1.0 + b_min) * -math.expm1(-1.0 / b_min)


def competitive_factor(b_min, alpha_min: float = 1.0) -> float:
    """Multiplier on E[ALG] in the guarantee ``OPT <= factor * E[ALG] + E[REG]``.

    ``alpha_min = 1`` gives the single-price denominator ``1 - 1/e``; other
    values give the multi-price denominator ``1 - exp(-alpha_min)``.
    ``b_min = math.inf`` returns the large-inventory limit.
    """
    if b_min != math.inf and (b_min < 1 or int(b_min) != b_min):
        raise ValueError(f"b_min must be an integer >= 1, got {b_min}")
    if not alpha_min > 0:
        raise ValueError(f"alpha_min must be positive, got {alpha_min}")
    return inventory_term(b_min) / -math.expm1(-alpha_min)


def alpha_from_ratio(ratio: float) -> float:
    """Alpha constant whose ratio ``1 - exp(-alpha)`` equals ``ratio``."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    return -math.log1p(-ratio)
