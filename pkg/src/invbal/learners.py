"""Oracles for the auxiliary (inventory-free) bandit problem.

Every learner implements

    select(t, x, virtual_rewards, allowed) -> action index (or -1 for null)
    update(t, x, action, outcome) -> None

where ``t`` is the 1-based period, ``allowed`` is a boolean mask over the
action family (``None`` means every action), and ``outcome`` is the sparse
tuple of consumed items. Ties are broken toward the lowest action index,
i.e. lexicographic order of the action family.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError
from .model import MULTI, NULL_ACTION, Instance, MatchingLaw, MnlLaw

log = logging.getLogger(__name__)

CONFIDENCE_SCALE = 72.0


def rad(alpha, mu, count):
    """Confidence radius ``sqrt(alpha * mu / N) + (alpha + 1) / N``; vectorized."""
    count = np.asarray(count, dtype=float)
    if (count <= 0).any():
        raise ValueError("rad needs a positive count")
    out = np.sqrt(alpha * np.asarray(mu, dtype=float) / count) + (alpha + 1.0) / count
    return float(out) if out.ndim == 0 else out


def _masked_argmax(scores, allowed):
    if allowed is not None:
        if not allowed.any():
            return NULL_ACTION
        scores = np.where(allowed, scores, -np.inf)
    return int(np.argmax(scores))


@dataclass
class UcbState:
    """Per-arm eligible-play counts |D| and success sums, shape (n, K)."""

    counts: np.ndarray
    successes: np.ndarray

    @classmethod
    def empty(cls, n, K):
        return cls(np.zeros((n, K), dtype=np.int64), np.zeros((n, K), dtype=np.int64))


class UcbLearner:
    """UCB oracle for the matching setting.

    Built from the shape (n, K) only, so nothing about the true click
    probabilities can reach it except through observed outcomes.
    """

    name = "ucb"

    def __init__(self, n: int, K: int, scale: float = CONFIDENCE_SCALE):
        if not scale > 0:
            raise ConfigError("confidence scale must be positive")
        self.n, self.K, self.scale = n, K, float(scale)
        self.state = UcbState.empty(n, K)
        self._log_base = math.log(2 * n * K)

    @classmethod
    def for_instance(cls, instance: Instance, scale: float = CONFIDENCE_SCALE, rng=None):
        if not isinstance(instance.law, MatchingLaw) or instance.mode == MULTI:
            raise ConfigError("UCB learner needs a single-reward matching instance")
        return cls(instance.law.n, instance.law.K, scale)

    def alpha(self, t: int) -> float:
        return self.scale * (self._log_base + 2.0 * math.log(t))

    def estimates(self, t: int):
        """Point estimates p-bar and radii U at period t, each shape (n, K)."""
        denom = self.state.counts + 1.0
        pbar = self.state.successes / denom
        return pbar, rad(self.alpha(t), pbar, denom)

    def indices(self, t, x, virtual_rewards):
        pbar, u = self.estimates(t)
        eligible = np.asarray(x) == 1
        scores = virtual_rewards[:, None] * (pbar + u)
        return np.where(eligible[:, None], scores, -np.inf)

    def select(self, t, x, virtual_rewards, allowed=None):
        scores = self.indices(t, x, virtual_rewards)
        if allowed is not None:
            scores = np.where(allowed.reshape(self.n, self.K), scores, -np.inf)
        flat = scores.ravel()
        best = int(np.argmax(flat))
        if flat[best] == -np.inf:
            return NULL_ACTION
        return best

    def update(self, t, x, action, outcome):
        if action == NULL_ACTION:
            return
        i, k = divmod(action, self.K)
        if x[i] == 1:
            self.state.counts[i, k] += 1
            if i in outcome:
                self.state.successes[i, k] += 1


class ClairvoyantLearner:
    """Plays the exact argmax of R^t under the true law (zero regret)."""

    name = "clairvoyant"

    def __init__(self, instance: Instance):
        self.instance = instance

    @classmethod
    def for_instance(cls, instance, rng=None, **_):
        return cls(instance)

    def select(self, t, x, virtual_rewards, allowed=None):
        q = self.instance.consumption_at(t - 1)
        return _masked_argmax(q @ virtual_rewards, allowed)

    def update(self, t, x, action, outcome):
        pass


def clairvoyant_select(law, x, virtual_rewards, allowed=None) -> int:
    """Exact argmax over the action family of the expected auxiliary reward."""
    q = law.consumption_matrix(np.asarray(x, dtype=float))
    return _masked_argmax(q @ np.asarray(virtual_rewards, dtype=float), allowed)


# ------------------------------------------------------------------ Thompson / MNL


@dataclass
class TsMnlState:
    """Laplace summary of the joint posterior over all item vectors.

    ``mode`` has shape (m, D); ``curvature`` is the (m*D, m*D) negative
    Hessian of the log-posterior at the mode.
    """

    mode: np.ndarray
    curvature: np.ndarray
    chol: np.ndarray | None = None
    xs: list = field(default_factory=list)
    offered: list = field(default_factory=list)
    choices: list = field(default_factory=list)
    degraded: bool = False


class TsMnlLearner:
    """Thompson sampling for MNL assortments with a box-uniform prior.

    The prior on each coordinate is uniform on ``center +- halfwidth``. The
    posterior is approximated by a Gaussian at the mode of the log-likelihood
    plus a log-barrier for the box, weighted so that with no data the
    Gaussian's variance equals the uniform prior's (halfwidth^2 / 3). Samples
    are clipped into the box. A zero halfwidth collapses to the known-parameter
    greedy policy.
    """

    name = "ts"
    BARRIER = 1.5

    def __init__(self, center, halfwidth, v0, incidence, rng, newton_tol=1e-8, max_iter=100):
        self.center = np.array(center, dtype=float)
        self.m, self.dim = self.center.shape
        self.halfwidth = float(halfwidth)
        if self.halfwidth < 0:
            raise ConfigError("prior half-width must be nonnegative")
        self.v0 = float(v0)
        self.incidence = np.asarray(incidence, dtype=float)
        self.rng = rng
        self.newton_tol = newton_tol
        self.max_iter = max_iter
        self.lo = self.center - self.halfwidth
        self.hi = self.center + self.halfwidth
        self.state = self._prior_state()

    @classmethod
    def for_instance(cls, instance: Instance, rng, center, halfwidth, v0=None, **kw):
        if not isinstance(instance.law, MnlLaw):
            raise ConfigError("Thompson-sampling learner needs an MNL instance")
        v0 = instance.law.v0 if v0 is None else v0
        return cls(center, halfwidth, v0, instance.incidence(), rng, **kw)

    def _prior_state(self):
        size = self.m * self.dim
        if self.halfwidth == 0:
            return TsMnlState(self.center.copy(), np.full((size, size), np.inf))
        curv = np.eye(size) * (2 * self.BARRIER / self.halfwidth ** 2)
        return TsMnlState(self.center.copy(), curv, np.linalg.cholesky(curv))

    # -- selection

    def sample_parameters(self):
        s = self.state
        if self.halfwidth == 0:
            return s.mode
        z = self.rng.standard_normal(self.m * self.dim)
        # L^{-T} z has covariance (L L^T)^{-1}, the inverse curvature
        step = solve_triangular(s.chol, z, lower=True, trans="T", check_finite=False)
        beta = s.mode + step.reshape(self.m, self.dim)
        return np.clip(beta, self.lo, self.hi)

    def expected_revenues(self, x, beta, virtual_rewards):
        u = beta @ x
        c = max(float(u.max()), math.log(self.v0))
        w = np.exp(u - c)
        v = self.v0 * math.exp(-c)
        return (self.incidence @ (w * virtual_rewards)) / (v + self.incidence @ w)

    def select(self, t, x, virtual_rewards, allowed=None):
        beta = self.sample_parameters()
        return _masked_argmax(self.expected_revenues(x, beta, virtual_rewards), allowed)

    # -- posterior

    def update(self, t, x, action, outcome):
        if action == NULL_ACTION:
            return
        offered = self.incidence[action] > 0
        if not offered.any():
            return
        s = self.state
        s.xs.append(np.asarray(x, dtype=float))
        s.offered.append(offered)
        s.choices.append(outcome[0] if outcome else -1)
        if self.halfwidth > 0:
            self.refit()

    def _objective(self, beta, X, S, C):
        u = X @ beta.T
        c = np.maximum(np.where(S, u, -np.inf).max(axis=1), math.log(self.v0))
        w = np.where(S, np.exp(u - c[:, None]), 0.0)
        den = self.v0 * np.exp(-c) + w.sum(axis=1)
        chosen = np.where(C >= 0, u[np.arange(len(C)), np.maximum(C, 0)] - c, math.log(self.v0) - c)
        nll = -(chosen - np.log(den)).sum()
        gap_lo, gap_hi = beta - self.lo, self.hi - beta
        if (gap_lo <= 0).any() or (gap_hi <= 0).any():
            return math.inf, None
        barrier = -self.BARRIER * (np.log(gap_lo).sum() + np.log(gap_hi).sum())
        return nll + barrier, w / den[:, None]

    def _derivatives(self, beta, X, C, P):
        m, d = self.m, self.dim
        onehot = np.zeros_like(P)
        rows = np.nonzero(C >= 0)[0]
        onehot[rows, C[rows]] = 1.0
        grad = -((onehot - P).T @ X)
        gap_lo, gap_hi = beta - self.lo, self.hi - beta
        grad += self.BARRIER * (-1.0 / gap_lo + 1.0 / gap_hi)
        W = np.einsum("nj,jk->njk", P, np.eye(m)) - P[:, :, None] * P[:, None, :]
        XX = (X[:, :, None] * X[:, None, :]).reshape(len(X), d * d)
        H = (W.reshape(len(X), m * m).T @ XX).reshape(m, m, d, d).transpose(0, 2, 1, 3).reshape(m * d, m * d)
        H[np.diag_indices(m * d)] += (self.BARRIER * (1.0 / gap_lo ** 2 + 1.0 / gap_hi ** 2)).ravel()
        return grad.ravel(), H

    def refit(self):
        """Damped Newton on the negative log-posterior, warm-started at the current mode."""
        s = self.state
        X = np.array(s.xs)
        S = np.array(s.offered)
        C = np.array(s.choices, dtype=np.int64)
        beta = s.mode.copy()
        f, P = self._objective(beta, X, S, C)
        for _ in range(self.max_iter):
            g, H = self._derivatives(beta, X, C, P)
            try:
                L = np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                break
            step = solve_triangular(L, solve_triangular(L, -g, lower=True, check_finite=False), lower=True, trans="T",
                                    check_finite=False)
            decrement = -(g @ step)
            if decrement / 2 <= self.newton_tol:
                s.mode, s.curvature, s.chol, s.degraded = beta, H, L, False
                return True
            # largest step keeping the iterate strictly inside the box
            step = step.reshape(self.m, self.dim)
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.where(step > 0, (self.hi - beta) / step, np.where(step < 0, (self.lo - beta) / step, np.inf))
            eta = min(1.0, 0.99 * float(lim.min()))
            while eta > 1e-12:
                cand = beta + eta * step
                fc, Pc = self._objective(cand, X, S, C)
                if fc <= f - 0.25 * eta * decrement:
                    break
                eta *= 0.5
            else:
                break
            beta, f, P = cand, fc, Pc
        s.degraded = True
        log.warning("TS posterior fit did not converge after %d iterations; keeping previous summary", self.max_iter)
        return False


LEARNERS = {"ucb": UcbLearner, "clairvoyant": ClairvoyantLearner, "ts": TsMnlLearner}


def make_learner(spec: dict, instance: Instance, rng: np.random.Generator):
    """Build a learner from a config mapping such as ``{"name": "ucb", "scale": 72}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in LEARNERS:
        raise ConfigError(f"unknown learner {name!r}")
    return LEARNERS[name].for_instance(instance, rng=rng, **spec)
