"""Fluid LP upper bound on the optimum and a dense revised simplex solver.

Periods sharing a context are merged into one class with a capacity row
``sum_a s_{a,c} <= |class c|``. The merged LP has the same optimum as the
per-period one (split any merged solution evenly across the class), and
its row duals give per-period duals by repetition. Pass ``aggregate=False``
for the literal one-row-per-period form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from ..errors import MalformedInstanceError, SolverError
from ..model import MULTI, Instance

FEAS_TOL = 1e-9
OPT_TOL = 1e-8


@dataclass
class LpProblem:
    """``max c @ x  s.t.  A @ x <= b,  0 <= x <= upper``.

    ``col_blocks`` / ``row_blocks`` map block names (``z``, ``s``; ``link``,
    ``cap``, ``inventory``, ``period``) to slices.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    var_names: list
    row_names: list
    upper: np.ndarray | None = None
    col_blocks: dict = field(default_factory=dict)
    row_blocks: dict = field(default_factory=dict)
    period_class: np.ndarray | None = None
    mode: str = "single"

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise MalformedInstanceError(f"inconsistent LP dimensions: A {self.A.shape}, c {self.c.shape}, b {self.b.shape}")
        if len(self.var_names) != n or len(self.row_names) != m:
            raise MalformedInstanceError("LP names do not match dimensions")


@dataclass
class LpSolution:
    value: float
    x: np.ndarray
    duals: np.ndarray
    status: str
    iterations: int
    dual_value: float

    @property
    def duality_gap(self) -> float:
        return abs(self.value - self.dual_value)


def build_primal_lp(instance: Instance, aggregate: bool = True) -> LpProblem:
    """Primal LP whose optimum is OPT for the instance (single- or multi-price form)."""
    items = instance.items
    n, n_act = instance.n, len(instance.actions)
    if aggregate:
        contexts, period_class, counts = instance.context_classes()
    else:
        contexts = instance.arrivals
        period_class = np.arange(instance.horizon)
        counts = np.ones(instance.horizon, dtype=np.int64)
    n_cls = len(contexts)
    try:
        Q = np.array([instance.law.consumption_matrix(x) for x in contexts]).reshape(n_cls, n_act, len(items.price))
    except NotImplementedError:
        raise MalformedInstanceError(f"law {instance.law.kind!r} has no exact expectations") from None

    s_names = [f"s_{a}_{c}" for c in range(n_cls) for a in range(n_act)]
    period_rows = np.zeros((n_cls, n_cls * n_act))
    for c in range(n_cls):
        period_rows[c, c * n_act:(c + 1) * n_act] = 1.0
    # per-resource consumption of each (class, action) column
    usage = np.zeros((n, n_cls * n_act))
    for i in range(n):
        usage[i] = Q[:, :, items.resource == i].sum(axis=2).ravel()
    period_names = [f"period_{c}" for c in range(n_cls)]

    if instance.mode == MULTI:
        c_vec = (Q @ items.price).ravel()
        A = np.vstack([usage, period_rows])
        b = np.concatenate([items.inventory.astype(float), counts.astype(float)])
        return LpProblem(c_vec, A, b, s_names, [f"inventory_{i}" for i in range(n)] + period_names,
                         col_blocks={"s": slice(0, len(s_names))},
                         row_blocks={"inventory": slice(0, n), "period": slice(n, n + n_cls)},
                         period_class=period_class, mode=MULTI)

    rewards = items.price  # one item per resource
    n_s = n_cls * n_act
    A = np.zeros((2 * n + n_cls, n + n_s))
    A[:n, :n] = np.eye(n)
    A[:n, n:] = -usage
    A[n:2 * n, :n] = np.eye(n)
    A[2 * n:, n:] = period_rows
    b = np.concatenate([np.zeros(n), items.inventory.astype(float), counts.astype(float)])
    c_vec = np.concatenate([rewards, np.zeros(n_s)])
    return LpProblem(c_vec, A, b, [f"z_{i}" for i in range(n)] + s_names,
                     [f"link_{i}" for i in range(n)] + [f"cap_{i}" for i in range(n)] + period_names,
                     col_blocks={"z": slice(0, n), "s": slice(n, n + n_s)},
                     row_blocks={"link": slice(0, n), "cap": slice(n, 2 * n), "period": slice(2 * n, 2 * n + n_cls)},
                     period_class=period_class)


def solve_lp(problem: LpProblem, method: str = "simplex", **kw) -> LpSolution:
    """Solve ``problem``. ``method="simplex"`` uses the in-house solver; ``"highs"`` calls scipy."""
    if method == "simplex":
        return revised_simplex(problem.c, problem.A, problem.b, problem.upper, **kw)
    if method == "highs":
        return _solve_highs(problem)
    raise ValueError(f"unknown LP method {method!r}")


def _with_upper_rows(c, A, b, upper):
    if upper is None:
        return A, b
    finite = np.nonzero(np.isfinite(upper))[0]
    if len(finite) == 0:
        return A, b
    rows = np.zeros((len(finite), A.shape[1]))
    rows[np.arange(len(finite)), finite] = 1.0
    return np.vstack([A, rows]), np.concatenate([b, upper[finite]])


def revised_simplex(c, A, b, upper=None, *, tol=FEAS_TOL, max_iter=50_000, refactor_every=64,
                    degenerate_limit=5, rule="dantzig") -> LpSolution:
    """Dense revised simplex for ``max c x, A x <= b, 0 <= x <= upper``.

    Entering columns are chosen by the largest reduced cost; after
    ``degenerate_limit`` consecutive degenerate pivots the solver switches to
    Bland's smallest-index rule until a pivot makes progress, which rules out
    cycling. ``rule="bland"`` uses Bland's rule throughout. Rows with a
    negative right-hand side get an artificial variable and a phase-1 pass.
    """
    c = np.asarray(c, dtype=float)
    A0, b0 = _with_upper_rows(c, np.asarray(A, dtype=float), np.asarray(b, dtype=float), upper)
    m, n = A0.shape
    if m == 0 or n == 0:
        return LpSolution(0.0, np.zeros(n), np.zeros(m), "optimal", 0, 0.0)

    neg = b0 < 0
    sign = np.where(neg, -1.0, 1.0)
    # columns: structural (n), slacks (m), artificials (one per negative row)
    art_rows = np.nonzero(neg)[0]
    n_art = len(art_rows)
    full = np.zeros((m, n + m + n_art))
    full[:, :n] = A0 * sign[:, None]
    full[:, n:n + m] = np.diag(sign)
    full[art_rows, n + m + np.arange(n_art)] = 1.0
    rhs = b0 * sign
    basis = np.arange(n, n + m)
    basis[art_rows] = n + m + np.arange(n_art)
    Binv = np.eye(m)
    iterations = 0
    scale = max(1.0, float(np.abs(c).max(initial=0.0)))

    def run(cost, banned, budget):
        nonlocal Binv, iterations
        bland = rule == "bland"
        streak = 0
        since_refactor = 0
        opt_tol = tol * max(1.0, float(np.abs(cost).max(initial=0.0)))
        for _ in range(budget):
            if since_refactor >= refactor_every:
                Binv = np.linalg.inv(full[:, basis])
                since_refactor = 0
            xb = Binv @ rhs
            y = cost[basis] @ Binv
            d = cost - y @ full
            d[basis] = 0.0
            d[banned] = -np.inf
            if bland:
                cand = np.nonzero(d > opt_tol)[0]
                if len(cand) == 0:
                    return "optimal"
                q = int(cand[0])
            else:
                q = int(np.argmax(d))
                if d[q] <= opt_tol:
                    return "optimal"
            u = Binv @ full[:, q]
            pos = u > tol
            if not pos.any():
                return "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = np.maximum(xb[pos], 0.0) / u[pos]
            theta = ratios.min()
            ties = np.nonzero(ratios <= theta + tol * max(1.0, theta))[0]
            r = int(ties[np.argmin(basis[ties])])
            degenerate = theta <= tol
            streak = streak + 1 if degenerate else 0
            if rule != "bland":
                bland = streak >= degenerate_limit
            piv = u[r]
            Binv[r] /= piv
            col = u.copy()
            col[r] = 0.0
            Binv -= np.outer(col, Binv[r])
            basis[r] = q
            iterations += 1
            since_refactor += 1
        raise SolverError("simplex iteration limit reached",
                          {"iterations": iterations, "rows": m, "cols": n, "bland": bland, "degenerate_streak": streak})

    if n_art:
        cost1 = np.zeros(full.shape[1])
        cost1[n + m:] = -1.0
        status = run(cost1, np.zeros(full.shape[1], dtype=bool), max_iter)
        Binv = np.linalg.inv(full[:, basis])
        xb = Binv @ rhs
        if (cost1[basis] @ xb) < -tol * max(1.0, float(np.abs(rhs).max())):
            raise SolverError("LP is infeasible", {"iterations": iterations, "phase": 1})
        # pivot zero-level artificials out of the basis where possible
        for r in range(m):
            if basis[r] >= n + m:
                row = Binv[r] @ full[:, :n + m]
                row[basis[basis < n + m]] = 0.0
                j = np.nonzero(np.abs(row) > 1e-7)[0]
                if len(j):
                    q = int(j[0])
                    u = Binv @ full[:, q]
                    Binv[r] /= u[r]
                    col = u.copy()
                    col[r] = 0.0
                    Binv -= np.outer(col, Binv[r])
                    basis[r] = q
    cost2 = np.zeros(full.shape[1])
    cost2[:n] = c
    banned = np.zeros(full.shape[1], dtype=bool)
    banned[n + m:] = True
    status = run(cost2, banned, max_iter - iterations)
    if status == "unbounded":
        raise SolverError("LP is unbounded", {"iterations": iterations})

    Binv = np.linalg.inv(full[:, basis])
    xb = Binv @ rhs
    if (xb < -1e-7 * max(1.0, float(np.abs(rhs).max()))).any():
        raise SolverError("simplex ended at an infeasible basis", {"iterations": iterations, "min_xb": float(xb.min())})
    xfull = np.zeros(full.shape[1])
    xfull[basis] = np.maximum(xb, 0.0)
    x = xfull[:n]
    y = (cost2[basis] @ Binv) * sign  # undo the row sign flips
    y = np.where(np.abs(y) < 1e-12 * scale, 0.0, y)
    value = float(c @ x)
    dual_value = float(y @ b0)
    n_orig = np.asarray(A).shape[0]
    return LpSolution(value, x, y[:n_orig], status, iterations, dual_value)


def _solve_highs(problem: LpProblem) -> LpSolution:
    from scipy.optimize import linprog

    bounds = [(0, None if problem.upper is None or not np.isfinite(u) else u)
              for u in (problem.upper if problem.upper is not None else [None] * len(problem.c))]
    res = linprog(-problem.c, A_ub=problem.A, b_ub=problem.b, bounds=bounds, method="highs")
    if res.status != 0:
        raise SolverError(f"HiGHS failed: {res.message}", {"status": res.status})
    duals = -res.ineqlin.marginals
    return LpSolution(float(problem.c @ res.x), res.x, duals, "optimal", int(res.nit), float(duals @ problem.b))


# ------------------------------------------------------------------ LP text format


def _fmt(v: float) -> str:
    return f"{v:.12f}"


def _terms(coefs, names):
    out = []
    for v, name in zip(coefs, names):
        if v == 0:
            continue
        sign = "-" if v < 0 else "+"
        out.append(f"{sign} {_fmt(abs(v))} {name}")
    if not out:
        return ["0 " + names[0]] if names else ["0"]
    if out[0].startswith("+ "):
        out[0] = out[0][2:]
    return out


def _wrap(prefix, terms, per_line=8):
    lines = []
    for k in range(0, len(terms), per_line):
        lines.append((prefix if k == 0 else "   ") + " ".join(terms[k:k + per_line]))
    return lines


def to_lp_format(problem: LpProblem, name: str = "invbal") -> str:
    """Render the problem in CPLEX LP text format with 12 fixed decimals."""
    lines = [f"\\ Problem: {name}", "Maximize"]
    lines += _wrap(" obj: ", _terms(problem.c, problem.var_names))
    lines.append("Subject To")
    for row, rname, rhs in zip(problem.A, problem.row_names, problem.b):
        terms = _terms(row, problem.var_names)
        terms[-1] = terms[-1] + f" <= {_fmt(rhs)}"
        lines += _wrap(f" {rname}: ", terms)
    lines.append("Bounds")
    for j, v in enumerate(problem.var_names):
        u = None if problem.upper is None else problem.upper[j]
        if u is not None and np.isfinite(u):
            lines.append(f" 0 <= {v} <= {_fmt(u)}")
        else:
            lines.append(f" {v} >= 0")
    lines.append("End")
    return "\n".join(lines) + "\n"


_TERM = re.compile(r"([+-]?)\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)\s+([A-Za-z_][\w.]*)")


def from_lp_format(text: str) -> LpProblem:
    """Parse the subset of LP format written by :func:`to_lp_format`."""
    section, current, chunks = None, None, {}
    order = []
    bounds = {}
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in ("maximize", "subject to", "bounds", "end"):
            section = key
            continue
        if section in ("maximize", "subject to"):
            m = re.match(r"\s*([A-Za-z_][\w.]*):\s*(.*)", line)
            if m and not raw.startswith("   "):
                current = m.group(1)
                order.append(current)
                chunks[current] = m.group(2)
            else:
                chunks[current] += " " + line.strip()
        elif section == "bounds":
            m = re.match(r"\s*0 <= (\S+) <= (\S+)", line)
            if m:
                bounds[m.group(1)] = float(m.group(2))
    obj = chunks.pop(order[0])
    rows = order[1:]
    names = []

    def parse(expr):
        coefs = {}
        for sign, val, var in _TERM.findall(expr):
            if var not in names:
                names.append(var)
            coefs[var] = coefs.get(var, 0.0) + (-1.0 if sign == "-" else 1.0) * float(val)
        return coefs

    objc = parse(obj)
    parsed = []
    for r in rows:
        lhs, rhs = chunks[r].split("<=")
        parsed.append((parse(lhs), float(rhs)))
    c = np.array([objc.get(v, 0.0) for v in names])
    A = np.array([[coefs.get(v, 0.0) for v in names] for coefs, _ in parsed]).reshape(len(rows), len(names))
    b = np.array([rhs for _, rhs in parsed])
    upper = np.array([bounds.get(v, np.inf) for v in names]) if bounds else None
    return LpProblem(c, A, b, names, rows, upper=upper)
