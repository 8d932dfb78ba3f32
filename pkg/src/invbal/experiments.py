"""Replicate orchestration and tabular reports for every experiment kind.

Seeding: replicate ``r`` of a run with base seed ``s`` uses
``SeedSequence([s, r]).spawn(3)`` as (instance, outcome, learner) streams.
Each policy run builds fresh generators from the same children, so policies
compared within a replicate see common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import build_primal_lp, check_dual_feasibility, dual_from_trace, mean_se, solve_lp
from .benchmark.certificates import DualCertificate
from .engine import (CONSERVATIVE, GREEDY, INTEGRATED, run_conservative_baseline, run_greedy_baseline,
                     run_integrated)
from .errors import ConfigError, InvbalError, SolverError
from .instances import (HotelParams, LowerBoundParams, draw_hotel_scenario, gen_lower_bound_instance,
                        gen_matching_instance, hotel_instance, load_arrival_pool, random_matching_instance,
                        random_tabular_instance)
from .learners import make_learner
from .model import load_instance
from .penalty import PenaltySchedule, alpha_from_ratio, competitive_factor

log = logging.getLogger(__name__)

KINDS = ("matching", "lowerbound", "hotel", "audit", "regret-scaling")
MAX_FAILURE_FRACTION = 0.05
HOTEL_SCALES = tuple(round(0.1 + 0.05 * k, 2) for k in range(11))
HOTEL_RATIO = 0.58
POLICY_LABELS = {INTEGRATED: "IB", GREEDY: "Gdy", CONSERVATIVE: "Conserv"}


class ExperimentAborted(InvbalError, RuntimeError):
    """Too many replicates failed."""


# ------------------------------------------------------------------ config


@dataclass
class ExperimentConfig:
    """One experiment, as read from a JSON file.

    ``instance`` holds generator parameters for the kind; ``grid`` holds the
    swept values (``scales`` for hotel, ``horizons`` for regret scaling).
    """

    kind: str
    name: str = ""
    seed: int = 0
    replicates: int = 1
    workers: int = 1
    out_dir: str | None = None
    instance: dict = field(default_factory=dict)
    learner: dict = field(default_factory=lambda: {"name": "clairvoyant"})
    schedule: dict | None = None
    policies: list = field(default_factory=lambda: [INTEGRATED])
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicate count must be a positive integer")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("worker count must be a positive integer")
        bad = [p for p in self.policies if p not in POLICY_LABELS]
        if bad:
            raise ConfigError(f"unknown policies {bad}")
        self.name = self.name or self.kind

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("config needs a 'kind'")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return ExperimentConfig.from_dict(d)


# ------------------------------------------------------------------ report


@dataclass
class RunReport:
    """Rows of a summary table plus run metadata (seeds, version, wall time, failures)."""

    kind: str
    columns: list
    rows: list
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "columns": self.columns, "rows": self.rows, "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(d["kind"], list(d["columns"]), list(d["rows"]), dict(d.get("meta", {})))

    def write(self, out_dir, name) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / f"{name}.csv", out / f"{name}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n")
        return csv_path, json_path

    def format_table(self) -> str:
        widths = [max(len(c), *(len(_fmt_cell(r.get(c))) for r in self.rows)) if self.rows else len(c)
                  for c in self.columns]
        lines = ["  ".join(c.rjust(w) for c, w in zip(self.columns, widths))]
        for r in self.rows:
            lines.append("  ".join(_fmt_cell(r.get(c)).rjust(w) for c, w in zip(self.columns, widths)))
        return "\n".join(lines)


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


# ------------------------------------------------------------------ seeding


def replicate_streams(seed: int, replicate: int):
    """(instance, outcome, learner) seed sequences for one replicate."""
    return np.random.SeedSequence([seed, replicate]).spawn(3)


def _gen(ss: np.random.SeedSequence) -> np.random.Generator:
    return np.random.default_rng(ss)


def _run_policy(policy, instance, learner, schedule, rng):
    if policy == INTEGRATED:
        return run_integrated(instance, learner, schedule, rng)
    if policy == GREEDY:
        return run_greedy_baseline(instance, learner, rng)
    return run_conservative_baseline(instance, learner, schedule, rng)


def _run_replicates(fn, cfg: ExperimentConfig, jobs):
    """Map ``fn(cfg_dict, job)`` over jobs, tolerating up to 5% failures."""
    payload = cfg.to_dict()
    results, failures = [], []
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(_guarded, [fn] * len(jobs), [payload] * len(jobs), jobs))
    else:
        outs = [_guarded(fn, payload, j) for j in jobs]
    for job, (ok, value) in zip(jobs, outs):
        if ok:
            results.append(value)
        else:
            failures.append({"job": job, "error": value})
            log.warning("replicate %s failed: %s", job, value)
    if len(failures) > MAX_FAILURE_FRACTION * len(jobs):
        if any(f["error"].startswith("SolverError") for f in failures):
            raise SolverError(f"{len(failures)} of {len(jobs)} replicates failed", {"failures": failures[:5]})
        raise ExperimentAborted(f"{len(failures)} of {len(jobs)} replicates failed: {failures[0]['error']}")
    return results, failures


def _guarded(fn, payload, job):
    try:
        return True, fn(payload, job)
    except (InvbalError, np.linalg.LinAlgError) as e:
        return False, f"{type(e).__name__}: {e}"


def _schedule(cfg_schedule, instance, default_ratio=None):
    if cfg_schedule is None:
        if instance.mode == "single":
            return PenaltySchedule.single()
        alpha = alpha_from_ratio(default_ratio) if default_ratio else None
        return PenaltySchedule.scaled_psi(instance.resources, alpha)
    d = dict(cfg_schedule)
    if d.get("kind") == "scaled_psi" and "ratio" in d:
        d["alpha"] = alpha_from_ratio(d.pop("ratio"))
    return PenaltySchedule.from_dict(d, instance.resources)


# ------------------------------------------------------------------ matching


def matching_instance_from_spec(spec: dict, seed: int = 0):
    """Matching instance from a config mapping.

    Either ``{"path": file}`` or generator fields ``n, K, b, T`` with optional
    ``p`` (default: uniform on [0, 1] drawn from ``instance_seed``),
    ``rewards`` (default 1, or ``"random"`` for uniform on [1, 5]) and
    ``context_prob`` (probability each x_i = 1, default 0.5).
    """
    if "path" in spec:
        return load_instance(spec["path"])
    try:
        n, K, b, T = int(spec["n"]), int(spec["K"]), spec["b"], int(spec["T"])
    except KeyError as e:
        raise ConfigError(f"matching instance spec is missing {e}") from None
    rng = np.random.default_rng([spec.get("instance_seed", seed), 7])
    p = np.asarray(spec["p"], dtype=float).reshape(n, K) if "p" in spec else rng.uniform(0, 1, (n, K))
    rewards = spec.get("rewards")
    if rewards == "random":
        rewards = rng.uniform(1.0, 5.0, n)
    if "contexts" in spec:
        contexts = spec["contexts"]
    else:
        contexts = (rng.random((T, n)) < spec.get("context_prob", 0.5)).astype(float)
    return gen_matching_instance(n, K, b, T, p, contexts, rewards)


def _matching_job(payload, r):
    cfg = ExperimentConfig.from_dict(payload)
    instance = matching_instance_from_spec(cfg.instance, cfg.seed)
    schedule = _schedule(cfg.schedule, instance)
    _, out_ss, learn_ss = replicate_streams(cfg.seed, r)
    res = {}
    for policy in cfg.policies:
        learner = make_learner(cfg.learner, instance, _gen(learn_ss))
        tr = _run_policy(policy, instance, learner, schedule, _gen(out_ss))
        res[policy] = (tr.alg, tr.reg)
    return res


def run_matching(cfg: ExperimentConfig) -> RunReport:
    instance = matching_instance_from_spec(cfg.instance, cfg.seed)
    opt = solve_lp(build_primal_lp(instance)).value
    results, failures = _run_replicates(_matching_job, cfg, list(range(cfg.replicates)))
    factor = competitive_factor(instance.b_min)
    rows = []
    for policy in cfg.policies:
        alg = [res[policy][0] for res in results]
        reg = [res[policy][1] for res in results]
        m_alg, se_alg = mean_se(alg)
        m_reg, se_reg = mean_se(reg)
        ratio, se_ratio = mean_se(np.asarray(alg) / opt) if opt > 0 else (math.nan, math.nan)
        rows.append({"policy": policy, "replicates": len(alg), "opt": opt, "mean_alg": m_alg, "se_alg": se_alg,
                     "ratio": ratio, "se_ratio": se_ratio, "mean_reg": m_reg, "se_reg": se_reg, "factor": factor,
                     "slack": opt - factor * m_alg - m_reg,
                     "slack_adjusted": opt - factor * (m_alg + 3 * _z(se_alg)) - (m_reg + 3 * _z(se_reg))})
    cols = ["policy", "replicates", "opt", "mean_alg", "se_alg", "ratio", "se_ratio", "mean_reg", "se_reg",
            "factor", "slack", "slack_adjusted"]
    return RunReport("matching", cols, rows, {"b_min": instance.b_min, "failures": failures})


def _z(v):
    return 0.0 if v != v else v


# ------------------------------------------------------------------ lower bound


def _lowerbound_params(cfg):
    try:
        return LowerBoundParams(int(cfg.instance["n"]), int(cfg.instance["b"]), int(cfg.instance["K"]),
                                cfg.instance.get("eps"))
    except KeyError as e:
        raise ConfigError(f"lower-bound config is missing {e}") from None


def _lowerbound_job(payload, r):
    cfg = ExperimentConfig.from_dict(payload)
    params = _lowerbound_params(cfg)
    inst_ss, out_ss, learn_ss = replicate_streams(cfg.seed, r)
    instance, _secret = gen_lower_bound_instance(params, _gen(inst_ss))
    opt = solve_lp(build_primal_lp(instance)).value if r < cfg.grid.get("verify_opt", cfg.replicates) else None
    schedule = PenaltySchedule.single()
    res = {"opt_lp": opt}
    for policy in cfg.policies:
        learner = make_learner(cfg.learner, instance, _gen(learn_ss))
        res[policy] = _run_policy(policy, instance, learner, schedule, _gen(out_ss)).alg
    return res


def run_lowerbound_study(cfg: ExperimentConfig) -> RunReport:
    params = _lowerbound_params(cfg)
    if params.n < 3:
        raise ConfigError("lower-bound study needs n >= 3")
    results, failures = _run_replicates(_lowerbound_job, cfg, list(range(cfg.replicates)))
    opts = [res["opt_lp"] for res in results if res["opt_lp"] is not None]
    opt = params.opt
    ceiling = 1 - math.exp(-1) + 3 / params.n
    rows = []
    for policy in cfg.policies:
        ratio, se = mean_se([res[policy] / opt for res in results])
        rows.append({"policy": policy, "learner": cfg.learner.get("name"), "replicates": len(results), "opt": opt,
                     "ratio": ratio, "se_ratio": se, "ceiling": ceiling,
                     "below_ceiling": bool(ratio <= ceiling + 3 * _z(se)),
                     "loss": 1 - ratio, "loss_vs_1_minus_1_over_e": (1 - ratio) - math.exp(-1)})
    meta = {"n": params.n, "b": params.b, "K": params.K, "eps": params.gap, "lp_checked": len(opts),
            "lp_opt_min": min(opts) if opts else None, "lp_opt_max": max(opts) if opts else None,
            "failures": failures}
    cols = ["policy", "learner", "replicates", "opt", "ratio", "se_ratio", "ceiling", "below_ceiling", "loss",
            "loss_vs_1_minus_1_over_e"]
    return RunReport("lowerbound", cols, rows, meta)


# ------------------------------------------------------------------ hotel


def _hotel_params(cfg) -> HotelParams:
    d = dict(cfg.instance)
    for key in ("prices", "beta_center", "base_inventory"):
        if key in d and d[key] is not None:
            d[key] = tuple(tuple(v) if isinstance(v, list) else v for v in d[key])
    try:
        return HotelParams(**d)
    except TypeError as e:
        raise ConfigError(f"bad hotel parameters: {e}") from None


def _hotel_job(payload, r):
    cfg = ExperimentConfig.from_dict(payload)
    params = _hotel_params(cfg)
    scales = cfg.grid.get("scales", HOTEL_SCALES)
    inst_ss, out_ss, learn_ss = replicate_streams(cfg.seed, r)
    scenario = draw_hotel_scenario(params, _gen(inst_ss), _pool(params))
    center = params.center()
    out = []
    for scale in scales:
        instance = hotel_instance(params, scenario, scale)
        schedule = _schedule(cfg.schedule, instance, HOTEL_RATIO)
        opt = solve_lp(build_primal_lp(instance)).value
        row = {"scale": scale, "opt": opt}
        for policy in cfg.policies:
            spec = {"name": "ts", "center": center, "halfwidth": params.eps_prior, **cfg.learner}
            spec["name"] = "ts"
            learner = make_learner(spec, instance, _gen(learn_ss))
            tr = _run_policy(policy, instance, learner, schedule, _gen(out_ss))
            row[policy] = (tr.alg, tr.reg)
        out.append(row)
    return out


_POOL_CACHE = {}


def _pool(params):
    key = params.data_path
    if key not in _POOL_CACHE:
        _POOL_CACHE[key] = load_arrival_pool(params.data_path)
    return _POOL_CACHE[key]


def run_hotel(cfg: ExperimentConfig) -> RunReport:
    params = _hotel_params(cfg)
    scales = list(cfg.grid.get("scales", HOTEL_SCALES))
    results, failures = _run_replicates(_hotel_job, cfg, list(range(cfg.replicates)))
    rows = []
    cols = ["scale", "replicates", "mean_opt"]
    for policy in cfg.policies:
        lab = POLICY_LABELS[policy]
        cols += [f"{lab}_ratio", f"{lab}_se", f"{lab}_reg"]
    for k, scale in enumerate(scales):
        per = [res[k] for res in results]
        row = {"scale": scale, "replicates": len(per), "mean_opt": float(np.mean([p["opt"] for p in per]))}
        for policy in cfg.policies:
            lab = POLICY_LABELS[policy]
            ratio, se = mean_se([p[policy][0] / p["opt"] for p in per])
            row[f"{lab}_ratio"], row[f"{lab}_se"] = ratio, se
            row[f"{lab}_reg"] = float(np.mean([p[policy][1] for p in per]))
        rows.append(row)
    meta = {"v0": params.v0, "eps_prior": params.eps_prior, "ratio_constant": HOTEL_RATIO,
            "factor_large_inventory": 1 / HOTEL_RATIO, "data": "synthetic stand-in, not dataset-derived",
            "failures": failures}
    return RunReport("hotel", cols, rows, meta)


# ------------------------------------------------------------------ regret scaling


def _scaling_instance(cfg, T):
    spec = cfg.instance
    n, K = int(spec.get("n", 2)), int(spec.get("K", 2))
    p = np.asarray(spec.get("p", [0.6, 0.4, 0.5, 0.5]), dtype=float).reshape(n, K)
    b = int(spec.get("inventory", 10**9))
    return gen_matching_instance(n, K, b, T, p, np.ones((T, n)))


def _scaling_job(payload, job):
    cfg = ExperimentConfig.from_dict(payload)
    T, r = job
    instance = _scaling_instance(cfg, T)
    _, out_ss, learn_ss = replicate_streams(cfg.seed, r)
    learner = make_learner(cfg.learner, instance, _gen(learn_ss))
    return T, run_integrated(instance, learner, PenaltySchedule.single(), _gen(out_ss)).reg


def fit_loglog_slope(x, y) -> float:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if (x <= 0).any() or (y <= 0).any():
        raise ValueError("log-log fit needs positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def run_regret_scaling(cfg: ExperimentConfig) -> RunReport:
    horizons = [int(T) for T in cfg.grid.get("horizons", [])]
    if len(horizons) < 4:
        raise ConfigError("regret scaling needs at least 4 horizons")
    jobs = [(T, r) for T in horizons for r in range(cfg.replicates)]
    results, failures = _run_replicates(_scaling_job, cfg, jobs)
    rows = []
    for T in horizons:
        m, se = mean_se([reg for TT, reg in results if TT == T])
        rows.append({"T": T, "replicates": sum(1 for TT, _ in results if TT == T), "mean_reg": m, "se_reg": se})
    means = [row["mean_reg"] for row in rows]
    slope = fit_loglog_slope(horizons, means) if min(means) > 0 else math.nan
    for row in rows:
        row["slope"] = slope
    return RunReport("regret-scaling", ["T", "replicates", "mean_reg", "se_reg", "slope"], rows,
                     {"slope": slope, "learner": cfg.learner, "failures": failures})


# ------------------------------------------------------------------ certificate audit


def _audit_job(payload, k):
    cfg = ExperimentConfig.from_dict(payload)
    spec = cfg.instance
    inst_ss, out_ss, learn_ss = replicate_streams(cfg.seed, k)
    rng = _gen(inst_ss)
    tabular = spec.get("tabular_fraction", 0.0) > 0 and rng.random() < spec.get("tabular_fraction", 0.0)
    if tabular:
        instance = random_tabular_instance(rng, b_max=spec.get("b_max", 5))
        learner_spec = {"name": "clairvoyant"}
    else:
        instance = random_matching_instance(rng, spec.get("n_max", 4), spec.get("K_max", 3), spec.get("T_max", 50),
                                            spec.get("b_max", 5))
        learner_spec = cfg.learner
    learner = make_learner(learner_spec, instance, _gen(learn_ss))
    tr = run_integrated(instance, learner, PenaltySchedule.single(), _gen(out_ss))
    cert = dual_from_trace(tr, instance)
    feas = check_dual_feasibility(cert, instance)
    opt = solve_lp(build_primal_lp(instance)).value
    bound = cert.objective(instance)
    zero = DualCertificate(np.zeros(instance.n), np.zeros(instance.horizon))
    probe_applicable = any((instance.consumption_at(t) @ instance.items.price).max() > 1e-9
                           for t in range(instance.horizon))
    probe_detected = not check_dual_feasibility(zero, instance).feasible
    return {"feasible": feas.feasible, "worst": feas.worst_violation, "where": feas.where,
            "weak_duality": bound >= opt - 1e-8, "dual_bound": bound, "opt": opt,
            "probe_applicable": probe_applicable, "probe_detected": probe_detected}


def run_certificate_audit(cfg: ExperimentConfig) -> RunReport:
    n_inst = int(cfg.grid.get("instances", cfg.replicates))
    results, failures = _run_replicates(_audit_job, cfg, list(range(n_inst)))
    feasible = sum(r["feasible"] for r in results)
    weak = sum(r["weak_duality"] for r in results)
    applicable = sum(r["probe_applicable"] for r in results)
    detected = sum(r["probe_applicable"] and r["probe_detected"] for r in results)
    row = {"instances": len(results), "feasible": feasible, "infeasible": len(results) - feasible,
           "worst_violation": max((r["worst"] for r in results), default=0.0),
           "weak_duality_ok": weak, "probe_applicable": applicable, "probe_detected": detected,
           "passed": feasible == len(results) and weak == len(results) and detected == applicable
           and not failures}
    cols = ["instances", "feasible", "infeasible", "worst_violation", "weak_duality_ok", "probe_applicable",
            "probe_detected", "passed"]
    bad = [dict(job=k, where=r["where"], worst=r["worst"]) for k, r in enumerate(results) if not r["feasible"]]
    return RunReport("audit", cols, [row], {"violations": bad[:20], "failures": failures})


# ------------------------------------------------------------------ dispatch


RUNNERS = {"matching": run_matching, "lowerbound": run_lowerbound_study, "hotel": run_hotel,
           "audit": run_certificate_audit, "regret-scaling": run_regret_scaling}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Run all replicates of ``cfg``, attach metadata and (optionally) write CSV and JSON reports.

    The CSV holds only deterministic quantities; wall time goes in the JSON.
    """
    start = time.perf_counter()
    report = RUNNERS[cfg.kind](cfg)
    report.meta.update({"config": cfg.to_dict(), "seed": cfg.seed, "replicates": cfg.replicates,
                        "version": __version__, "numpy": np.__version__,
                        "seed_scheme": "SeedSequence([seed, replicate]).spawn(3) -> instance, outcome, learner",
                        "wall_time_s": time.perf_counter() - start})
    if write and cfg.out_dir:
        report.write(cfg.out_dir, cfg.name)
    return report

