"""Empirical check of ``OPT <= factor * E[ALG] + E[REG]`` from replicate traces."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import StatisticalPowerError
from ..model import MULTI, Instance
from ..penalty import PenaltySchedule, competitive_factor
from .certificates import _schedule_for, dual_from_trace
from .lp import build_primal_lp, solve_lp

MIN_REPLICATES = 30


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(v.mean()), se


@dataclass(frozen=True)
class GuaranteeReport:
    """Terms of the guarantee for one instance.

    ``slack = opt - factor * mean_alg - mean_reg`` is expected to be <= 0.
    ``slack_adjusted`` moves both means up by three standard errors, so a
    positive value is evidence against the guarantee beyond Monte-Carlo noise.
    """

    opt: float
    replicates: int
    mean_alg: float
    se_alg: float
    mean_reg: float
    se_reg: float
    factor: float
    b_min: int
    alpha_min: float
    slack: float
    slack_adjusted: float
    mean_dual_bound: float
    se_dual_bound: float

    @property
    def holds(self) -> bool:
        return self.slack_adjusted <= 1e-9 * max(1.0, abs(self.opt))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GuaranteeReport":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def guarantee_gap_report(traces, instance: Instance, schedule: PenaltySchedule | None = None,
                         opt: float | None = None, min_replicates: int = MIN_REPLICATES) -> GuaranteeReport:
    if len(traces) < min_replicates:
        raise StatisticalPowerError(f"need at least {min_replicates} traces, got {len(traces)}")
    schedule = _schedule_for(instance, schedule)
    if opt is None:
        opt = solve_lp(build_primal_lp(instance)).value
    alpha = schedule.alpha_min if instance.mode == MULTI else 1.0
    factor = competitive_factor(instance.b_min, alpha)
    mean_alg, se_alg = mean_se([tr.alg for tr in traces])
    mean_reg, se_reg = mean_se([tr.reg for tr in traces])
    mean_dual, se_dual = mean_se([dual_from_trace(tr, instance, schedule).objective(instance) for tr in traces])
    slack = opt - factor * mean_alg - mean_reg
    adjusted = opt - factor * (mean_alg + 3 * se_alg) - (mean_reg + 3 * se_reg)
    return GuaranteeReport(float(opt), len(traces), mean_alg, se_alg, mean_reg, se_reg, factor, instance.b_min,
                           alpha, slack, adjusted, mean_dual, se_dual)
