"""LP upper bound, dual certificates, exact DP oracle and guarantee reports."""

from .certificates import DualCertificate, FeasibilityReport, certificate_from_lp, check_dual_feasibility, dual_from_trace
from .dp import brute_force_opt, state_space_size
from .lp import LpProblem, LpSolution, build_primal_lp, from_lp_format, revised_simplex, solve_lp, to_lp_format
from .report import GuaranteeReport, guarantee_gap_report, mean_se

__all__ = [
    "DualCertificate", "FeasibilityReport", "GuaranteeReport", "LpProblem", "LpSolution",
    "brute_force_opt", "build_primal_lp", "certificate_from_lp", "check_dual_feasibility", "dual_from_trace",
    "from_lp_format", "guarantee_gap_report", "mean_se", "revised_simplex", "solve_lp", "state_space_size",
    "to_lp_format",
]
