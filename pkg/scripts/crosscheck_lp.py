"""Cross-check the in-house simplex against HiGHS, the exact DP, and both dual certificates.

Usage: python scripts/crosscheck_lp.py [--instances 300] [--seed 0]
"""

import argparse

import numpy as np

from invbal.benchmark import (brute_force_opt, build_primal_lp, certificate_from_lp, check_dual_feasibility,
                              dual_from_trace, solve_lp)
from invbal.engine import run_integrated
from invbal.errors import SizeError
from invbal.instances import random_matching_instance, random_tabular_instance
from invbal.learners import ClairvoyantLearner, UcbLearner


def check(inst, rng):
    problems = []
    lp = build_primal_lp(inst)
    ours, ref = solve_lp(lp), solve_lp(lp, method="highs")
    tol = 1e-8 * max(1.0, abs(ref.value))
    if abs(ours.value - ref.value) > tol:
        problems.append(f"simplex {ours.value} vs HiGHS {ref.value}")
    if ours.duality_gap > tol:
        problems.append(f"duality gap {ours.duality_gap}")
    try:
        dp = brute_force_opt(inst)
        if dp > ours.value + 1e-8:
            problems.append(f"DP {dp} above LP {ours.value}")
    except SizeError:
        pass
    lp_cert = certificate_from_lp(ours, lp, inst)
    if not check_dual_feasibility(lp_cert, inst, tol=1e-8) or abs(lp_cert.objective(inst) - ours.value) > 1e-7:
        problems.append("LP certificate infeasible or not tight")
    learner = UcbLearner.for_instance(inst) if inst.law.kind == "matching" else ClairvoyantLearner(inst)
    cert = dual_from_trace(run_integrated(inst, learner, rng=rng), inst)
    if not check_dual_feasibility(cert, inst) or cert.objective(inst) < ours.value - 1e-8:
        problems.append("trace certificate infeasible or below OPT")
    return problems


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    bad = 0
    for k in range(args.instances):
        inst = random_tabular_instance(rng) if k % 3 == 2 else random_matching_instance(rng, T_max=30, b_max=4)
        problems = check(inst, rng)
        if problems:
            bad += 1
            print(f"instance {k}: " + "; ".join(problems))
    print(f"{args.instances} instances checked, {bad} with problems")
    raise SystemExit(1 if bad else 0)


if __name__ == "__main__":
    main()
