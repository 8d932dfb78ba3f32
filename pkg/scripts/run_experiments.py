"""Run every experiment config in configs/ and write CSV/JSON reports.

Usage: python scripts/run_experiments.py [--out results] [--replicates N] [--only hotel audit ...]
"""

import argparse
import time
from pathlib import Path

from invbal.experiments import load_config, run_experiment

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "results"))
    ap.add_argument("--replicates", type=int, help="override replicate counts (quick look)")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--only", nargs="*", help="experiment kinds to run")
    args = ap.parse_args()
    for path in sorted((ROOT / "configs").glob("*.json")):
        if path.stem.endswith("_instance"):
            continue
        cfg = load_config(path).with_overrides(out_dir=args.out, replicates=args.replicates, workers=args.workers)
        if args.only and cfg.kind not in args.only:
            continue
        start = time.perf_counter()
        report = run_experiment(cfg)
        print(f"== {cfg.name} ({cfg.kind}, {time.perf_counter() - start:.0f}s)")
        print(report.format_table())
        if cfg.kind == "regret-scaling":
            print(f"log-log slope {report.meta['slope']:.4f}")
        print()


if __name__ == "__main__":
    main()
