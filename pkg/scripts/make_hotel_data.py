"""Regenerate the synthetic hotel prior and arrival pool shipped in src/invbal/data.

The numbers are invented stand-ins: products are (room category, price level)
pairs, item index ``2 * category + level``. Low-price products appeal to
advance-booking leisure guests; high-price products to business and loyalty
guests, who tend to arrive late in the booking window.

Usage: python scripts/make_hotel_data.py [--seed 2019] [--out PATH]
"""

import argparse
import json
from pathlib import Path

import numpy as np

FEATURES = ["const", "party_ge2", "party_ge3", "vip", "business", "weekend", "long_stay", "advance", "loyalty"]

# utility of each category at the low price, then shifts for the high price
CATEGORY = {
    #            const party2 party3 vip  busin weekend long  advance loyal
    "king":     [0.5,  0.2,  -0.8,  0.3,  0.8,  0.0,   0.0,  0.0,   0.2],
    "queen":    [0.5,  0.3,  -0.4,  0.0,  0.3,  0.2,   0.0,  0.2,   0.0],
    "suite":    [-0.3,  0.4,   0.5,  0.9,  0.2,  0.3,   0.4,  0.0,   0.3],
    "two_double": [0.1, 0.5,  1.0, -0.2, -0.6,  0.4,   0.2,  0.3,   0.0],
}
HIGH_SHIFT = [-1.0, 0.0, 0.0, 0.5, 1.2, -0.2, -0.2, -0.9, 0.6]

# segment feature vectors (without the constant) and whether they book late
SEGMENTS = [
    ([0, 0, 0, 0, 0, 0, 1, 0], "early"),  # solo leisure, advance
    ([1, 0, 0, 0, 1, 0, 1, 0], "early"),  # couple weekend, advance
    ([1, 1, 0, 0, 1, 1, 1, 0], "early"),  # family vacation
    ([1, 1, 0, 0, 0, 0, 1, 0], "early"),  # group, advance
    ([1, 0, 0, 0, 0, 1, 1, 1], "early"),  # loyal couple long stay
    ([0, 0, 0, 0, 1, 0, 0, 0], "any"),    # solo weekend walk-in
    ([1, 0, 1, 0, 1, 0, 0, 1], "any"),    # vip couple weekend
    ([1, 1, 0, 0, 0, 0, 0, 0], "any"),    # group last-minute
    ([0, 0, 0, 1, 0, 0, 0, 0], "late"),   # business traveller
    ([0, 0, 0, 1, 0, 0, 0, 1], "late"),   # loyal business traveller
    ([0, 0, 1, 1, 0, 0, 0, 1], "late"),   # vip business traveller
    ([1, 0, 0, 1, 0, 1, 0, 0], "late"),   # business pair, long stay
]
N_PATHS = 31
MEAN_LENGTH = 200
BASE_INVENTORY = [40, 40, 20, 30]


def beta_center():
    rows = []
    for coefs in CATEGORY.values():
        low = np.array(coefs, dtype=float)
        rows.append(low)
        rows.append(low + np.array(HIGH_SHIFT))
    return np.round(np.array(rows), 4)


def make_path(rng):
    length = int(rng.integers(MEAN_LENGTH - 15, MEAN_LENGTH + 16))
    mix = rng.dirichlet(np.full(len(SEGMENTS), 2.0))
    timing = np.array([{"early": 0.2, "any": 0.5, "late": 0.8}[s[1]] for s in SEGMENTS])
    segs = rng.choice(len(SEGMENTS), size=length, p=mix)
    # order by a noisy booking time so early-booking segments arrive first
    when = timing[segs] + rng.normal(0, 0.2, size=length)
    segs = segs[np.argsort(when, kind="stable")]
    return [[1] + SEGMENTS[s][0] for s in segs]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=2019)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/invbal/data/hotel_synthetic.json"))
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    doc = {
        "description": "Synthetic stand-in for a fitted hotel MNL prior and arrival paths; not dataset-derived.",
        "features": FEATURES,
        "products": [f"{c}_{lvl}" for c in CATEGORY for lvl in ("low", "high")],
        "beta_center": beta_center().tolist(),
        "base_inventory": BASE_INVENTORY,
        "seed": args.seed,
        "paths": [make_path(rng) for _ in range(N_PATHS)],
    }
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as f:
        json.dump(doc, f, separators=(",", ":"))
    print(f"wrote {args.out}: {N_PATHS} paths")


if __name__ == "__main__":
    main()
