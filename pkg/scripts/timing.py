#!/usr/bin/env python3
"""Per-patch extraction time of every descriptor across support radii."""

import argparse
from pathlib import Path

from featbench.bench import time_descriptors
from featbench.nuisance import SUPPORT_RADII_PR
from featbench.synthetic import SyntheticShapeSpec, generate_source


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-points", type=int, default=5000)
    ap.add_argument("--n-patches", type=int, default=1000)
    ap.add_argument("--rounds", type=int, default=10)
    ap.add_argument("--out", type=Path, default=Path("results/timing.csv"))
    args = ap.parse_args()

    cloud = generate_source(SyntheticShapeSpec(n_points=args.n_points))
    table = time_descriptors(cloud, radii_pr=SUPPORT_RADII_PR, n_patches=args.n_patches, rounds=args.rounds)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(table.csv())
    print(f"{'kind':8}" + "".join(f"{r:>10g}" for r in SUPPORT_RADII_PR))
    for k in table.kinds:
        print(f"{k.value:8}" + "".join(f"{1e3 * table.median(k, r):10.3f}" for r in SUPPORT_RADII_PR))


if __name__ == "__main__":
    main()
