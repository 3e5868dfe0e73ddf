#!/usr/bin/env python3
"""Run nuisance sweeps on the synthetic pair and write one report directory per sweep.

    python3 scripts/sweep.py gaussian shot decimate_random --repeats 3 --out results/
    python3 scripts/sweep.py radius --out results/
"""

import argparse
import time
from pathlib import Path

from featbench.bench import run_benchmark
from featbench.descriptors.params import ALL_KINDS
from featbench.io import DatasetManifest, PairEntry, load_manifest, write_report
from featbench.nuisance import STANDARD_LEVELS, SUPPORT_RADII_PR, NuisanceKind, NuisanceSpec
from featbench.report import BenchReport, text_summary
from featbench.synthetic import ShapeKind, SyntheticShapeSpec


def radius_sweep(manifest, args):
    # support radius is a pipeline setting rather than a corruption, so run the grid once per radius
    merged = BenchReport(metadata={"sweep": "radius"})
    for r in SUPPORT_RADII_PR:
        rep = run_benchmark(manifest, ALL_KINDS, (), args.n_keypoints, args.seed, r,
                            repeats=args.repeats, jobs=args.jobs)
        for c in rep.cells:
            c.condition, c.level = "radius_pr", float(r)
        merged.cells += rep.cells
        merged.failures += rep.failures
    return merged


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("sweeps", nargs="+", choices=[k.value for k in NuisanceKind] + ["radius"])
    ap.add_argument("--manifest", type=Path, default=None, help="default: one synthetic pair")
    ap.add_argument("--shape", default="bumpy_sphere", choices=[k.value for k in ShapeKind])
    ap.add_argument("--n-keypoints", type=int, default=1000)
    ap.add_argument("--repeats", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()

    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
    else:
        manifest = DatasetManifest("synthetic", [PairEntry(synthetic=SyntheticShapeSpec(ShapeKind(args.shape)))])
    for name in args.sweeps:
        t = time.perf_counter()
        if name == "radius":
            report = radius_sweep(manifest, args)
        else:
            kind = NuisanceKind(name)
            conds = [NuisanceSpec(kind, lv) for lv in STANDARD_LEVELS[kind]]
            report = run_benchmark(manifest, ALL_KINDS, conds, args.n_keypoints, args.seed,
                                   repeats=args.repeats, jobs=args.jobs)
        write_report(report, args.out / name)
        print(f"{name}: {time.perf_counter() - t:.1f} s")
        print(text_summary(report))


if __name__ == "__main__":
    main()
