"""Command-line entry point: gen, perturb, extract, match, bench, timing, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bench import (
    INLIER_RADIUS_PR, match_features, prepare_source, prepare_target, rpc_from_counts,
    run_benchmark, surviving_rows, take_rows, tau_grid, time_descriptors,
)
from .core import SUPPORT_RADIUS_PR, PointCloud, build_index, resolution_of
from .descriptors.dump import read_features, write_features
from .descriptors.params import ALL_KINDS, DEFAULT_PARAMS, Kind
from .errors import FeatBenchError, InvalidInputError
from .io import (
    DatasetManifest, PairEntry, load_manifest, read_ply, read_pose, run_metadata, write_manifest,
    write_ply, write_pose, write_report,
)
from .nuisance import STANDARD_LEVELS, SUPPORT_RADII_PR, NuisanceKind, NuisanceSpec, apply_cloud_nuisance
from .report import BenchCell, BenchReport, parse_report_csv, report_csv, text_summary
from .synthetic import ShapeKind, SyntheticShapeSpec, generate_source, generate_synthetic_pair

USAGE_ERROR = 1
DATA_ERROR = 2


class _Help(argparse.HelpFormatter):
    """Append the default to every option help that does not state its own."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default:" in text or action.default in (None, argparse.SUPPRESS) or not action.option_strings:
            return text
        if action.default is False:
            return text + " (default: off)"
        value = action.default
        if isinstance(value, (list, tuple)):
            value = " ".join(f"{v:g}" if isinstance(v, float) else str(v) for v in value) or "none"
        return f"{text} (default: {value})"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_ERROR)


def _kinds(values):
    return [Kind.parse(v) for v in values] if values else list(ALL_KINDS)


def _nuisance(text):
    try:
        return NuisanceSpec.parse(text)
    except InvalidInputError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _descriptor(text):
    try:
        return Kind.parse(text)
    except InvalidInputError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _common(p, seed=True, radius=True, descriptors=False):
    if seed:
        p.add_argument("--seed", type=int, default=0, help="seed for every random stage")
    if radius:
        p.add_argument("--radius-pr", type=float, default=SUPPORT_RADIUS_PR,
                       help="support radius in multiples of the source resolution")
    if descriptors:
        p.add_argument("--descriptor", action="append", type=_descriptor, metavar="KIND",
                       help="descriptor kind, repeatable; one of "
                            f"{', '.join(k.value for k in ALL_KINDS)} (default: all nine)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="featbench", description=__doc__, formatter_class=_Help)
    parser.add_argument("--version", action="version", version=f"featbench {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    fmt = _Help

    p = sub.add_parser("gen", help="write a synthetic source/target pair, pose and manifest",
                       formatter_class=fmt)
    p.add_argument("--shape", choices=[k.value for k in ShapeKind], default="bumpy_sphere",
                   help="procedural surface")
    p.add_argument("--n-points", type=int, default=5000, help="source point count")
    p.add_argument("--pose-seed", type=int, default=None, help="pose seed (default: seed + 1)")
    p.add_argument("--encoding", choices=["binary_little_endian", "ascii"],
                   default="binary_little_endian", help="PLY encoding")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _common(p, radius=False)

    p = sub.add_parser("perturb", help="apply a cloud-level nuisance to a target cloud", formatter_class=fmt)
    p.add_argument("--target", type=Path, required=True, help="input PLY")
    p.add_argument("--source", type=Path, default=None,
                   help="source PLY whose resolution sets pr (default: the target's own)")
    p.add_argument("--nuisance", type=_nuisance, required=True, metavar="KIND=LEVEL",
                   help="gaussian, shot, decimate_uniform or decimate_random with its level")
    p.add_argument("--out", type=Path, required=True, help="output PLY")
    _common(p)

    p = sub.add_parser("extract", help="describe one side of a pair into feature dump files",
                       formatter_class=fmt)
    p.add_argument("--source", type=Path, required=True, help="source PLY")
    p.add_argument("--target", type=Path, required=True, help="target PLY (possibly perturbed)")
    p.add_argument("--pose", type=Path, required=True, help="ground-truth pose file")
    p.add_argument("--side", choices=["source", "target"], required=True, help="side to describe")
    p.add_argument("--n-keypoints", type=int, default=1000, help="sampled source keypoints")
    p.add_argument("--nuisance", type=_nuisance, default=None, metavar="KIND=LEVEL",
                   help="keypoint or lrf_x / lrf_z / lrf_xz error on the target side (default: none)")
    p.add_argument("--out", type=Path, required=True, help="output directory for <side>_<kind>.feat")
    _common(p, descriptors=True)

    p = sub.add_parser("match", help="RPC and AUC from a source and a target feature dump",
                       formatter_class=fmt)
    p.add_argument("--source-features", type=Path, required=True, help="source dump")
    p.add_argument("--target-features", type=Path, required=True, help="target dump")
    p.add_argument("--source", type=Path, required=True, help="source PLY (sets pr)")
    p.add_argument("--target", type=Path, required=True, help="target PLY (keypoint positions)")
    p.add_argument("--tau-steps", type=int, default=101, help="ratio thresholds from 0 to 1")
    p.add_argument("--out", type=Path, required=True, help="output directory")

    p = sub.add_parser("bench", help="full descriptor x condition grid over a manifest",
                       formatter_class=fmt)
    p.add_argument("--manifest", type=Path, required=True, help="dataset manifest (YAML)")
    p.add_argument("--nuisance", type=_nuisance, action="append", default=[], metavar="KIND=LEVEL",
                   help="extra condition, repeatable (default: baseline only)")
    p.add_argument("--sweep", action="append", default=[], choices=[k.value for k in NuisanceKind],
                   help="add every standard level of a nuisance, repeatable (default: none)")
    p.add_argument("--n-keypoints", type=int, default=1000, help="sampled source keypoints per pair")
    p.add_argument("--repeats", type=int, default=1, help="seeds seed..seed+repeats-1 per pair")
    p.add_argument("--tau-steps", type=int, default=101, help="ratio thresholds from 0 to 1")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--time", action="store_true", help="fill mean_time_ms in report.csv")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _common(p, descriptors=True)
    p.set_defaults(radius_pr=None)
    for a in p._actions:
        if a.dest == "radius_pr":
            a.help = "support radius in pr (default: the manifest's radius_pr, itself 15 if unset)"

    p = sub.add_parser("timing", help="per-patch extraction time across support radii",
                       formatter_class=fmt)
    p.add_argument("--cloud", type=Path, default=None,
                   help="PLY to sample patches from (default: a synthetic bumpy sphere)")
    p.add_argument("--n-points", type=int, default=5000, help="synthetic cloud size")
    p.add_argument("--radii", type=float, nargs="+", default=list(SUPPORT_RADII_PR),
                   help="support radii in pr")
    p.add_argument("--n-patches", type=int, default=1000, help="patches per radius")
    p.add_argument("--rounds", type=int, default=10, help="timed rounds")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _common(p, radius=False, descriptors=True)

    p = sub.add_parser("report", help="merge report CSVs and print a summary table", formatter_class=fmt)
    p.add_argument("inputs", type=Path, nargs="+", help="report.csv files")
    p.add_argument("--out", type=Path, default=None, help="merged CSV path (default: print the summary only)")
    return parser


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args):
    spec = SyntheticShapeSpec(ShapeKind(args.shape), args.n_points, args.seed,
                              args.seed + 1 if args.pose_seed is None else args.pose_seed)
    source, target, pose = generate_synthetic_pair(spec)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    write_ply(source, out / "source.ply", args.encoding)
    write_ply(target, out / "target.ply", args.encoding)
    write_pose(pose, out / "pose.txt")
    write_manifest(DatasetManifest(f"synthetic-{args.shape}", [
        PairEntry(out / "source.ply", out / "target.ply", out / "pose.txt")]), out / "manifest.yaml")
    print(f"wrote {out / 'source.ply'}, {out / 'target.ply'}, {out / 'pose.txt'}, {out / 'manifest.yaml'}")


def cmd_perturb(args):
    spec = NuisanceSpec(args.nuisance.kind, args.nuisance.level, args.seed)
    if not spec.kind.acts_on_cloud:
        raise InvalidInputError(f"{spec.kind.value} acts on keypoints or LRFs; pass it to extract")
    target = read_ply(args.target)
    pr = resolution_of(read_ply(args.source)) if args.source else resolution_of(target)
    out = apply_cloud_nuisance(target, spec, args.radius_pr * pr, pr)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_ply(PointCloud(out.points), args.out)
    print(f"wrote {args.out} ({len(out)} points)")


def cmd_extract(args):
    kinds = _kinds(args.descriptor)
    if args.nuisance is not None and args.nuisance.kind.acts_on_cloud:
        raise InvalidInputError(f"{args.nuisance.kind.value} acts on the cloud; use perturb first")
    source, target, pose = read_ply(args.source), read_ply(args.target), read_pose(args.pose)
    side_kinds = kinds if args.side == "source" else []
    src = prepare_source(source, side_kinds, args.n_keypoints, args.seed, args.radius_pr)
    cond = None
    if args.nuisance is not None:
        cond = NuisanceSpec(args.nuisance.kind, args.nuisance.level, args.seed)
    if args.side == "source":
        # keep the rows whose correspondent survives, so both dumps align row by row
        rows, _ = surviving_rows(src, build_index(target), pose)
        feats = {k: take_rows(src.features[k], rows) for k in kinds}
    else:
        _, _, _, feats = prepare_target(target, src, pose, kinds, cond)
    args.out.mkdir(parents=True, exist_ok=True)
    for k in kinds:
        path = args.out / f"{args.side}_{k.value}.feat"
        n = write_features(path, feats[k])
        print(f"wrote {path} ({len(feats[k])} features, {n} bytes)")


def cmd_match(args):
    a = read_features(args.source_features)
    b = read_features(args.target_features)
    if a.kind is not b.kind:
        raise InvalidInputError("source and target dumps hold different descriptor kinds")
    source, target = read_ply(args.source), read_ply(args.target)
    if b.keypoint_indices.size and b.keypoint_indices.max() >= len(target):
        raise InvalidInputError("target dump references points beyond the target cloud")
    pr = resolution_of(source)
    taus = tau_grid(args.tau_steps)
    m = match_features(a, b, taus, target.points[b.keypoint_indices], INLIER_RADIUS_PR * pr)
    n_match, n_correct = m.counts()
    curve = rpc_from_counts(taus, n_match, n_correct, m.n_corr)
    cell = BenchCell(a.kind.value, "baseline", 0.0, curve.auc, DEFAULT_PARAMS.nbytes(a.kind),
                     m.n_corr, 1, None, curve)
    report = BenchReport([cell], metadata={"command": "match", "tau_steps": args.tau_steps,
                                           "source_features": str(args.source_features),
                                           "target_features": str(args.target_features)})
    write_report(report, args.out)
    print(f"{a.kind.value}: auc={curve.auc:.6f} n_corr={m.n_corr}")


def cmd_bench(args):
    manifest = load_manifest(args.manifest)
    conds = list(args.nuisance)
    for name in args.sweep:
        kind = NuisanceKind(name)
        conds += [NuisanceSpec(kind, lv) for lv in STANDARD_LEVELS[kind]]
    report = run_benchmark(manifest, _kinds(args.descriptor), conds, args.n_keypoints, args.seed,
                           args.radius_pr, args.tau_steps, args.repeats, args.jobs, args.time)
    write_report(report, args.out, include_time=args.time)
    sys.stdout.write(text_summary(report))
    for f in report.failures:
        print(f"pair {f['pair']} {f['condition']} failed: {f['error']}", file=sys.stderr)


def cmd_timing(args):
    if args.cloud is not None:
        cloud = read_ply(args.cloud)
    else:
        cloud = generate_source(SyntheticShapeSpec(n_points=args.n_points, seed=args.seed))
    table = time_descriptors(cloud, _kinds(args.descriptor), tuple(args.radii), args.n_patches,
                             args.rounds, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "timing.csv").write_text(table.csv())
    meta = run_metadata({"command": "timing", "seed": args.seed, "n_patches": args.n_patches,
                         "rounds": args.rounds, "radii_pr": list(args.radii), "points": len(cloud)})
    (args.out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(table.csv())


def cmd_report(args):
    merged = BenchReport()
    for path in args.inputs:
        merged.cells.extend(parse_report_csv(Path(path).read_text()).cells)
    include_time = any(c.mean_time_ms is not None for c in merged.cells)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(report_csv(merged, include_time))
    sys.stdout.write(text_summary(merged))


COMMANDS = {"gen": cmd_gen, "perturb": cmd_perturb, "extract": cmd_extract, "match": cmd_match,
            "bench": cmd_bench, "timing": cmd_timing, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE_ERROR
    try:
        COMMANDS[args.command](args)
    except (FeatBenchError, OSError) as e:
        print(f"featbench {args.command}: error: {e}", file=sys.stderr)
        return DATA_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
