"""Correspondences, ratio-test matching, RPC/AUC, scene statistics, timing and the benchmark grid."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    SUPPORT_RADIUS_PR, LocalPatch, Frame, Lrf, PointCloud, RigidTransform, SpatialIndex,
    build_index, canonical_lrf, estimate_normals, propagate_lrf, resolution_of,
)
from .descriptors.extract import FeatureSet, extract_features
from .descriptors.params import ALL_KINDS, DEFAULT_PARAMS, DescriptorParams, Kind
from .errors import DegenerateGeometryError, EmptyCorrespondenceError, FeatBenchError, InvalidInputError
from .nuisance import (
    SUPPORT_RADII_PR, NuisanceKind, NuisanceSpec, apply_cloud_nuisance, perturb_keypoints,
    perturb_lrfs,
)
from .report import BenchCell, BenchReport, RpcCurve

__all__ = [
    "BenchCell", "BenchReport", "CorrespondenceSet", "MatchSets", "RpcCurve", "TimingTable",
    "compute_auc", "compute_clutter_occlusion", "compute_overlap", "compute_rpc",
    "evaluate_pair", "match_features", "run_benchmark", "sample_correspondences",
    "tau_grid", "time_descriptors",
]

INLIER_RADIUS_PR = 2.0


def tau_grid(steps: int = 101) -> np.ndarray:
    if steps < 2:
        raise InvalidInputError("the threshold grid needs at least 2 steps")
    return np.linspace(0.0, 1.0, steps)


# ---------------------------------------------------------------------------
# correspondences


@dataclass(eq=False)
class CorrespondenceSet:
    source_indices: np.ndarray
    target_indices: np.ndarray
    T_gt: RigidTransform
    inlier_radius: float
    requested: int

    def __post_init__(self):
        self.source_indices = np.asarray(self.source_indices, dtype=np.int64)
        self.target_indices = np.asarray(self.target_indices, dtype=np.int64)

    def __len__(self) -> int:
        return self.source_indices.size

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.source_indices.tolist(), self.target_indices.tolist()))

    @property
    def complete(self) -> bool:
        """False when fewer pairs survived than were requested."""
        return len(self) >= self.requested


def sample_keypoints(n_points: int, n: int, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.choice(n_points, size=min(n, n_points), replace=False)


def sample_correspondences(source: PointCloud, target: PointCloud, T_gt: RigidTransform,
                           n: int = 1000, seed=0, inlier_radius: float | None = None,
                           target_index: SpatialIndex | None = None) -> CorrespondenceSet:
    """Random source keypoints paired with the nearest target point under ``T_gt``."""
    if inlier_radius is None:
        inlier_radius = INLIER_RADIUS_PR * resolution_of(source)
    src = sample_keypoints(len(source), n, seed)
    index = target_index or build_index(target)
    tgt, d = index.nearest(T_gt.apply(source.points[src]))
    keep = d <= inlier_radius
    if not np.any(keep):
        raise EmptyCorrespondenceError("no source keypoint has a target point within the inlier radius")
    return CorrespondenceSet(src[keep], tgt[keep], T_gt, inlier_radius, min(n, len(source)))


# ---------------------------------------------------------------------------
# matching


def _as_matrix(feats):
    if isinstance(feats, FeatureSet):
        return feats.kind, feats.as_float32()
    return None, np.asarray(feats, dtype=np.float64)


def _nearest_two(a: np.ndarray, b: np.ndarray, binary: bool, block: int = 512):
    """Row-wise nearest and second-nearest rows of ``b`` for each row of ``a``."""
    n = a.shape[0]
    nn = np.empty(n, dtype=np.int64)
    d1 = np.empty(n)
    d2 = np.empty(n)
    bb = (b * b).sum(axis=1)
    k = min(3, b.shape[0])
    for s in range(0, n, block):
        q = a[s:s + block]
        sq = (q * q).sum(axis=1)[:, None] + bb[None, :] - 2.0 * (q @ b.T)
        if binary:
            # integer-valued, exact in float64: the Hamming distance itself
            dist = np.rint(sq)
            cand = np.argpartition(dist, k - 1, axis=1)[:, :k] if k < b.shape[0] else \
                np.broadcast_to(np.arange(b.shape[0]), (q.shape[0], b.shape[0]))
            exact = np.take_along_axis(dist, cand, axis=1)
        else:
            cand = np.argpartition(sq, k - 1, axis=1)[:, :k] if k < b.shape[0] else \
                np.broadcast_to(np.arange(b.shape[0]), (q.shape[0], b.shape[0]))
            exact = np.linalg.norm(b[cand] - q[:, None, :], axis=2)
        # sort candidates by (distance, index) so ties resolve to the lowest index
        cand = np.ascontiguousarray(cand)
        idx = np.lexsort((cand, exact), axis=-1)
        cs = np.take_along_axis(cand, idx, axis=1)
        es = np.take_along_axis(exact, idx, axis=1)
        nn[s:s + block] = cs[:, 0]
        d1[s:s + block] = es[:, 0]
        d2[s:s + block] = es[:, 1]
    return nn, d1, d2


@dataclass(eq=False)
class MatchSets:
    """Nearest-neighbour ratio test over a threshold grid.

    Row ``i`` of the source features corresponds to row ``i`` of the target
    features. ``matched(tau)`` and ``counts()`` derive the per-threshold sets.
    """

    taus: np.ndarray
    nn: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    correct: np.ndarray

    @property
    def n_corr(self) -> int:
        return self.nn.size

    def matched(self, tau: float) -> np.ndarray:
        # at tau = 1 every feature with a non-zero second distance matches
        if tau >= 1.0:
            return self.d2 > 0
        return (self.d2 > 0) & (self.d1 < tau * self.d2)

    def counts(self) -> tuple[np.ndarray, np.ndarray]:
        """(N_match, N_correct) for every threshold."""
        n_match = np.empty(self.taus.size, dtype=np.int64)
        n_correct = np.empty(self.taus.size, dtype=np.int64)
        for t, tau in enumerate(self.taus):
            m = self.matched(tau)
            n_match[t] = m.sum()
            n_correct[t] = (m & self.correct).sum()
        return n_match, n_correct


def match_features(source_feats, target_feats, taus=None, target_positions=None,
                   inlier_radius: float | None = None) -> MatchSets:
    """Ratio-test matching of source against target features.

    A match is correct when the nearest target feature is the ground-truth
    correspondent, or when its keypoint lies within ``inlier_radius`` of the
    correspondent's keypoint (``target_positions`` gives keypoint coordinates).
    """
    taus = tau_grid() if taus is None else np.asarray(taus, dtype=np.float64)
    if taus.ndim != 1 or np.any(np.diff(taus) < 0) or taus.min() < 0 or taus.max() > 1:
        raise InvalidInputError("thresholds must be ascending in [0, 1]")
    ka, a = _as_matrix(source_feats)
    kb, b = _as_matrix(target_feats)
    if ka is not None and kb is not None and ka is not kb:
        raise InvalidInputError("source and target features are of different kinds")
    if b.shape[0] < 2:
        raise InvalidInputError("matching needs at least 2 target features")
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError("source and target feature counts differ")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError("feature lengths differ")
    kind = ka or kb
    nn, d1, d2 = _nearest_two(a, b, bool(kind is not None and kind.binary))
    correct = nn == np.arange(a.shape[0])
    if target_positions is not None and inlier_radius is not None:
        pos = np.asarray(target_positions, dtype=np.float64)
        correct |= np.linalg.norm(pos[nn] - pos, axis=1) <= inlier_radius
    return MatchSets(taus, nn, d1, d2, correct)


# ---------------------------------------------------------------------------
# curves


def rpc_from_counts(taus, n_match, n_correct, n_corr: int) -> RpcCurve:
    taus = np.asarray(taus, dtype=np.float64)
    n_match = np.asarray(n_match, dtype=np.float64)
    n_correct = np.asarray(n_correct, dtype=np.float64)
    keep = n_match > 0
    if n_corr <= 0 or not np.any(keep):
        return RpcCurve(np.empty(0), np.empty(0), np.empty(0), 0.0, True)
    x = 1.0 - n_correct[keep] / n_match[keep]
    y = n_correct[keep] / n_corr
    curve = RpcCurve(taus[keep], x, y)
    curve.auc = compute_auc(curve)
    return curve


def compute_rpc(matches: MatchSets) -> RpcCurve:
    n_match, n_correct = matches.counts()
    return rpc_from_counts(matches.taus, n_match, n_correct, matches.n_corr)


def compute_auc(curve: RpcCurve) -> float:
    """Trapezoidal area under recall over 1-precision.

    Integration starts at the leftmost point and the last point is carried
    horizontally to 1-precision = 1.
    """
    if curve.degenerate or len(curve) == 0:
        return 0.0
    x = np.asarray(curve.one_minus_precision, dtype=np.float64)
    y = np.asarray(curve.recall, dtype=np.float64)
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    area = float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))
    area += float(y[-1] * (1.0 - x[-1]))
    return min(max(area, 0.0), 1.0)


# ---------------------------------------------------------------------------
# scene statistics


def _tol(source, tol):
    return INLIER_RADIUS_PR * resolution_of(source) if tol is None else tol


def compute_overlap(source: PointCloud, target: PointCloud, T_gt: RigidTransform,
                    tol: float | None = None) -> float:
    tol = _tol(source, tol)
    _, d = build_index(target).nearest(T_gt.apply(source.points))
    return float(np.count_nonzero(d <= tol)) / min(len(source), len(target))


def compute_clutter_occlusion(source: PointCloud, target: PointCloud, T_gt: RigidTransform,
                              tol: float | None = None) -> tuple[float, float]:
    """Point-count clutter and occlusion of the (moved) source inside the target."""
    tol = _tol(source, tol)
    moved = T_gt.apply(source.points)
    _, d_t = build_index(PointCloud(moved)).nearest(target.points)
    _, d_s = build_index(target).nearest(moved)
    clutter = 1.0 - np.count_nonzero(d_t <= tol) / len(target)
    occlusion = 1.0 - np.count_nonzero(d_s <= tol) / len(source)
    return float(clutter), float(occlusion)


# ---------------------------------------------------------------------------
# LRFs


def ground_truth_lrfs(cloud: PointCloud, index: SpatialIndex, indices, radius: float) -> list[Lrf]:
    """Canonical frame of the support patch at each keypoint.

    Degenerate patches (fewer than three points or collinear) get the world
    axes, which still propagate consistently to the target.
    """
    pts = cloud.points[np.asarray(indices, dtype=np.intp)]
    out = []
    for kp, nb in zip(pts, index.radius_many(pts, radius)):
        patch = LocalPatch(kp, cloud.points[nb], None, Frame.WORLD, radius)
        try:
            out.append(canonical_lrf(patch))
        except DegenerateGeometryError:
            out.append(Lrf.from_basis(kp, np.eye(3)))
    return out


def target_lrfs(source_lrfs, T_gt: RigidTransform, target_points) -> list[Lrf]:
    return [propagate_lrf(f, T_gt).with_origin(p) for f, p in zip(source_lrfs, target_points)]


# ---------------------------------------------------------------------------
# single-pair evaluation


@dataclass
class SourceSide:
    """Per-pair source state reused across conditions."""

    cloud: PointCloud
    index: SpatialIndex
    keypoints: np.ndarray          # sampled source indices (before the inlier filter)
    lrfs: list
    features: dict
    radius: float


def prepare_source(source: PointCloud, kinds, n_keypoints: int = 1000, seed=0,
                   radius_pr: float = SUPPORT_RADIUS_PR,
                   params: DescriptorParams = DEFAULT_PARAMS) -> SourceSide:
    kinds = [Kind.parse(k) for k in kinds]
    pr = resolution_of(source)
    radius = radius_pr * pr
    if source.normals is None and Kind.SHOT in kinds:
        source = estimate_normals(source)
        source.resolution_pr = pr
    index = build_index(source)
    kp = sample_keypoints(len(source), n_keypoints, seed)
    lrfs = ground_truth_lrfs(source, index, kp, radius)
    feats = extract_features(source, index, source.points[kp], lrfs, kinds, radius, params, kp)
    return SourceSide(source, index, kp, lrfs, feats, radius)


def take_rows(fs: FeatureSet, rows) -> FeatureSet:
    return FeatureSet(fs.kind, fs.matrix[rows], fs.keypoint_indices[rows], fs.empty[rows])


def surviving_rows(src: SourceSide, target_index: SpatialIndex, T_gt: RigidTransform):
    """Rows of the source keypoint sample with a target point within the inlier radius,
    and those target points."""
    tgt, d = target_index.nearest(T_gt.apply(src.cloud.points[src.keypoints]))
    rows = np.flatnonzero(d <= INLIER_RADIUS_PR * resolution_of(src.cloud))
    if rows.size == 0:
        raise EmptyCorrespondenceError("no source keypoint has a target point within the inlier radius")
    return rows, tgt[rows]


@dataclass(eq=False)
class PairResult:
    """Match counts of one pair under one condition, per descriptor kind."""

    n_corr: int
    counts: dict                      # Kind -> (n_match, n_correct)
    times: dict = field(default_factory=dict)   # Kind -> mean seconds per patch
    features: dict = field(default_factory=dict)


def prepare_target(target: PointCloud, src: SourceSide, T_gt: RigidTransform, kinds,
                   condition: NuisanceSpec | None = None, params: DescriptorParams = DEFAULT_PARAMS,
                   timings: dict | None = None):
    """Corrupt the target, pair it with the source keypoints and describe it.

    Returns the surviving rows of the source keypoint sample, the target
    keypoint indices, and the target features.
    """
    kinds = [Kind.parse(k) for k in kinds]
    pr = resolution_of(src.cloud)
    if condition is not None and condition.kind.acts_on_cloud:
        target = apply_cloud_nuisance(target, condition, src.radius, pr)
    if Kind.SHOT in kinds:
        target = estimate_normals(target)
    index = build_index(target)
    rows, tgt = surviving_rows(src, index, T_gt)
    lrfs = [src.lrfs[r] for r in rows]
    if condition is not None and condition.kind is NuisanceKind.KEYPOINT_ERROR:
        tgt = perturb_keypoints(target, tgt, condition.level, pr)
    t_lrfs = target_lrfs(lrfs, T_gt, target.points[tgt])
    if condition is not None and condition.kind.lrf_axes is not None:
        t_lrfs = perturb_lrfs(t_lrfs, condition.level, condition.kind.lrf_axes, condition.seed)
    feats = extract_features(target, index, target.points[tgt], t_lrfs, kinds, src.radius,
                             params, tgt, timings)
    return rows, tgt, target, feats


def evaluate_pair(source: PointCloud, target: PointCloud, T_gt: RigidTransform, kinds=ALL_KINDS,
                  condition: NuisanceSpec | None = None, n_keypoints: int = 1000, seed=0,
                  radius_pr: float = SUPPORT_RADIUS_PR, taus=None,
                  params: DescriptorParams = DEFAULT_PARAMS, src: SourceSide | None = None,
                  measure_time: bool = False) -> PairResult:
    """Match one (possibly corrupted) pair at ground-truth LRFs for each descriptor kind."""
    kinds = [Kind.parse(k) for k in kinds]
    taus = tau_grid() if taus is None else np.asarray(taus)
    if src is None:
        src = prepare_source(source, kinds, n_keypoints, seed, radius_pr, params)
    timings = {} if measure_time else None
    rows, tgt, target, feats = prepare_target(target, src, T_gt, kinds, condition, params, timings)
    inlier = INLIER_RADIUS_PR * resolution_of(src.cloud)
    out = PairResult(rows.size, {})
    for k in kinds:
        m = match_features(take_rows(src.features[k], rows), feats[k], taus, target.points[tgt], inlier)
        out.counts[k] = m.counts()
        out.features[k] = (take_rows(src.features[k], rows), feats[k])
        if timings is not None:
            out.times[k] = float(np.mean(timings[k])) if timings[k] else math.nan
    return out


# ---------------------------------------------------------------------------
# benchmark grid


def _condition_seed(base: int, pair: int, repeat: int, cond: int, spec_seed: int) -> int:
    return int(np.random.SeedSequence([base + repeat, pair, cond, spec_seed]).generate_state(1)[0])


def _keypoint_seed(base: int, pair: int, repeat: int) -> int:
    return int(np.random.SeedSequence([base + repeat, pair]).generate_state(1)[0])


def _pair_job(args):
    (pair_idx, repeat, entry, kinds, conditions, n_keypoints, seed, radius_pr, taus, params,
     measure_time) = args
    from .io import load_pair
    results, failures = {}, []
    try:
        source, target, pose = load_pair(entry)
        src = prepare_source(source, kinds, n_keypoints, _keypoint_seed(seed, pair_idx, repeat),
                             radius_pr, params)
    except (FeatBenchError, OSError) as e:
        return results, [{"pair": pair_idx, "repeat": repeat, "condition": "*", "error": str(e)}]
    for ci, cond in enumerate(conditions):
        if cond is not None:
            cond = NuisanceSpec(cond.kind, cond.level,
                                _condition_seed(seed, pair_idx, repeat, ci, cond.seed))
        try:
            r = evaluate_pair(source, target, pose, kinds, cond, n_keypoints, seed, radius_pr, taus,
                              params, src, measure_time)
            r.features = {}
            results[ci] = r
        except FeatBenchError as e:
            label = "baseline" if cond is None else f"{cond.label}={cond.level:g}"
            failures.append({"pair": pair_idx, "repeat": repeat, "condition": label, "error": str(e)})
    return results, failures


def run_benchmark(manifest, kinds=ALL_KINDS, conditions=(), n_keypoints: int = 1000, seed: int = 0,
                  radius_pr: float | None = None, tau_steps: int = 101, repeats: int = 1,
                  jobs: int = 1, measure_time: bool = False,
                  params: DescriptorParams = DEFAULT_PARAMS) -> BenchReport:
    """Evaluate every pair x condition x kind and pool the match counts per cell.

    A baseline condition always comes first. Each pair is evaluated
    ``repeats`` times with seeds ``seed .. seed + repeats - 1``. Failing
    pairs are recorded in ``report.failures`` and skipped.
    """
    kinds = [Kind.parse(k) for k in kinds]
    conds = [None] + [c for c in conditions if c is not None]
    radius_pr = manifest.radius_pr if radius_pr is None else radius_pr
    taus = tau_grid(tau_steps)
    jobs_args = [(p, r, entry, kinds, conds, n_keypoints, seed, radius_pr, taus, params, measure_time)
                 for p, entry in enumerate(manifest.pairs) for r in range(repeats)]
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outputs = list(ex.map(_pair_job, jobs_args))
    else:
        outputs = [_pair_job(a) for a in jobs_args]

    report = BenchReport(metadata={
        "seed": seed, "repeats": repeats, "n_keypoints": n_keypoints, "radius_pr": radius_pr,
        "tau_steps": tau_steps, "kinds": [k.value for k in kinds],
        "conditions": ["baseline"] + [f"{c.label}={c.level:g}" for c in conds[1:]],
        "params": {k: v for k, v in vars(params).items()},
        "manifest": getattr(manifest, "name", None),
    })
    for _, fails in outputs:
        report.failures.extend(fails)
    for ci, cond in enumerate(conds):
        for k in kinds:
            n_match = np.zeros(taus.size, dtype=np.int64)
            n_correct = np.zeros(taus.size, dtype=np.int64)
            n_corr = n_pairs = 0
            times = []
            for results, _ in outputs:
                r = results.get(ci)
                if r is None:
                    continue
                m, c = r.counts[k]
                n_match += m
                n_correct += c
                n_corr += r.n_corr
                n_pairs += 1
                if k in r.times:
                    times.append(r.times[k])
            curve = rpc_from_counts(taus, n_match, n_correct, n_corr)
            mean_ms = 1e3 * float(np.mean(times)) if times else None
            report.cells.append(BenchCell(
                k.value, "baseline" if cond is None else cond.label,
                0.0 if cond is None else float(cond.level), curve.auc, params.nbytes(k),
                n_corr, n_pairs, mean_ms, curve))
    return report


# ---------------------------------------------------------------------------
# timing


@dataclass(eq=False)
class TimingTable:
    """Per-patch extraction seconds, indexed by (kind, radius in pr)."""

    radii_pr: tuple
    kinds: tuple
    samples: dict                   # (Kind, radius) -> array (rounds, n_patches)

    def mean(self, kind, radius_pr) -> float:
        return float(self.samples[(Kind.parse(kind), radius_pr)].mean())

    def median(self, kind, radius_pr) -> float:
        return float(np.median(self.samples[(Kind.parse(kind), radius_pr)]))

    def rows(self):
        for (k, r), s in self.samples.items():
            yield k.value, r, 1e3 * float(s.mean()), 1e3 * float(np.median(s))

    def csv(self) -> str:
        lines = ["kind,radius_pr,mean_time_ms,median_time_ms"]
        lines += [f"{k},{r:g},{m!r},{md!r}" for k, r, m, md in self.rows()]
        return "\n".join(lines) + "\n"


def time_descriptors(cloud: PointCloud, kinds=ALL_KINDS, radii_pr=SUPPORT_RADII_PR,
                     n_patches: int = 1000, rounds: int = 10, seed: int = 0,
                     params: DescriptorParams = DEFAULT_PARAMS, warmup: int = 20) -> TimingTable:
    """Wall-clock descriptor time on random patches at each support radius.

    LRFs, normals and neighbour search are prepared outside the timed region.
    A short untimed warm-up pass precedes the measured rounds.
    """
    kinds = tuple(Kind.parse(k) for k in kinds)
    if n_patches < 1 or rounds < 1:
        raise InvalidInputError("need at least one patch and one round")
    pr = resolution_of(cloud)
    if cloud.normals is None and Kind.SHOT in kinds:
        cloud = estimate_normals(cloud)
        cloud.resolution_pr = pr
    index = build_index(cloud)
    kp = sample_keypoints(len(cloud), n_patches, seed)
    samples = {}
    for r_pr in radii_pr:
        radius = r_pr * pr
        lrfs = ground_truth_lrfs(cloud, index, kp, radius)
        extract_features(cloud, index, cloud.points[kp[:warmup]], lrfs[:warmup], kinds, radius,
                         params)
        per_round = {k: [] for k in kinds}
        for _ in range(rounds):
            t = {}
            extract_features(cloud, index, cloud.points[kp], lrfs, kinds, radius, params, kp, t)
            for k in kinds:
                per_round[k].append(t[k])
        for k in kinds:
            samples[(k, r_pr)] = np.maximum(np.array(per_round[k]), 1e-9)
    return TimingTable(tuple(radii_pr), kinds, samples)
