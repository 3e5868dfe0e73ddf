import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from featbench.bench import (
    _keypoint_seed, compute_auc, compute_clutter_occlusion,
    compute_overlap, compute_rpc, evaluate_pair, match_features, rpc_from_counts, run_benchmark,
    sample_correspondences, tau_grid, time_descriptors,
)
from featbench.core import PointCloud, RigidTransform
from featbench.descriptors.extract import FeatureSet
from featbench.descriptors.params import Kind
from featbench.errors import EmptyCorrespondenceError, InvalidInputError
from featbench.io import DatasetManifest, PairEntry
from featbench.nuisance import NuisanceSpec
from featbench.report import RpcCurve
from featbench.synthetic import SyntheticShapeSpec


# --- correspondences -------------------------------------------------------

def test_exact_copy_gives_zero_distance_pairs(small_pair):
    source, target, pose = small_pair
    cs = sample_correspondences(source, target, pose, n=300, seed=1)
    assert len(cs) == 300 and cs.complete
    d = np.linalg.norm(pose.apply(source.points[cs.source_indices]) - target.points[cs.target_indices], axis=1)
    assert np.allclose(d, 0, atol=1e-9)


def test_disjoint_clouds_raise(rng):
    a = PointCloud(rng.uniform(0, 1, (300, 3)))
    b = PointCloud(rng.uniform(0, 1, (300, 3)) + 100)
    with pytest.raises(EmptyCorrespondenceError):
        sample_correspondences(a, b, RigidTransform.identity(), n=50)


def plane(n, spacing=1.0):
    g = np.arange(n) * spacing
    return np.stack(np.meshgrid(g, g, [0.0]), -1).reshape(-1, 3)


def test_half_overlap_fraction():
    pts = plane(150)
    source = PointCloud(pts)
    half = PointCloud(pts[pts[:, 0] < 75])
    cs = sample_correspondences(source, half, RigidTransform.identity(), n=1000, seed=2)
    assert abs(len(cs) / 1000 - 0.5) <= 0.05
    assert not cs.complete


# --- matching --------------------------------------------------------------

def _brute_counts(a, b, taus, correct_fn):
    n_match = np.zeros(len(taus), int)
    n_correct = np.zeros(len(taus), int)
    for i, q in enumerate(a):
        d = [math.sqrt(sum((x - y) ** 2 for x, y in zip(q, row))) for row in b]
        order = sorted(range(len(d)), key=lambda j: (d[j], j))
        d1, d2 = d[order[0]], d[order[1]]
        for t, tau in enumerate(taus):
            if d2 > 0 and (d1 < tau * d2 or tau >= 1):
                n_match[t] += 1
                n_correct[t] += correct_fn(i, order[0])
    return n_match, n_correct


def test_counts_match_brute_force(rng):
    a = rng.normal(size=(50, 8))
    b = a + rng.normal(scale=0.6, size=a.shape)
    taus = tau_grid(21)
    m = match_features(a, b, taus)
    n_match, n_correct = m.counts()
    bm, bc = _brute_counts(a.tolist(), b.tolist(), taus, lambda i, j: i == j)
    assert np.array_equal(n_match, bm) and np.array_equal(n_correct, bc)


def test_spatial_tolerance_counts_as_correct(rng):
    a = rng.normal(size=(50, 4))
    b = a + rng.normal(scale=1.0, size=a.shape)
    pos = rng.uniform(0, 10, (50, 3))
    m = match_features(a, b, tau_grid(11), pos, 3.0)
    bm, bc = _brute_counts(a.tolist(), b.tolist(), m.taus,
                           lambda i, j: i == j or np.linalg.norm(pos[i] - pos[j]) <= 3.0)
    assert np.array_equal(m.counts()[1], bc)


def test_binary_hamming_matching(rng):
    bits = rng.integers(0, 2, (40, 64)).astype(np.uint8)
    fa = FeatureSet(Kind.LOVS, bits, np.arange(40))
    noisy = bits.copy()
    noisy[:, :3] ^= 1
    fb = FeatureSet(Kind.LOVS, noisy, np.arange(40))
    m = match_features(fa, fb, tau_grid(5))
    assert np.all(m.d1 <= 3)
    assert np.array_equal(m.d1, np.rint(m.d1))


def test_tau_extremes(rng):
    a = rng.normal(size=(30, 5))
    m = match_features(a, a.copy(), [0.0, 0.999])
    n_match, n_correct = m.counts()
    assert n_match[0] == 0
    assert n_correct[1] == 30 and n_match[1] == 30
    assert compute_rpc(m).recall[-1] == 1.0


def test_ties_resolve_to_lowest_index():
    a = np.array([[0.0, 0.0]])
    b = np.array([[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    m = match_features(np.vstack([a, a, a]), b)
    assert m.nn[0] == 0 and m.d1[0] == m.d2[0] == 1.0


def test_match_validation(rng):
    a = rng.normal(size=(5, 3))
    with pytest.raises(InvalidInputError):
        match_features(a, a[:4])
    with pytest.raises(InvalidInputError):
        match_features(a[:1], a[:1])
    with pytest.raises(InvalidInputError):
        match_features(a, a, taus=[0.5, 0.2])
    with pytest.raises(InvalidInputError):
        match_features(a, rng.normal(size=(5, 4)))


# --- curves ----------------------------------------------------------------

def test_rpc_arithmetic():
    c = rpc_from_counts([0.5], [50], [40], 100)
    assert c.recall[0] == pytest.approx(0.4)
    assert c.one_minus_precision[0] == pytest.approx(0.2)


def test_rpc_skips_empty_thresholds():
    c = rpc_from_counts([0.0, 0.5, 1.0], [0, 10, 20], [0, 10, 15], 20)
    assert np.array_equal(c.taus, [0.5, 1.0])
    d = rpc_from_counts([0.0, 1.0], [0, 0], [0, 0], 20)
    assert d.degenerate and compute_auc(d) == 0.0


def test_auc_examples():
    assert compute_auc(RpcCurve([1.0], [0.0], [1.0])) == pytest.approx(1.0)
    assert compute_auc(RpcCurve([1.0], [0.0], [0.5])) == pytest.approx(0.5)
    assert compute_auc(RpcCurve([0.5, 1.0], [0.0, 1.0], [0.0, 1.0])) == pytest.approx(0.5)


def _riemann(x, y, step=1e-4):
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    grid = np.arange(x[0] + step / 2, 1.0, step)
    return float(np.sum(np.interp(grid, x, y)) * step)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=8))
def test_auc_against_riemann_sum(pts):
    x = np.round(np.array([p[0] for p in pts]), 3)
    y = np.array([p[1] for p in pts])
    # one y per x keeps the piecewise-linear curve a function
    x, first = np.unique(x, return_index=True)
    y = y[first]
    auc = compute_auc(RpcCurve(np.zeros(x.size), x, y))
    assert auc == pytest.approx(_riemann(x, y), abs=1e-6 + 1e-4)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6), st.floats(0, 0.5))
def test_auc_dominance(ys, lift):
    x = np.linspace(0, 0.9, len(ys))
    y = np.array(ys)
    lo = compute_auc(RpcCurve(np.zeros(x.size), x, y * (1 - lift)))
    hi = compute_auc(RpcCurve(np.zeros(x.size), x, y))
    assert hi >= lo - 1e-12


# --- scene statistics ------------------------------------------------------

def test_overlap_examples(small_pair):
    source, target, pose = small_pair
    assert compute_overlap(source, target, pose) == pytest.approx(1.0)
    far = PointCloud(source.points + 1e3)
    assert compute_overlap(source, far, RigidTransform.identity()) == 0.0
    # two views sharing half of their points
    pts = plane(200)
    a = PointCloud(pts[pts[:, 0] < 100])
    b = PointCloud(pts[pts[:, 0] >= 50] - [50.0, 0, 0])
    T = RigidTransform(np.eye(3), [-50.0, 0, 0])
    # 50 shared columns plus the two within tol = 2 pr of the seam
    assert compute_overlap(a, b, T) == pytest.approx(0.52)


def test_clutter_and_occlusion():
    pts = plane(200)
    source = PointCloud(pts)
    I = RigidTransform.identity()
    assert compute_clutter_occlusion(source, source, I) == (0.0, 0.0)
    distractor = PointCloud(np.vstack([pts, pts + [0, 0, 100.0]]))
    clutter, occlusion = compute_clutter_occlusion(source, distractor, I)
    assert clutter == pytest.approx(0.5, abs=0.02) and occlusion == 0.0
    part = PointCloud(pts[pts[:, 0] < 100])
    clutter, occlusion = compute_clutter_occlusion(source, part, I)
    assert clutter == 0.0
    assert occlusion == pytest.approx(0.5, abs=0.02)


# --- pair evaluation and the grid ------------------------------------------

def _manifest():
    return DatasetManifest("t", [PairEntry(synthetic=SyntheticShapeSpec(n_points=1500, seed=3, pose_seed=4))])


def test_pair_baseline_is_near_perfect(small_pair):
    r = evaluate_pair(*small_pair, kinds=["lovs", "sgc"], n_keypoints=150, seed=5)
    assert r.n_corr == 150
    for k, (m, c) in r.counts.items():
        assert rpc_from_counts(tau_grid(), m, c, r.n_corr).auc > 0.9


def test_run_benchmark_baseline_only_and_determinism():
    kw = dict(kinds=["lovs", "toldi"], n_keypoints=100, seed=3)
    a = run_benchmark(_manifest(), **kw)
    b = run_benchmark(_manifest(), **kw)
    assert [c.condition for c in a.cells] == ["baseline", "baseline"]
    assert [c.auc for c in a.cells] == [c.auc for c in b.cells]


def test_run_benchmark_cells_equal_per_pair_recomputation(small_pair):
    conds = [NuisanceSpec("gaussian", 0.5)]
    report = run_benchmark(_manifest(), kinds=["lovs"], conditions=conds, n_keypoints=120,
                           seed=7, repeats=2)
    assert len(report.cells) == 2 and not report.failures
    for cell in report.cells:
        assert cell.n_pairs == 2
    base = report.cell("lovs")
    n_match = n_correct = 0
    n_corr = 0
    for rep in range(2):
        r = evaluate_pair(*small_pair, kinds=["lovs"], n_keypoints=120,
                          seed=_keypoint_seed(7, 0, rep))
        m, c = r.counts[Kind.LOVS]
        n_match, n_correct, n_corr = n_match + m, n_correct + c, n_corr + r.n_corr
    assert base.n_corr == n_corr
    assert base.auc == rpc_from_counts(tau_grid(), n_match, n_correct, n_corr).auc
    assert report.cell("lovs", "gaussian", 0.5).auc < base.auc


def test_failing_pair_is_recorded(tmp_path):
    missing = PairEntry(tmp_path / "nope.ply", tmp_path / "nope.ply", tmp_path / "pose.txt")
    report = run_benchmark(DatasetManifest("t", _manifest().pairs + [missing]), kinds=["lovs"],
                           n_keypoints=50, seed=0)
    assert len(report.cells) == 1 and report.cells[0].n_pairs == 1
    assert [f["pair"] for f in report.failures] == [1]


# --- timing ----------------------------------------------------------------

def test_timing_positive_and_usc_monotone(small_pair):
    t = time_descriptors(small_pair[0], ["usc", "lovs"], radii_pr=(5, 15, 30), n_patches=20,
                         rounds=1, warmup=2)
    for k in ("usc", "lovs"):
        for r in (5, 15, 30):
            assert t.mean(k, r) > 0
    means = [t.mean("usc", r) for r in (5, 15, 30)]
    assert means == sorted(means)
    assert t.csv().startswith("kind,radius_pr,mean_time_ms,median_time_ms\n")
