import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from featbench.core import (
    Frame, LocalPatch, Lrf, PerturbAxes, PointCloud, RigidTransform, build_index, canonical_lrf,
    compute_resolution, cube_half_edge, estimate_normals, extract_cubic_patch,
    extract_spherical_patch, local_to_world, orthonormalize, perturb_lrf, perturb_lrf_split,
    propagate_lrf, transform_to_lrf,
)
from featbench.errors import (
    DegenerateGeometryError, DegenerateNormalWarning, EmptyPatchError, InvalidInputError,
)

from conftest import random_rotation

coords = arrays(np.float64, st.tuples(st.integers(2, 60), st.just(3)),
                elements=st.floats(-10, 10, allow_nan=False, width=32))


def _angle(a, b):
    return math.degrees(math.acos(np.clip(a @ b, -1.0, 1.0)))


# --- clouds and transforms -------------------------------------------------

def test_cloud_rejects_bad_shapes_and_values():
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(InvalidInputError):
        PointCloud([[0, 0, np.nan]])
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((2, 3)), normals=np.ones((2, 3)))


def test_cloud_arrays_are_read_only():
    c = PointCloud(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        c.points[0, 0] = 1.0


def test_transform_roundtrip(rng):
    t = RigidTransform(random_rotation(rng), rng.normal(size=3))
    p = rng.normal(size=(20, 3))
    assert np.allclose(t.inverse().apply(t.apply(p)), p, atol=1e-12)
    m = t.compose(t.inverse()).as_matrix()
    assert np.allclose(m, np.eye(4), atol=1e-12)
    assert np.allclose(RigidTransform.from_matrix(t.as_matrix()).apply(p), t.apply(p))


def test_transform_rejects_reflection():
    with pytest.raises(InvalidInputError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


# --- spatial index ---------------------------------------------------------

@given(coords, st.floats(0.0, 8.0), st.integers(0, 59))
def test_radius_query_equals_linear_scan(pts, r, qi):
    index = build_index(PointCloud(pts))
    q = pts[qi % len(pts)] + 0.25
    expected = np.flatnonzero(np.linalg.norm(pts - q, axis=1) <= r)
    assert np.array_equal(index.radius(q, r), expected)
    assert np.array_equal(index.radius_many(q[None], r)[0], expected)


def test_radius_query_boundary_is_inclusive():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 3.0, 4.0]])
    index = build_index(PointCloud(pts))
    assert list(index.radius(np.zeros(3), 5.0)) == [0, 1, 2]
    assert list(index.radius(np.zeros(3), 1.0)) == [0, 1]


def test_knn_matches_brute_force(rng):
    pts = rng.normal(size=(300, 3))
    index = build_index(PointCloud(pts))
    for q in rng.normal(size=(10, 3)):
        d = np.linalg.norm(pts - q, axis=1)
        idx, dist = index.knn(q, 7)
        assert np.array_equal(idx, np.argsort(d)[:7])
        assert np.allclose(dist, np.sort(d)[:7], rtol=0, atol=1e-12)
    i, d = index.nearest(pts[:5] + 1e-9)
    assert np.array_equal(i, np.arange(5))


def test_empty_index_rejected():
    with pytest.raises(InvalidInputError):
        build_index(PointCloud(np.zeros((0, 3))))


# --- resolution ------------------------------------------------------------

@given(coords)
def test_resolution_matches_all_pairs_oracle(pts):
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d[d == 0] = np.inf
    if not np.all(np.isfinite(d.min(axis=1))):
        with pytest.raises(InvalidInputError):
            compute_resolution(PointCloud(pts))
        return
    assert compute_resolution(PointCloud(pts)) == pytest.approx(d.min(axis=1).mean(), rel=1e-9)


def test_resolution_of_regular_grid():
    g = np.stack(np.meshgrid(np.arange(10), np.arange(10), [0.0]), -1).reshape(-1, 3) * 0.5
    assert compute_resolution(PointCloud(g)) == pytest.approx(0.5, abs=1e-12)


# --- normals ---------------------------------------------------------------

def test_normals_on_plane_point_along_z(rng):
    pts = np.column_stack([rng.uniform(-1, 1, (200, 2)), np.zeros(200)])
    n = estimate_normals(PointCloud(pts)).normals
    assert np.allclose(np.abs(n[:, 2]), 1.0, atol=1e-9)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)


def test_normals_on_sphere_point_outward(rng):
    d = rng.normal(size=(800, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    n = estimate_normals(PointCloud(d)).normals
    assert np.mean(np.einsum("ij,ij->i", n, d) > 0.9) > 0.99


def test_normals_degenerate_neighbourhood_warns():
    pts = np.zeros((25, 3))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        n = estimate_normals(PointCloud(pts)).normals
    assert any(issubclass(x.category, DegenerateNormalWarning) for x in w)
    assert np.allclose(n, [0, 0, 1])


def test_normals_need_enough_points():
    with pytest.raises(InvalidInputError):
        estimate_normals(PointCloud(np.eye(3)))


# --- patches and frames ----------------------------------------------------

def test_spherical_patch_and_empty_patch(rng):
    cloud = PointCloud(rng.uniform(-1, 1, (500, 3)))
    index = build_index(cloud)
    patch = extract_spherical_patch(cloud, index, np.zeros(3), 0.5)
    assert patch.frame is Frame.WORLD
    assert np.all(np.linalg.norm(patch.points, axis=1) <= 0.5)
    with pytest.raises(EmptyPatchError):
        extract_spherical_patch(cloud, index, np.full(3, 50.0), 0.5)


def test_cubic_patch_is_inside_inscribed_cube(rng):
    cloud = PointCloud(rng.uniform(-1, 1, (2000, 3)))
    index = build_index(cloud)
    lrf = Lrf.from_basis(np.zeros(3), random_rotation(rng))
    patch = extract_cubic_patch(cloud, index, np.zeros(3), 0.6, lrf)
    assert patch.frame is Frame.LOCAL
    assert np.all(np.abs(patch.points) <= cube_half_edge(0.6) + 1e-12)
    assert cube_half_edge(math.sqrt(3)) == pytest.approx(1.0)


def test_lrf_validation():
    with pytest.raises(InvalidInputError):
        Lrf(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, -1.0]))
    with pytest.raises(InvalidInputError):
        Lrf(np.zeros(3), np.array([1.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]))


def test_local_world_roundtrip(rng):
    pts = rng.normal(size=(50, 3))
    patch = LocalPatch(pts[0], pts, None, Frame.WORLD, 3.0)
    lrf = Lrf.from_basis(pts[0], random_rotation(rng))
    local = transform_to_lrf(patch, lrf)
    assert np.allclose(local.keypoint, 0.0)
    back = local_to_world(local, lrf)
    assert np.allclose(back.points, pts, atol=1e-12)
    with pytest.raises(InvalidInputError):
        transform_to_lrf(local, lrf)


def test_local_coordinates_have_no_negative_zero():
    patch = LocalPatch(np.zeros(3), np.zeros((1, 3)), None, Frame.WORLD, 1.0)
    lrf = Lrf.from_basis(np.zeros(3), np.diag([1.0, -1.0, -1.0]))
    local = transform_to_lrf(patch, lrf)
    assert not np.any(np.signbit(local.points))


def test_canonical_lrf_is_equivariant(small_pair):
    source, target, pose = small_pair
    si, ti = build_index(source), build_index(target)
    for k in (0, 100, 700):
        kp = source.points[k]
        a = canonical_lrf(extract_spherical_patch(source, si, kp, 0.4))
        b = canonical_lrf(extract_spherical_patch(target, ti, pose.apply(kp[None])[0], 0.4))
        assert np.allclose(propagate_lrf(a, pose).basis, b.basis, atol=1e-8)


def test_canonical_lrf_degenerate():
    pts = np.column_stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)])
    with pytest.raises(DegenerateGeometryError):
        canonical_lrf(LocalPatch(pts[0], pts, None, Frame.WORLD, 2.0))


def test_orthonormalize_returns_rotation(rng):
    r = orthonormalize(random_rotation(rng) + 1e-3 * rng.normal(size=(3, 3)))
    assert np.allclose(r.T @ r, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


# --- LRF perturbation ------------------------------------------------------

@given(st.floats(0.0, 89.0), st.integers(0, 2**31 - 1), st.sampled_from(["x", "z"]))
def test_single_axis_error_is_exact(angle, seed, axes):
    lrf = Lrf.from_basis(np.zeros(3), np.eye(3))
    out = perturb_lrf(lrf, angle, axes, seed)
    col = 0 if axes == "x" else 2
    assert _angle(out.basis[:, col], lrf.basis[:, col]) == pytest.approx(angle, abs=1e-6)


@given(st.floats(0.5, 15.0), st.integers(0, 2**31 - 1))
def test_two_axis_error_splits_angle(angle, seed):
    ax, az = perturb_lrf_split(angle, seed)
    assert 0 <= ax <= angle and ax + az == pytest.approx(angle)
    out = perturb_lrf(Lrf.from_basis(np.zeros(3), np.eye(3)), angle, PerturbAxes.XZ, seed)
    assert np.allclose(out.basis.T @ out.basis, np.eye(3), atol=1e-9)


def test_perturb_lrf_range():
    lrf = Lrf.from_basis(np.zeros(3), np.eye(3))
    assert perturb_lrf(lrf, 0.0, "x") is lrf
    with pytest.raises(InvalidInputError):
        perturb_lrf(lrf, 90.0, "z")


def test_propagate_lrf_examples(rng):
    lrf = Lrf.from_basis(rng.normal(size=3), random_rotation(rng))
    same = propagate_lrf(lrf, RigidTransform.identity())
    assert np.allclose(same.basis, lrf.basis) and np.allclose(same.origin, lrf.origin)
    t = RigidTransform(random_rotation(rng), rng.normal(size=3))
    back = propagate_lrf(propagate_lrf(lrf, t), t.inverse())
    assert np.allclose(back.basis, lrf.basis, atol=1e-12)
    assert np.allclose(back.origin, lrf.origin, atol=1e-12)
    rz = RigidTransform(np.array([[0.0, -1, 0], [1, 0, 0], [0, 0, 1]]), np.zeros(3))
    turned = propagate_lrf(Lrf.from_basis(np.zeros(3), np.eye(3)), rz)
    assert np.allclose(turned.x_axis, [0, 1, 0])


@given(arrays(np.float64, (12, 3), elements=st.floats(-5, 5, allow_nan=False)),
       st.integers(0, 2**32 - 1))
def test_transform_to_lrf_is_isometry(pts, seed):
    basis = random_rotation(np.random.default_rng(seed))
    local = transform_to_lrf(LocalPatch(pts[0], pts, None, Frame.WORLD, 1.0),
                             Lrf.from_basis(pts[0], basis))
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    d1 = np.linalg.norm(local.points[:, None] - local.points[None], axis=2)
    assert np.allclose(d0, d1, atol=1e-9)
    again = transform_to_lrf(local_to_world(local, Lrf.from_basis(pts[0], basis)),
                             Lrf.from_basis(pts[0], basis))
    assert np.allclose(again.points, local.points, atol=1e-12)
