"""Point-cloud primitives shared by the descriptors and the benchmark harness.

Everything here works on ``(n, 3)`` float64 arrays wrapped in small
dataclasses. Lengths are in world units unless a name ends in ``_pr``, in
which case the value is a multiple of the cloud resolution.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateGeometryError,
    DegenerateNormalWarning,
    EmptyPatchError,
    InvalidInputError,
)

NORMAL_NEIGHBORS = 20
SUPPORT_RADIUS_PR = 15.0

_UNIT_TOL = 1e-6


def _as_points(a, name: str = "points") -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidInputError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass(eq=False)
class PointCloud:
    """An ordered set of 3D points with optional unit normals.

    ``resolution_pr`` caches the mean nearest-neighbour distance once
    :func:`compute_resolution` has run.
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    resolution_pr: float | None = None

    def __post_init__(self):
        self.points = _as_points(self.points)
        self.points.setflags(write=False)
        if self.normals is not None:
            normals = _as_points(self.normals, "normals")
            if normals.shape != self.points.shape:
                raise InvalidInputError("normals must match points in shape")
            if normals.size and np.max(np.abs(np.linalg.norm(normals, axis=1) - 1.0)) > _UNIT_TOL:
                raise InvalidInputError("normals must have unit length")
            normals.setflags(write=False)
            self.normals = normals
        if self.resolution_pr is not None and not self.resolution_pr > 0:
            raise InvalidInputError("resolution_pr must be positive")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def subset(self, idx) -> PointCloud:
        idx = np.asarray(idx, dtype=np.intp)
        normals = None if self.normals is None else self.normals[idx]
        return PointCloud(self.points[idx], normals)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise InvalidInputError("rotation must be 3x3")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise InvalidInputError("transform contains non-finite values")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9 or np.linalg.det(rot) < 0:
            raise InvalidInputError("rotation must be orthonormal with det +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def apply_vectors(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def compose(self, other: RigidTransform) -> RigidTransform:
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def transform_cloud(self, cloud: PointCloud) -> PointCloud:
        normals = None if cloud.normals is None else _renormalize(self.apply_vectors(cloud.normals))
        return PointCloud(self.apply(cloud.points), normals, cloud.resolution_pr)


def _renormalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Lrf:
    """Right-handed orthonormal frame anchored at a keypoint."""

    origin: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray

    def __post_init__(self):
        for name in ("origin", "x_axis", "y_axis", "z_axis"):
            v = np.array(getattr(self, name), dtype=np.float64).reshape(3)
            if not np.all(np.isfinite(v)):
                raise InvalidInputError(f"Lrf.{name} is not finite")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        b = self.basis
        if np.max(np.abs(b.T @ b - np.eye(3))) > _UNIT_TOL:
            raise InvalidInputError("Lrf axes must be orthonormal")
        if np.max(np.abs(np.cross(self.x_axis, self.y_axis) - self.z_axis)) > _UNIT_TOL:
            raise InvalidInputError("Lrf must be right-handed")

    @property
    def basis(self) -> np.ndarray:
        """3x3 matrix whose columns are the x, y, z axes."""
        return np.column_stack([self.x_axis, self.y_axis, self.z_axis])

    @classmethod
    def from_basis(cls, origin, basis) -> Lrf:
        basis = np.asarray(basis, dtype=np.float64)
        return cls(origin, basis[:, 0], basis[:, 1], basis[:, 2])

    def with_origin(self, origin) -> Lrf:
        return Lrf(origin, self.x_axis, self.y_axis, self.z_axis)


class Frame(enum.Enum):
    WORLD = "world"
    LOCAL = "local"


@dataclass(eq=False)
class LocalPatch:
    keypoint: np.ndarray
    points: np.ndarray
    normals: np.ndarray | None
    frame: Frame
    support_radius: float
    resolution_pr: float | None = None
    indices: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.points.shape[0]


# ---------------------------------------------------------------------------
# spatial index


class SpatialIndex:
    """Radius and k-NN queries over a fixed cloud.

    Queries are answered by a k-d tree and then re-checked with the plain
    Euclidean norm, so membership is identical to a linear scan that uses
    ``np.linalg.norm(points - q, axis=1) <= r``.
    """

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] == 0:
            raise InvalidInputError("cannot index an empty cloud")
        self.points = points
        self._tree = cKDTree(points)

    def __len__(self) -> int:
        return self.points.shape[0]

    def _exact(self, q: np.ndarray, cand, r: float) -> np.ndarray:
        cand = np.sort(np.asarray(cand, dtype=np.intp))
        d = np.linalg.norm(self.points[cand] - q, axis=1)
        return cand[d <= r]

    def radius(self, q, r: float) -> np.ndarray:
        """Sorted indices of points within distance ``r`` of ``q`` (inclusive)."""
        q = np.asarray(q, dtype=np.float64)
        cand = self._tree.query_ball_point(q, r * (1 + 1e-9) + 1e-300)
        return self._exact(q, cand, r)

    def radius_many(self, queries, r: float) -> list[np.ndarray]:
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        cands = self._tree.query_ball_point(queries, r * (1 + 1e-9) + 1e-300)
        return [self._exact(q, c, r) for q, c in zip(queries, cands)]

    def knn(self, q, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of the ``k`` nearest points, nearest first."""
        k = int(k)
        if not 1 <= k <= len(self):
            raise InvalidInputError(f"k must be in [1, {len(self)}]")
        d, i = self._tree.query(np.asarray(q, dtype=np.float64), k=k)
        return np.atleast_1d(i).astype(np.intp), np.atleast_1d(d)

    def knn_many(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        d, i = self._tree.query(queries, k=k)
        if k == 1:
            d, i = d[:, None], i[:, None]
        return i.astype(np.intp), d

    def nearest(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Nearest index and distance for every query point."""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        d, i = self._tree.query(queries, k=1)
        return i.astype(np.intp), d


def build_index(cloud: PointCloud) -> SpatialIndex:
    if len(cloud) == 0:
        raise InvalidInputError("cannot index an empty cloud")
    return SpatialIndex(cloud.points)


# ---------------------------------------------------------------------------
# resolution and normals


def compute_resolution(cloud: PointCloud, index: SpatialIndex | None = None) -> float:
    """Mean distance from each point to its nearest distinct neighbour.

    The value is cached on ``cloud.resolution_pr``.
    """
    n = len(cloud)
    if n < 2:
        raise InvalidInputError("resolution needs at least two points")
    index = index or build_index(cloud)
    # k=2 gives the point itself plus its neighbour; duplicates of the query
    # point would report 0, so walk further out until a distinct point shows up
    k = min(n, 2)
    while True:
        idx, d = index.knn_many(cloud.points, k)
        dd = np.where(d > 0, d, np.inf)
        nn = dd.min(axis=1)
        if np.all(np.isfinite(nn)) or k == n:
            break
        k = min(n, 2 * k)
    if not np.all(np.isfinite(nn)):
        raise InvalidInputError("all points coincide; resolution undefined")
    pr = float(np.mean(nn))
    cloud.resolution_pr = pr
    return pr


def resolution_of(cloud: PointCloud) -> float:
    return cloud.resolution_pr if cloud.resolution_pr is not None else compute_resolution(cloud)


def estimate_normals(cloud: PointCloud, k: int = NORMAL_NEIGHBORS,
                     index: SpatialIndex | None = None) -> PointCloud:
    """PCA normals from each point's ``k`` nearest neighbours plus itself.

    Each normal points away from its neighbourhood centroid; when the point
    sits exactly on the centroid plane the normal is turned toward +z.
    Neighbourhoods with no spread get +z and raise a
    :class:`DegenerateNormalWarning`.
    """
    n = len(cloud)
    if n < k + 1:
        raise InvalidInputError(f"need at least k+1={k + 1} points, got {n}")
    index = index or build_index(cloud)
    nbr, _ = index.knn_many(cloud.points, k + 1)
    nb = cloud.points[nbr]                         # (n, k+1, 3)
    centroid = nb.mean(axis=1)
    centered = nb - centroid[:, None, :]
    cov = np.einsum("nki,nkj->nij", centered, centered) / (k + 1)
    evals, evecs = np.linalg.eigh(cov)
    normals = evecs[:, :, 0].copy()

    scale = np.maximum(evals[:, 2], 0.0)
    degenerate = scale <= 1e-30
    normals[degenerate] = (0.0, 0.0, 1.0)

    dots = np.einsum("ij,ij->i", normals, cloud.points - centroid)
    flip = dots < 0
    tie = dots == 0
    flip |= tie & (normals[:, 2] < 0)
    normals[flip] *= -1.0
    normals = _renormalize(normals)
    if np.any(degenerate):
        warnings.warn(f"{int(degenerate.sum())} point(s) with degenerate neighbourhood; "
                      "normal set to +z", DegenerateNormalWarning, stacklevel=2)
    return PointCloud(cloud.points, normals, cloud.resolution_pr)


# ---------------------------------------------------------------------------
# patches and frames


def extract_spherical_patch(cloud: PointCloud, index: SpatialIndex, keypoint,
                            radius: float) -> LocalPatch:
    if not radius > 0:
        raise InvalidInputError("support radius must be positive")
    keypoint = np.asarray(keypoint, dtype=np.float64).reshape(3)
    idx = index.radius(keypoint, radius)
    if idx.size == 0:
        raise EmptyPatchError("no points within the support radius")
    return _world_patch(cloud, keypoint, idx, radius)


def _world_patch(cloud: PointCloud, keypoint, idx, radius) -> LocalPatch:
    normals = None if cloud.normals is None else cloud.normals[idx]
    return LocalPatch(keypoint, cloud.points[idx], normals, Frame.WORLD, float(radius),
                      cloud.resolution_pr, idx)


def cube_half_edge(radius: float) -> float:
    """Half-edge of the cube inscribed in a sphere of the given radius."""
    return radius / math.sqrt(3.0)


def extract_cubic_patch(cloud: PointCloud, index: SpatialIndex, keypoint, radius: float,
                        lrf: Lrf) -> LocalPatch:
    """Points inside the LRF-aligned cube inscribed in the support sphere, in LRF coordinates."""
    keypoint = np.asarray(keypoint, dtype=np.float64).reshape(3)
    idx = index.radius(keypoint, radius)
    if idx.size == 0:
        raise EmptyPatchError("no points within the support radius")
    local = transform_to_lrf(_world_patch(cloud, keypoint, idx, radius), lrf.with_origin(keypoint))
    patch = crop_cube(local)
    if len(patch) == 0:
        raise EmptyPatchError("no points inside the cubic volume")
    return patch


def crop_cube(local: LocalPatch) -> LocalPatch:
    """Restrict a Local-frame spherical patch to its inscribed cube."""
    h = cube_half_edge(local.support_radius)
    keep = np.max(np.abs(local.points), axis=1) <= h
    return replace(local,
                   points=local.points[keep],
                   normals=None if local.normals is None else local.normals[keep],
                   indices=None if local.indices is None else local.indices[keep])


def transform_to_lrf(patch: LocalPatch, lrf: Lrf) -> LocalPatch:
    """Express a World-frame patch in the coordinates of ``lrf``."""
    if patch.frame is not Frame.WORLD:
        raise InvalidInputError("patch is already in a local frame")
    basis = lrf.basis
    # + 0.0 turns IEEE -0.0 into +0.0 so atan2 at the keypoint is frame independent
    pts = (patch.points - lrf.origin) @ basis + 0.0
    normals = None if patch.normals is None else patch.normals @ basis + 0.0
    key = (patch.keypoint - lrf.origin) @ basis + 0.0
    return LocalPatch(key, pts, normals, Frame.LOCAL, patch.support_radius,
                      patch.resolution_pr, patch.indices)


def local_to_world(patch: LocalPatch, lrf: Lrf) -> LocalPatch:
    if patch.frame is not Frame.LOCAL:
        raise InvalidInputError("patch is not in a local frame")
    basis = lrf.basis
    pts = patch.points @ basis.T + lrf.origin
    normals = None if patch.normals is None else patch.normals @ basis.T
    key = patch.keypoint @ basis.T + lrf.origin
    return LocalPatch(key, pts, normals, Frame.WORLD, patch.support_radius,
                      patch.resolution_pr, patch.indices)


def canonical_lrf(patch: LocalPatch) -> Lrf:
    """Covariance-eigenvector frame with deterministic axis signs.

    z is the smallest-variance direction, x the largest, y = z × x. Each
    axis is flipped so the summed projections of ``q - p`` onto it are
    non-negative.
    """
    pts = np.asarray(patch.points, dtype=np.float64)
    if pts.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 points for an LRF")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    if evals[2] <= 0 or evals[1] <= 1e-12 * evals[2]:
        raise DegenerateGeometryError("patch is collinear or degenerate")
    offsets = (pts - patch.keypoint).sum(axis=0)
    z = evecs[:, 0]
    x = evecs[:, 2]
    if offsets @ z < 0:
        z = -z
    if offsets @ x < 0:
        x = -x
    y = np.cross(z, x)
    return Lrf(patch.keypoint, x, y, z)


def orthonormalize(basis: np.ndarray) -> np.ndarray:
    """Nearest proper rotation to ``basis`` (columns are axes)."""
    u, _, vt = np.linalg.svd(basis)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1
        r = u @ vt
    return r


def propagate_lrf(lrf: Lrf, transform: RigidTransform) -> Lrf:
    basis = transform.rotation @ lrf.basis
    return Lrf.from_basis(transform.apply(lrf.origin[None])[0], basis)


class PerturbAxes(enum.Enum):
    X = "x"
    Z = "z"
    XZ = "xz"


def _axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def _tilt(basis: np.ndarray, col: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    # rotate the whole frame about a random axis orthogonal to basis[:, col],
    # which moves that axis by exactly ``angle``
    others = [c for c in range(3) if c != col]
    phi = rng.uniform(0.0, 2.0 * math.pi)
    axis = math.cos(phi) * basis[:, others[0]] + math.sin(phi) * basis[:, others[1]]
    return _axis_angle(axis, angle) @ basis


def perturb_lrf(lrf: Lrf, angle_deg: float, axes: PerturbAxes | str,
                seed: int | np.random.Generator = 0) -> Lrf:
    """Inject an angular error into one or both of the x and z axes."""
    axes = PerturbAxes(axes.lower() if isinstance(axes, str) else axes)
    if not 0 <= angle_deg < 90:
        raise InvalidInputError("LRF error must be in [0, 90) degrees")
    if angle_deg == 0:
        return lrf
    rng = np.random.default_rng(seed)
    theta = math.radians(angle_deg)
    basis = lrf.basis
    if axes is PerturbAxes.X:
        basis = _tilt(basis, 0, theta, rng)
    elif axes is PerturbAxes.Z:
        basis = _tilt(basis, 2, theta, rng)
    else:
        first = rng.uniform(0.0, theta)
        basis = _tilt(basis, 0, first, rng)
        basis = _tilt(basis, 2, theta - first, rng)
    return Lrf.from_basis(lrf.origin, orthonormalize(basis))


def perturb_lrf_split(angle_deg: float, seed) -> tuple[float, float]:
    """The (x, z) split that :func:`perturb_lrf` uses for ``XZ`` with this seed."""
    rng = np.random.default_rng(seed)
    first = rng.uniform(0.0, math.radians(angle_deg))
    return math.degrees(first), angle_deg - math.degrees(first)
