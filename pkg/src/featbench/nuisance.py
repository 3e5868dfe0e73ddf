"""Controlled corruption of target clouds, keypoints and LRFs.

Every function returns a new object and leaves its input untouched.
Randomized ones take a ``seed`` and are reproducible for a given seed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    PerturbAxes,
    PointCloud,
    SpatialIndex,
    build_index,
    perturb_lrf,
    resolution_of,
)
from .errors import DegenerateOutputError, InvalidInputError

# Level grids swept by the robustness experiments.
GAUSSIAN_LEVELS_PR = tuple(0.25 * i for i in range(1, 9))
SHOT_NOISE_RATES = tuple(0.01 * i for i in range(1, 9))
SHOT_NOISE_DISTANCE_FRAC = 0.8           # d_shot as a fraction of the support radius
DECIMATION_RATES = (1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32)
KEYPOINT_ERRORS_PR = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
LRF_ERRORS_DEG = (2.5, 5.0, 7.5, 10.0, 12.5, 15.0)
SUPPORT_RADII_PR = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
BOUNDARY_GROUP_EDGES = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)   # multiples of R
BOUNDARY_GROUP_LABELS = ("[0,0.2R)", "[0.2R,0.4R)", "[0.4R,0.6R)", "[0.6R,0.8R)",
                         "[0.8R,1.0R)", "[1.0R,inf)")


class NuisanceKind(enum.Enum):
    GAUSSIAN_NOISE = "gaussian"
    SHOT_NOISE = "shot"
    DECIMATE_UNIFORM = "decimate_uniform"
    DECIMATE_RANDOM = "decimate_random"
    KEYPOINT_ERROR = "keypoint"
    LRF_ERROR_X = "lrf_x"
    LRF_ERROR_Z = "lrf_z"
    LRF_ERROR_XZ = "lrf_xz"

    @property
    def acts_on_cloud(self) -> bool:
        return self in (NuisanceKind.GAUSSIAN_NOISE, NuisanceKind.SHOT_NOISE,
                        NuisanceKind.DECIMATE_UNIFORM, NuisanceKind.DECIMATE_RANDOM)

    @property
    def lrf_axes(self) -> PerturbAxes | None:
        return {NuisanceKind.LRF_ERROR_X: PerturbAxes.X,
                NuisanceKind.LRF_ERROR_Z: PerturbAxes.Z,
                NuisanceKind.LRF_ERROR_XZ: PerturbAxes.XZ}.get(self)


# inclusive level ranges tested in the experiments (0 / 1 are the identity)
_RANGES = {
    NuisanceKind.GAUSSIAN_NOISE: (0.0, 2.0),
    NuisanceKind.SHOT_NOISE: (0.0, 0.08),
    NuisanceKind.DECIMATE_UNIFORM: (1 / 32, 1.0),
    NuisanceKind.DECIMATE_RANDOM: (1 / 32, 1.0),
    NuisanceKind.KEYPOINT_ERROR: (0.0, 6.0),
    NuisanceKind.LRF_ERROR_X: (0.0, 15.0),
    NuisanceKind.LRF_ERROR_Z: (0.0, 15.0),
    NuisanceKind.LRF_ERROR_XZ: (0.0, 15.0),
}

STANDARD_LEVELS = {
    NuisanceKind.GAUSSIAN_NOISE: GAUSSIAN_LEVELS_PR,
    NuisanceKind.SHOT_NOISE: SHOT_NOISE_RATES,
    NuisanceKind.DECIMATE_UNIFORM: DECIMATION_RATES,
    NuisanceKind.DECIMATE_RANDOM: DECIMATION_RATES,
    NuisanceKind.KEYPOINT_ERROR: KEYPOINT_ERRORS_PR,
    NuisanceKind.LRF_ERROR_X: LRF_ERRORS_DEG,
    NuisanceKind.LRF_ERROR_Z: LRF_ERRORS_DEG,
    NuisanceKind.LRF_ERROR_XZ: LRF_ERRORS_DEG,
}


@dataclass(frozen=True)
class NuisanceSpec:
    """One nuisance at one level.

    Units of ``level``: pr for gaussian and keypoint, a fraction of points for
    shot noise, the kept fraction for decimation, degrees for LRF errors.
    """

    kind: NuisanceKind
    level: float
    seed: int = 0

    def __post_init__(self):
        kind = NuisanceKind(self.kind)
        object.__setattr__(self, "kind", kind)
        lo, hi = _RANGES[kind]
        if not lo - 1e-12 <= self.level <= hi + 1e-12:
            raise InvalidInputError(f"{kind.value} level {self.level} outside [{lo:g}, {hi:g}]")

    @property
    def label(self) -> str:
        return self.kind.value

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> NuisanceSpec:
        """Parse ``kind=level``; the level may be a fraction such as ``1/8``."""
        if "=" not in text:
            raise InvalidInputError(f"nuisance must look like kind=level, got {text!r}")
        name, value = text.split("=", 1)
        try:
            kind = NuisanceKind(name.strip().lower())
        except ValueError:
            raise InvalidInputError(
                f"unknown nuisance {name!r}; choose from {', '.join(k.value for k in NuisanceKind)}"
            ) from None
        value = value.strip()
        try:
            if "/" in value:
                num, den = value.split("/", 1)
                level = float(num) / float(den)
            else:
                level = float(value)
        except (ValueError, ZeroDivisionError):
            raise InvalidInputError(f"bad nuisance level {value!r}") from None
        return cls(kind, level, seed)


def _rng(seed):
    return np.random.default_rng(seed)


def add_gaussian_noise(cloud: PointCloud, sigma_pr: float, seed=0,
                       resolution: float | None = None) -> PointCloud:
    """Independent zero-mean Gaussian offsets with std ``sigma_pr * pr`` on every coordinate."""
    if sigma_pr < 0:
        raise InvalidInputError("sigma must be non-negative")
    if sigma_pr == 0:
        return PointCloud(cloud.points, cloud.normals, cloud.resolution_pr)
    pr = resolution if resolution is not None else resolution_of(cloud)
    noise = _rng(seed).normal(scale=sigma_pr * pr, size=cloud.points.shape)
    return PointCloud(cloud.points + noise)


def add_shot_noise(cloud: PointCloud, rate: float, distance: float, seed=0) -> PointCloud:
    """Push ``round(rate * n)`` random points ``distance`` along their normals."""
    if cloud.normals is None:
        raise InvalidInputError("shot noise needs point normals")
    if not 0 <= rate <= 1:
        raise InvalidInputError("shot noise rate must be in [0, 1]")
    n = len(cloud)
    m = int(round(rate * n))
    if m == 0:
        return PointCloud(cloud.points, cloud.normals, cloud.resolution_pr)
    chosen = _rng(seed).choice(n, size=m, replace=False)
    pts = cloud.points.copy()
    pts[chosen] += distance * cloud.normals[chosen]
    return PointCloud(pts)


def shot_noise_indices(n: int, rate: float, seed=0) -> np.ndarray:
    """Indices that :func:`add_shot_noise` moves for this size, rate and seed."""
    m = int(round(rate * n))
    if m == 0:
        return np.zeros(0, dtype=np.intp)
    return _rng(seed).choice(n, size=m, replace=False)


def morton_order(points: np.ndarray, bits: int = 21) -> np.ndarray:
    """Indices sorting the points along a Z-order curve (ties by index)."""
    lo = points.min(axis=0)
    span = np.max(points.max(axis=0) - lo)
    scale = ((1 << bits) - 1) / span if span > 0 else 0.0
    q = np.floor((points - lo) * scale).astype(np.uint64)
    code = np.zeros(points.shape[0], dtype=np.uint64)
    for b in range(bits):
        for axis in range(3):
            bit = (q[:, axis] >> np.uint64(b)) & np.uint64(1)
            code |= bit << np.uint64(3 * b + axis)
    return np.argsort(code, kind="stable")


def decimate(cloud: PointCloud, rate: float, mode: str = "uniform", seed=0) -> PointCloud:
    """Keep ``round(rate * n)`` points.

    ``uniform`` takes evenly strided points along a Morton ordering (every
    ``1/rate``-th point for rates 1/2, 1/4, ...); ``random`` keeps a uniform
    sample without replacement. Kept points stay in their original order.
    """
    if not 0 < rate <= 1:
        raise InvalidInputError("decimation rate must be in (0, 1]")
    n = len(cloud)
    m = int(round(rate * n))
    if m < 2:
        raise DegenerateOutputError(f"decimation to {m} point(s)")
    if m == n:
        return PointCloud(cloud.points, cloud.normals, cloud.resolution_pr)
    mode = mode.lower()
    if mode == "uniform":
        order = morton_order(cloud.points)
        keep = order[(np.arange(m) * n) // m]
    elif mode == "random":
        keep = _rng(seed).choice(n, size=m, replace=False)
    else:
        raise InvalidInputError(f"unknown decimation mode {mode!r}")
    return cloud.subset(np.sort(keep))


def perturb_keypoints(target: PointCloud, target_indices, d_key_pr: float,
                      resolution: float | None = None) -> np.ndarray:
    """Move each target keypoint to the cloud point whose distance to it is closest to ``d_key``.

    Ties go to the lowest point index. Returns new target point indices.
    """
    target_indices = np.asarray(target_indices, dtype=np.intp)
    if d_key_pr < 0:
        raise InvalidInputError("keypoint error must be non-negative")
    if d_key_pr == 0:
        return target_indices.copy()
    pr = resolution if resolution is not None else resolution_of(target)
    d_key = d_key_pr * pr
    pts = target.points
    out = np.empty_like(target_indices)
    for start in range(0, len(target_indices), 256):
        block = target_indices[start:start + 256]
        d = np.linalg.norm(pts[None, :, :] - pts[block][:, None, :], axis=2)
        # argmin returns the first (lowest index) minimum
        out[start:start + 256] = np.argmin(np.abs(d - d_key), axis=1)
    return out


def perturb_lrfs(lrfs, angle_deg: float, axes, seed=0):
    """Independent angular errors for a list of LRFs, one sub-seed per frame."""
    if angle_deg == 0:
        return list(lrfs)
    seq = np.random.SeedSequence(seed)
    children = seq.spawn(len(lrfs))
    return [perturb_lrf(f, angle_deg, axes, np.random.default_rng(c)) for f, c in zip(lrfs, children)]


def detect_boundary(cloud: PointCloud, index: SpatialIndex | None = None, k: int = 20,
                    max_gap_deg: float = 90.0) -> np.ndarray:
    """Flag points whose projected neighbour directions leave an angular gap over ``max_gap_deg``."""
    n = len(cloud)
    k = min(k, n - 1)
    if k < 2:
        raise InvalidInputError("boundary detection needs at least 3 points")
    index = index or build_index(cloud)
    nbr, _ = index.knn_many(cloud.points, k + 1)
    nb = cloud.points[nbr]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, evecs = np.linalg.eigh(cov)
    u, v = evecs[:, :, 2], evecs[:, :, 1]          # tangent plane spanned by the top two
    d = nb - cloud.points[:, None, :]
    a = np.arctan2(np.einsum("nkj,nj->nk", d, v), np.einsum("nkj,nj->nk", d, u))
    # neighbours coinciding with the point carry no direction; duplicating
    # another neighbour's angle adds a zero gap instead
    valid = np.linalg.norm(d, axis=2) > 0
    flags = np.ones(n, dtype=bool)
    has = valid.any(axis=1)
    fill = np.where(has, np.nanmin(np.where(valid, a, np.nan), axis=1, initial=np.inf), 0.0)
    a = np.sort(np.where(valid, a, fill[:, None]), axis=1)
    inner = np.diff(a, axis=1).max(axis=1)
    wrap = 2 * math.pi - (a[:, -1] - a[:, 0])
    flags[has] = np.maximum(inner, wrap)[has] > math.radians(max_gap_deg)
    return flags


def boundary_group(distance: float, radius: float) -> int:
    """Index into :data:`BOUNDARY_GROUP_LABELS` for a distance-to-boundary."""
    ratio = distance / radius
    for g in range(len(BOUNDARY_GROUP_EDGES) - 1, -1, -1):
        if ratio >= BOUNDARY_GROUP_EDGES[g]:
            return g
    return 0


def distance_to_boundary(keypoint, boundary_points, radius: float) -> tuple[float, int]:
    """Distance to the nearest boundary point and its group index.

    With no boundary points the distance is infinite (last group).
    """
    bp = np.asarray(boundary_points, dtype=np.float64).reshape(-1, 3)
    if bp.shape[0] == 0:
        return math.inf, len(BOUNDARY_GROUP_EDGES) - 1
    d = float(np.min(np.linalg.norm(bp - np.asarray(keypoint, dtype=np.float64), axis=1)))
    return d, boundary_group(d, radius)


def apply_cloud_nuisance(cloud: PointCloud, spec: NuisanceSpec, support_radius: float,
                         resolution: float) -> PointCloud:
    """Apply a cloud-level nuisance; normals are estimated first for shot noise."""
    kind = spec.kind
    if kind is NuisanceKind.GAUSSIAN_NOISE:
        return add_gaussian_noise(cloud, spec.level, spec.seed, resolution)
    if kind is NuisanceKind.SHOT_NOISE:
        if cloud.normals is None:
            from .core import estimate_normals
            cloud = estimate_normals(cloud)
        return add_shot_noise(cloud, spec.level, SHOT_NOISE_DISTANCE_FRAC * support_radius, spec.seed)
    if kind is NuisanceKind.DECIMATE_UNIFORM:
        return decimate(cloud, spec.level, "uniform", spec.seed)
    if kind is NuisanceKind.DECIMATE_RANDOM:
        return decimate(cloud, spec.level, "random", spec.seed)
    raise InvalidInputError(f"{kind.value} does not act on clouds")
