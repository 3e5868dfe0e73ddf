"""Procedural surfaces standing in for the real benchmark datasets."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .core import PointCloud, RigidTransform, compute_resolution
from .errors import InvalidInputError


class ShapeKind(enum.Enum):
    BUMPY_SPHERE = "bumpy_sphere"
    HEIGHTFIELD = "heightfield"
    SUPERELLIPSOID = "superellipsoid"


@dataclass(frozen=True)
class SyntheticShapeSpec:
    kind: ShapeKind = ShapeKind.BUMPY_SPHERE
    n_points: int = 5000
    seed: int = 0
    pose_seed: int = 1
    resolution: float | None = None  # rescale so the source cloud has this pr
    max_translation: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        if self.n_points < 100:
            raise InvalidInputError("synthetic shapes need at least 100 points")
        if self.resolution is not None and not self.resolution > 0:
            raise InvalidInputError("resolution must be positive")


def fibonacci_sphere(n: int) -> np.ndarray:
    """Near-uniform unit directions on the sphere."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _random_directions(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _bump_field(dirs, rng, n_bumps=24, amplitude=0.12, widths=(0.15, 0.4)):
    """Sum of Gaussian bumps on the sphere evaluated at unit directions.

    ``widths`` bounds the angular bump width in radians.
    """
    centers = _random_directions(rng, n_bumps)
    widths = rng.uniform(widths[0], widths[1], n_bumps)
    amps = rng.uniform(-amplitude, amplitude, n_bumps)
    ang = np.arccos(np.clip(dirs @ centers.T, -1.0, 1.0))
    return (amps * np.exp(-0.5 * (ang / widths) ** 2)).sum(axis=1)


def _jitter_dirs(dirs, rng, scale):
    t = dirs + rng.normal(scale=scale, size=dirs.shape)
    return t / np.linalg.norm(t, axis=1, keepdims=True)


def bumpy_sphere(n: int, rng: np.random.Generator) -> np.ndarray:
    spacing = math.sqrt(4 * math.pi / n)
    dirs = _jitter_dirs(fibonacci_sphere(n), rng, 0.15 * spacing)
    # many narrow bumps give detail at the scale of a 15 pr support region
    radius = 1.0 + _bump_field(dirs, rng, n_bumps=200, amplitude=0.15, widths=(0.05, 0.15))
    return dirs * radius[:, None]


def heightfield(n: int, rng: np.random.Generator) -> np.ndarray:
    side = int(math.ceil(math.sqrt(n)))
    g = (np.arange(side) + 0.5) / side * 2.0 - 1.0
    x, y = np.meshgrid(g, g, indexing="xy")
    xy = np.stack([x.ravel(), y.ravel()], axis=1)[:n]
    xy = xy + rng.normal(scale=0.15 * 2.0 / side, size=xy.shape)
    n_bumps = 18
    centers = rng.uniform(-1, 1, size=(n_bumps, 2))
    widths = rng.uniform(0.12, 0.35, n_bumps)
    amps = rng.uniform(-0.25, 0.25, n_bumps)
    d2 = ((xy[:, None, :] - centers[None]) ** 2).sum(axis=2)
    z = (amps * np.exp(-0.5 * d2 / widths ** 2)).sum(axis=1)
    return np.column_stack([xy, z])


def superellipsoid(n: int, rng: np.random.Generator) -> np.ndarray:
    e1, e2 = rng.uniform(0.4, 1.6, 2)
    axes = rng.uniform(0.7, 1.3, 3)
    spacing = math.sqrt(4 * math.pi / n)
    d = _jitter_dirs(fibonacci_sphere(n), rng, 0.15 * spacing)
    # radial scaling that puts each direction on the implicit surface
    # (|x/a|^(2/e2) + |y/b|^(2/e2))^(e2/e1) + |z/c|^(2/e1) = 1
    ax, ay, az = (np.abs(d) / axes).T
    f = (ax ** (2 / e2) + ay ** (2 / e2)) ** (e2 / e1) + az ** (2 / e1)
    r = f ** (-e1 / 2)
    pts = d * r[:, None]
    # small bumps break the shape's mirror symmetries
    bumps = _bump_field(d, rng, n_bumps=20, amplitude=0.06)
    return pts * (1.0 + bumps)[:, None]


_GENERATORS = {
    ShapeKind.BUMPY_SPHERE: bumpy_sphere,
    ShapeKind.HEIGHTFIELD: heightfield,
    ShapeKind.SUPERELLIPSOID: superellipsoid,
}


def random_pose(rng: np.random.Generator, max_translation: float = 1.0) -> RigidTransform:
    rot = Rotation.random(random_state=rng).as_matrix()
    return RigidTransform(rot, rng.uniform(-max_translation, max_translation, 3))


def generate_source(spec: SyntheticShapeSpec) -> PointCloud:
    rng = np.random.default_rng(spec.seed)
    pts = _GENERATORS[spec.kind](spec.n_points, rng)
    cloud = PointCloud(pts)
    pr = compute_resolution(cloud)
    if spec.resolution is not None:
        cloud = PointCloud(pts * (spec.resolution / pr))
        compute_resolution(cloud)
    return cloud


def generate_synthetic_pair(spec: SyntheticShapeSpec):
    """Source surface, its rigidly moved copy, and the ground-truth pose."""
    source = generate_source(spec)
    pose = random_pose(np.random.default_rng(spec.pose_seed), spec.max_translation)
    target = PointCloud(pose.apply(source.points), resolution_pr=source.resolution_pr)
    return source, target, pose
