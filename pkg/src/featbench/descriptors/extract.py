"""Bulk extraction of features at many keypoints."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..core import PointCloud, SpatialIndex, cube_half_edge, resolution_of
from ..errors import InvalidInputError
from . import compute_payload
from .feature import Feature
from .params import DEFAULT_PARAMS, DescriptorParams, Kind


@dataclass(eq=False)
class FeatureSet:
    """Features of one kind for an ordered list of keypoints.

    ``matrix`` has one row per keypoint: float64 values, or 0/1 ``uint8``
    for binary kinds.
    """

    kind: Kind
    matrix: np.ndarray
    keypoint_indices: np.ndarray
    empty: np.ndarray = field(default=None)

    def __post_init__(self):
        self.keypoint_indices = np.asarray(self.keypoint_indices, dtype=np.int64)
        if self.empty is None:
            self.empty = np.zeros(len(self.keypoint_indices), dtype=bool)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, i) -> Feature:
        return Feature(self.kind, self.matrix[i], bool(self.empty[i]))

    def as_float32(self) -> np.ndarray:
        """Values as they are stored on disk (float32 for real kinds)."""
        if self.kind.binary:
            return self.matrix.astype(np.float64)
        return self.matrix.astype(np.float32).astype(np.float64)

    @classmethod
    def from_features(cls, features, keypoint_indices=None) -> FeatureSet:
        features = list(features)
        if not features:
            raise InvalidInputError("no features")
        kind = features[0].kind
        if any(f.kind is not kind for f in features):
            raise InvalidInputError("mixed descriptor kinds")
        if keypoint_indices is None:
            keypoint_indices = np.arange(len(features))
        mat = np.stack([f.payload for f in features])
        return cls(kind, mat, keypoint_indices, np.array([f.empty for f in features]))


def extract_features(cloud: PointCloud, index: SpatialIndex, keypoints, lrfs, kinds,
                     radius: float, params: DescriptorParams = DEFAULT_PARAMS,
                     keypoint_indices=None, timings: dict | None = None) -> dict[Kind, FeatureSet]:
    """Describe the spherical (or inscribed cubic) patch at each keypoint.

    ``lrfs[i]`` gives the axes used at ``keypoints[i]``; its origin is
    ignored and the keypoint itself becomes the local origin. When
    ``timings`` is a dict, per-patch descriptor times in seconds are
    appended under each kind.
    """
    kinds = [Kind.parse(k) for k in kinds]
    keypoints = np.asarray(keypoints, dtype=np.float64).reshape(-1, 3)
    if len(lrfs) != keypoints.shape[0]:
        raise InvalidInputError("need one LRF per keypoint")
    if Kind.SHOT in kinds and cloud.normals is None:
        raise InvalidInputError("SHOT needs point normals")
    n = keypoints.shape[0]
    if keypoint_indices is None:
        keypoint_indices = np.arange(n)
    density_radius = params.usc_density_radius_pr * resolution_of(cloud) if Kind.USC in kinds else None
    h = cube_half_edge(radius)

    mats = {}
    for k in kinds:
        mats[k] = np.zeros((n, params.dim(k)), dtype=np.uint8 if k.binary else np.float64)
    empty = np.zeros(n, dtype=bool)
    if timings is not None:
        for k in kinds:
            timings.setdefault(k, [])

    neighbourhoods = index.radius_many(keypoints, radius)
    for i, (kp, lrf, idx) in enumerate(zip(keypoints, lrfs, neighbourhoods)):
        if idx.size == 0:
            empty[i] = True
            continue
        basis = lrf.basis
        t0 = time.perf_counter()
        # + 0.0 normalizes -0.0 so angles at the keypoint are frame independent
        local = (cloud.points[idx] - kp) @ basis + 0.0
        normals = cloud.normals[idx] @ basis + 0.0 if cloud.normals is not None else None
        transform_time = time.perf_counter() - t0
        cube = None
        for k in kinds:
            t0 = time.perf_counter()
            pts = local
            if k.cubic:
                if cube is None:
                    cube = local[np.max(np.abs(local), axis=1) <= h]
                pts = cube
            if pts.shape[0]:
                mats[k][i] = compute_payload(k, pts, normals, radius, params, density_radius)
            if timings is not None:
                timings[k].append(time.perf_counter() - t0 + transform_time)
    return {k: FeatureSet(k, mats[k], keypoint_indices, empty.copy()) for k in kinds}
