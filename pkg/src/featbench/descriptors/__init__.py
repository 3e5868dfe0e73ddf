"""The nine local feature representations and helpers to compute them in bulk."""

from __future__ import annotations

import numpy as np

from ..core import Frame, LocalPatch
from ..errors import InvalidInputError
from . import histogram as _h
from . import signature as _s
from .feature import Feature, feature_distance
from .histogram import central_moment, shannon_entropy, usc_bin_volumes, usc_weight
from .params import ALL_KINDS, DEFAULT_PARAMS, DescriptorParams, Kind

__all__ = [
    "ALL_KINDS", "DEFAULT_PARAMS", "DescriptorParams", "Feature", "Kind",
    "central_moment", "compute_payload", "describe", "describe_lovs", "describe_rcs",
    "describe_rops", "describe_rsm", "describe_sgc", "describe_shot", "describe_toldi",
    "describe_trisi", "describe_usc", "feature_distance", "shannon_entropy",
    "usc_bin_volumes", "usc_weight",
]


def _mean_nn(pts):
    if pts.shape[0] < 2:
        return None
    from scipy.spatial import cKDTree
    d, _ = cKDTree(pts).query(pts, k=2)
    return float(d[:, 1].mean()) or None


def usc_density_radius(patch: LocalPatch, params: DescriptorParams) -> float:
    pr = patch.resolution_pr or _mean_nn(patch.points) or patch.support_radius / 15.0
    return params.usc_density_radius_pr * pr


def compute_payload(kind: Kind, pts: np.ndarray, normals, radius: float,
                    params: DescriptorParams = DEFAULT_PARAMS,
                    density_radius: float | None = None) -> np.ndarray:
    """Raw feature vector from LRF-frame points (no empty-patch handling)."""
    if kind is Kind.SHOT:
        if normals is None:
            raise InvalidInputError("SHOT needs point normals")
        return _h.shot(pts, normals, radius, params)
    if kind is Kind.USC:
        return _h.usc(pts, radius, density_radius, params)
    if kind is Kind.ROPS:
        return _h.rops(pts, params)
    if kind is Kind.TRISI:
        return _h.trisi(pts, radius, params)
    if kind is Kind.SGC:
        return _s.sgc(pts, radius, params)
    if kind is Kind.TOLDI:
        return _s.toldi(pts, radius, params)
    if kind is Kind.RCS:
        return _s.rcs(pts, radius, params)
    if kind is Kind.LOVS:
        return _s.lovs(pts, radius, params)
    return _s.rsm(pts, radius, params)


def describe(kind, patch: LocalPatch, params: DescriptorParams = DEFAULT_PARAMS) -> Feature:
    """Describe a Local-frame patch.

    An empty patch yields the all-zero feature with ``empty=True``.
    """
    kind = Kind.parse(kind)
    if patch.frame is not Frame.LOCAL:
        raise InvalidInputError("descriptors need a patch in its LRF (Local frame)")
    if kind is Kind.SHOT and patch.normals is None:
        raise InvalidInputError("SHOT needs point normals")
    if len(patch) == 0:
        dtype = np.uint8 if kind.binary else np.float64
        return Feature(kind, np.zeros(params.dim(kind), dtype=dtype), empty=True)
    density = usc_density_radius(patch, params) if kind is Kind.USC else None
    payload = compute_payload(kind, patch.points, patch.normals, patch.support_radius,
                              params, density)
    return Feature(kind, payload)


def describe_shot(patch, params=DEFAULT_PARAMS):
    return describe(Kind.SHOT, patch, params)


def describe_usc(patch, params=DEFAULT_PARAMS):
    return describe(Kind.USC, patch, params)


def describe_rops(patch, params=DEFAULT_PARAMS):
    return describe(Kind.ROPS, patch, params)


def describe_trisi(patch, params=DEFAULT_PARAMS):
    return describe(Kind.TRISI, patch, params)


def describe_sgc(patch, params=DEFAULT_PARAMS):
    return describe(Kind.SGC, patch, params)


def describe_toldi(patch, params=DEFAULT_PARAMS):
    return describe(Kind.TOLDI, patch, params)


def describe_rcs(patch, params=DEFAULT_PARAMS):
    return describe(Kind.RCS, patch, params)


def describe_lovs(patch, params=DEFAULT_PARAMS):
    return describe(Kind.LOVS, patch, params)


def describe_rsm(patch, params=DEFAULT_PARAMS):
    return describe(Kind.RSM, patch, params)
