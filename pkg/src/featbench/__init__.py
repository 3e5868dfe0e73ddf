"""Local 3D feature descriptors and a nuisance-robustness benchmark harness."""

__version__ = "0.1.0"

from .core import (
    Lrf, LocalPatch, PointCloud, RigidTransform, SpatialIndex, build_index, canonical_lrf,
    compute_resolution, estimate_normals, extract_cubic_patch, extract_spherical_patch,
    perturb_lrf, propagate_lrf, transform_to_lrf,
)
from .descriptors import ALL_KINDS, DEFAULT_PARAMS, DescriptorParams, Feature, Kind, describe
from .errors import FeatBenchError

__all__ = [
    "ALL_KINDS", "DEFAULT_PARAMS", "DescriptorParams", "FeatBenchError", "Feature", "Kind",
    "LocalPatch", "Lrf", "PointCloud", "RigidTransform", "SpatialIndex", "build_index",
    "canonical_lrf", "compute_resolution", "describe", "estimate_normals",
    "extract_cubic_patch", "extract_spherical_patch", "perturb_lrf", "propagate_lrf",
    "transform_to_lrf", "__version__",
]
