"""Descriptor kinds and their partition parameters."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields

from ..errors import InvalidInputError


class Kind(enum.Enum):
    SHOT = "shot"
    USC = "usc"
    ROPS = "rops"
    TRISI = "trisi"
    SGC = "sgc"
    TOLDI = "toldi"
    RCS = "rcs"
    LOVS = "lovs"
    RSM = "rsm"

    @property
    def binary(self) -> bool:
        return self in (Kind.LOVS, Kind.RSM)

    @property
    def tag(self) -> int:
        """Stable one-byte tag used in feature dumps."""
        return list(Kind).index(self)

    @property
    def cubic(self) -> bool:
        """Whether the descriptor encodes the inscribed cube instead of the sphere."""
        return self in (Kind.SGC, Kind.LOVS)

    @classmethod
    def parse(cls, name) -> Kind:
        if isinstance(name, Kind):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise InvalidInputError(
                f"unknown descriptor {name!r}; choose from {', '.join(k.value for k in cls)}"
            ) from None

    @classmethod
    def from_tag(cls, tag: int) -> Kind:
        kinds = list(cls)
        if not 0 <= tag < len(kinds):
            raise InvalidInputError(f"unknown descriptor tag {tag}")
        return kinds[tag]


ALL_KINDS = tuple(Kind)


@dataclass(frozen=True)
class DescriptorParams:
    # SHOT: 8 azimuth x 2 elevation x 2 radial sub-volumes, 11 cosine bins
    shot_azimuth: int = 8
    shot_elevation: int = 2
    shot_radial: int = 2
    shot_n_bin: int = 11
    # USC: K elevation, L azimuth, J log-spaced radial shells
    usc_k: int = 12
    usc_l: int = 11
    usc_j: int = 15
    usc_min_radius_frac: float = 0.1
    usc_density_radius_pr: float = 2.0
    rops_n_rot: int = 3
    rops_n_div: int = 5
    trisi_n_div: int = 15
    sgc_n_div: int = 8
    sgc_levels: int = 16
    toldi_n_div: int = 20
    rcs_n_rot: int = 6
    rcs_n_c: int = 12
    lovs_n_div: int = 9
    rsm_n_rot: int = 6
    rsm_n_div: int = 11

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and v < 1:
                raise InvalidInputError(f"{f.name} must be >= 1")
        if not 0 < self.usc_min_radius_frac < 1:
            raise InvalidInputError("usc_min_radius_frac must be in (0, 1)")
        if not self.usc_density_radius_pr > 0:
            raise InvalidInputError("usc_density_radius_pr must be positive")

    @property
    def shot_n_div(self) -> int:
        return self.shot_azimuth * self.shot_elevation * self.shot_radial

    def dim(self, kind: Kind) -> int:
        kind = Kind.parse(kind)
        if kind is Kind.SHOT:
            return self.shot_n_div * self.shot_n_bin
        if kind is Kind.USC:
            return self.usc_k * self.usc_l * self.usc_j
        if kind is Kind.ROPS:
            return self.rops_n_rot * 3 * 3 * 5
        if kind is Kind.TRISI:
            return 3 * self.trisi_n_div ** 2
        if kind is Kind.SGC:
            return 2 * self.sgc_n_div ** 3
        if kind is Kind.TOLDI:
            return 3 * self.toldi_n_div ** 2
        if kind is Kind.RCS:
            return self.rcs_n_rot * self.rcs_n_c
        if kind is Kind.LOVS:
            return self.lovs_n_div ** 3
        return self.rsm_n_rot * self.rsm_n_div ** 2

    def nbytes(self, kind: Kind) -> int:
        """Serialized payload size: float32 per value, or bits packed 8 per byte."""
        kind = Kind.parse(kind)
        d = self.dim(kind)
        return math.ceil(d / 8) if kind.binary else 4 * d


DEFAULT_PARAMS = DescriptorParams()
