from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .params import DEFAULT_PARAMS, DescriptorParams, Kind


@dataclass(eq=False)
class Feature:
    """A descriptor vector tagged with its kind.

    Binary kinds hold a ``uint8`` array of 0/1 values; the rest hold float64.
    ``empty`` marks features computed from an empty patch (all zeros).
    """

    kind: Kind
    payload: np.ndarray
    empty: bool = False

    def __post_init__(self):
        self.kind = Kind.parse(self.kind)
        if self.kind.binary:
            payload = np.asarray(self.payload)
            if payload.size and not np.all((payload == 0) | (payload == 1)):
                raise InvalidInputError("bit features must hold only 0/1")
            self.payload = payload.astype(np.uint8).ravel()
        else:
            self.payload = np.asarray(self.payload, dtype=np.float64).ravel()
            if not np.all(np.isfinite(self.payload)):
                raise InvalidInputError("feature contains non-finite values")

    @property
    def length(self) -> int:
        return self.payload.size

    def check_length(self, params: DescriptorParams = DEFAULT_PARAMS) -> None:
        if self.length != params.dim(self.kind):
            raise InvalidInputError(f"{self.kind.value} feature has length {self.length}, "
                                    f"expected {params.dim(self.kind)}")


def feature_distance(a: Feature, b: Feature) -> float:
    """Euclidean distance for real-valued kinds, Hamming count for binary ones."""
    if a.kind is not b.kind:
        raise InvalidInputError(f"cannot compare {a.kind.value} with {b.kind.value}")
    if a.length != b.length:
        raise InvalidInputError("feature lengths differ")
    if a.kind.binary:
        return float(np.count_nonzero(a.payload != b.payload))
    return float(np.linalg.norm(a.payload - b.payload))
