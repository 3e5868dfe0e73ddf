"""Binary feature dumps.

A dump is a flat sequence of records, one per feature::

    uint32  keypoint index   (little-endian)
    uint8   kind tag         (position of the kind in ``Kind``)
    payload                  float32 LE values, or bits packed 8 per byte
                             (first bit in the most significant position,
                             zero padded)

There is no file header; the first record's tag fixes the kind and hence
the record size for the rest of the file.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from ..errors import DataError, InvalidInputError
from .extract import FeatureSet
from .params import DEFAULT_PARAMS, DescriptorParams, Kind

_HEAD = struct.Struct("<IB")


def encode_payload(kind: Kind, row: np.ndarray) -> bytes:
    if kind.binary:
        return np.packbits(np.asarray(row, dtype=np.uint8)).tobytes()
    return np.asarray(row, dtype="<f4").tobytes()


def decode_payload(kind: Kind, raw: bytes, dim: int) -> np.ndarray:
    if kind.binary:
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:dim]
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def write_features(path, features: FeatureSet) -> int:
    """Write ``features`` to ``path``; returns the number of bytes written."""
    kind = features.kind
    if kind.binary:
        payload = np.packbits(features.matrix.astype(np.uint8), axis=1)
    else:
        payload = features.matrix.astype("<f4").view(np.uint8).reshape(len(features), -1)
    idx = features.keypoint_indices
    if len(idx) and (idx.min() < 0 or idx.max() > 0xFFFFFFFF):
        raise InvalidInputError("keypoint index does not fit in uint32")
    rec = np.empty((len(features), _HEAD.size + payload.shape[1]), dtype=np.uint8)
    rec[:, :4] = idx.astype("<u4").view(np.uint8).reshape(-1, 4)
    rec[:, 4] = kind.tag
    rec[:, 5:] = payload
    data = rec.tobytes()
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def read_features(path, params: DescriptorParams = DEFAULT_PARAMS) -> FeatureSet:
    with open(path, "rb") as f:
        data = f.read()
    if not data:
        raise DataError(f"{os.fspath(path)}: empty feature dump")
    if len(data) < _HEAD.size:
        raise DataError(f"{os.fspath(path)}: truncated record at byte offset 0")
    kind = Kind.from_tag(data[4])
    size = _HEAD.size + params.nbytes(kind)
    if len(data) % size:
        offset = (len(data) // size) * size
        raise DataError(f"{os.fspath(path)}: truncated record at byte offset {offset}")
    rec = np.frombuffer(data, dtype=np.uint8).reshape(-1, size)
    bad = np.flatnonzero(rec[:, 4] != kind.tag)
    if bad.size:
        raise DataError(f"{os.fspath(path)}: mixed kind tags, first at byte offset {bad[0] * size}")
    idx = rec[:, :4].copy().view("<u4").ravel().astype(np.int64)
    body = rec[:, 5:]
    dim = params.dim(kind)
    if kind.binary:
        mat = np.unpackbits(body, axis=1)[:, :dim].astype(np.uint8)
    else:
        mat = body.copy().view("<f4").astype(np.float64)
    return FeatureSet(kind, mat, idx)
