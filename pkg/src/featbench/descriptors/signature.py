"""Signature-based representations: SGC, TOLDI, RCS, LoVS and RSM.

Inputs are LRF-frame points. SGC and LoVS expect the cube-cropped patch
(half-edge ``R / sqrt(3)``); the others take the spherical patch.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import cube_half_edge
from .histogram import _bin, rotation_about


def _voxel_index(pts, half, n):
    """Integer voxel coordinates in an n^3 grid over [-half, half]^3."""
    return _bin(pts, -half, half, n)


def sgc_quantize(u, levels):
    """Quantize voxel-local coordinates in [0, 1] to ``levels`` integer steps.

    The small offset keeps exact step boundaries (a voxel centre, say) from
    dropping a level through rounding in the coordinate subtraction.
    """
    return np.clip(np.floor(np.asarray(u) * levels + 1e-9).astype(np.intp), 0, levels - 1)


def sgc_compress(qx, qy, qz, levels):
    return (qz * levels + qy) * levels + qx


def sgc(pts, radius, params):
    """Per voxel the compressed centroid code and the point count, interleaved."""
    n, levels = params.sgc_n_div, params.sgc_levels
    out = np.zeros((n ** 3, 2))
    h = cube_half_edge(radius)
    inside = np.max(np.abs(pts), axis=1) <= h if pts.shape[0] else np.zeros(0, bool)
    pts = pts[inside]
    if pts.shape[0] == 0:
        return out.ravel()
    vox = _voxel_index(pts, h, n)
    flat = vox[:, 0] + n * vox[:, 1] + n * n * vox[:, 2]
    count = np.bincount(flat, minlength=n ** 3).astype(np.float64)
    occupied = count > 0
    sums = np.stack([np.bincount(flat, weights=pts[:, a], minlength=n ** 3) for a in range(3)], axis=1)
    centroid = sums[occupied] / count[occupied, None]

    edge = 2.0 * h / n
    cells = np.flatnonzero(occupied)
    cell_xyz = np.stack([cells % n, (cells // n) % n, cells // (n * n)], axis=1)
    u = (centroid - (-h + cell_xyz * edge)) / edge
    q = sgc_quantize(u, levels)
    code = sgc_compress(q[:, 0], q[:, 1], q[:, 2], levels)
    out[occupied, 0] = code / float(levels ** 3)
    out[occupied, 1] = count[occupied] / count.max()
    return out.ravel()


TOLDI_PLANES = ((0, 1, 2), (1, 2, 0), (0, 2, 1))  # (u, v, depth) for xy, yz, xz


def toldi(pts, radius, params):
    """Three local depth images holding the normalized minimum signed distance per cell."""
    nd = params.toldi_n_div
    out = np.full((3, nd * nd), np.inf)
    for p, (a, b, d) in enumerate(TOLDI_PLANES):
        if pts.shape[0] == 0:
            break
        cell = _bin(pts[:, a], -radius, radius, nd) * nd + _bin(pts[:, b], -radius, radius, nd)
        np.minimum.at(out[p], cell, pts[:, d])
    empty = ~np.isfinite(out)
    out = np.clip((out + radius) / (2.0 * radius), 0.0, 1.0)
    out[empty] = 1.0
    return out.ravel()


def view_rotations(n_rot):
    """Rotations about x, y and z by k * pi / (3 n_rot), k = 0..n_rot-1, applied together."""
    step = math.pi / (3 * n_rot)
    rots = []
    for k in range(n_rot):
        t = k * step
        rots.append(rotation_about(2, t) @ rotation_about(1, t) @ rotation_about(0, t))
    return np.stack(rots)


def rcs(pts, radius, params):
    """Contour signatures: farthest projected distance per ray sector, per rotated view."""
    n_rot, n_c = params.rcs_n_rot, params.rcs_n_c
    out = np.zeros((n_rot, n_c))
    if pts.shape[0] == 0:
        return out.ravel()
    views = np.einsum("rij,mj->rmi", view_rotations(n_rot), pts)
    x, y = views[:, :, 0], views[:, :, 1]
    dist = np.hypot(x, y)
    phi = np.arctan2(y, x)
    sector = np.rint(phi / (2.0 * math.pi / n_c)).astype(np.intp) % n_c
    cell = sector + (np.arange(n_rot) * n_c)[:, None]
    flat = out.ravel()
    np.maximum.at(flat, cell.ravel(), dist.ravel())
    return flat.reshape(n_rot, n_c).ravel() / radius


def lovs(pts, radius, params):
    """Voxel occupancy bits, x index fastest."""
    n = params.lovs_n_div
    out = np.zeros(n ** 3, dtype=np.uint8)
    h = cube_half_edge(radius)
    if pts.shape[0] == 0:
        return out
    pts = pts[np.max(np.abs(pts), axis=1) <= h]
    vox = _voxel_index(pts, h, n)
    out[vox[:, 0] + n * vox[:, 1] + n * n * vox[:, 2]] = 1
    return out


def connected_cells(occ):
    """Keep occupied cells that have at least one occupied 8-neighbour.

    ``occ`` is a stack of boolean images, shape (views, rows, cols).
    """
    padded = np.pad(occ, ((0, 0), (1, 1), (1, 1)))
    rows, cols = occ.shape[1:]
    neighbours = np.zeros(occ.shape, dtype=np.int32)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                neighbours += padded[:, 1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
    return occ & (neighbours > 0)


def rsm(pts, radius, params):
    """Silhouette images of rotated views with isolated cells removed, row-major per view."""
    n_rot, nd = params.rsm_n_rot, params.rsm_n_div
    occ = np.zeros((n_rot, nd, nd), dtype=bool)
    if pts.shape[0]:
        views = np.einsum("rij,mj->rmi", view_rotations(n_rot), pts)
        col = _bin(views[:, :, 0], -radius, radius, nd)
        row = _bin(views[:, :, 1], -radius, radius, nd)
        inside = (np.abs(views[:, :, 0]) <= radius) & (np.abs(views[:, :, 1]) <= radius)
        view_id = np.broadcast_to(np.arange(n_rot)[:, None], col.shape)
        occ[view_id[inside], row[inside], col[inside]] = True
    return connected_cells(occ).astype(np.uint8).ravel()
