"""Histogram-based representations: SHOT, USC, RoPS and TriSI.

All functions here take points already expressed in the keypoint's LRF, so
the keypoint is the origin and the LRF axes are the coordinate axes.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvalidInputError

_TWO_PI = 2.0 * math.pi


def _bin(values, lo, hi, n):
    """Uniform bins over [lo, hi]; the upper edge falls in the last bin."""
    idx = np.floor((values - lo) * (n / (hi - lo))).astype(np.intp)
    return np.clip(idx, 0, n - 1)


def polar_angle(pts):
    """Angle from +z in [0, pi]; the origin maps to 0."""
    return np.arctan2(np.hypot(pts[:, 0], pts[:, 1]), pts[:, 2])


def azimuth(pts):
    """Angle around z in [0, 2*pi)."""
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    return np.where(phi < 0, phi + _TWO_PI, phi)


# ---------------------------------------------------------------------------
# SHOT


def shot(pts, normals, radius, params):
    """Per sub-volume histograms of cos(normal, z), concatenated and L2-normalized."""
    n_az, n_el, n_rad, n_bin = (params.shot_azimuth, params.shot_elevation,
                                params.shot_radial, params.shot_n_bin)
    out = np.zeros(n_az * n_el * n_rad * n_bin)
    if pts.shape[0] == 0:
        return out
    r = np.linalg.norm(pts, axis=1)
    keep = r <= radius
    pts, normals, r = pts[keep], normals[keep], r[keep]
    a = _bin(azimuth(pts), 0.0, _TWO_PI, n_az)
    e = _bin(polar_angle(pts), 0.0, math.pi, n_el)
    s = _bin(r, 0.0, radius, n_rad)
    c = _bin(np.clip(normals[:, 2], -1.0, 1.0), -1.0, 1.0, n_bin)
    cell = ((s * n_el + e) * n_az + a) * n_bin + c
    out += np.bincount(cell, minlength=out.size)
    norm = np.linalg.norm(out)
    if norm > 0:
        out /= norm
    return out


# ---------------------------------------------------------------------------
# USC


def usc_shells(radius, params):
    """Log-spaced radial boundaries from the discard radius out to ``radius``."""
    r_min = params.usc_min_radius_frac * radius
    return np.exp(np.linspace(math.log(r_min), math.log(radius), params.usc_j + 1))


def usc_bin_volumes(radius, params):
    """Volume of every (radial, elevation, azimuth) bin, shape (J, K, L)."""
    shells = usc_shells(radius, params)
    radial = (shells[1:] ** 3 - shells[:-1] ** 3) / 3.0
    theta = np.linspace(0.0, math.pi, params.usc_k + 1)
    polar = np.cos(theta[:-1]) - np.cos(theta[1:])
    wedge = _TWO_PI / params.usc_l
    vol = radial[:, None, None] * polar[None, :, None] * wedge
    return np.broadcast_to(vol, (params.usc_j, params.usc_k, params.usc_l))


def usc_weight(density, volume):
    """Contribution of one point: 1 / (density * cbrt(bin volume))."""
    return 1.0 / (density * np.cbrt(volume))


def local_density(pts, density_radius):
    """Number of patch points within ``density_radius`` of each point (itself included)."""
    tree = cKDTree(pts)
    counts = tree.query_ball_point(pts, density_radius, return_length=True)
    return np.maximum(np.asarray(counts, dtype=np.float64), 1.0)


def usc(pts, radius, density_radius, params):
    J, K, L = params.usc_j, params.usc_k, params.usc_l
    out = np.zeros(J * K * L)
    if pts.shape[0] == 0:
        return out
    rho = local_density(pts, density_radius)
    r = np.linalg.norm(pts, axis=1)
    shells = usc_shells(radius, params)
    keep = (r >= shells[0]) & (r <= radius)
    if not np.any(keep):
        return out
    p, r, rho = pts[keep], r[keep], rho[keep]
    j = np.clip(np.searchsorted(shells, r, side="right") - 1, 0, J - 1)
    k = _bin(polar_angle(p), 0.0, math.pi, K)
    l = _bin(azimuth(p), 0.0, _TWO_PI, L)
    vol = usc_bin_volumes(radius, params)
    w = usc_weight(rho, vol[j, k, l])
    out += np.bincount((j * K + k) * L + l, weights=w, minlength=out.size)
    return out


# ---------------------------------------------------------------------------
# RoPS


def _check_distribution(D, negative_only=False):
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2:
        raise InvalidInputError("distribution must be a 2D grid")
    if np.any(D < 0):
        raise InvalidInputError("distribution has negative entries")
    if not negative_only and abs(D.sum() - 1.0) > 1e-9:
        raise InvalidInputError("distribution must sum to 1")
    return D


def central_moment(D, m: int, n: int) -> float:
    """Central moment of order (m, n) of a normalized 2D grid, 1-based indices."""
    D = _check_distribution(D)
    if m < 0 or n < 0 or m + n < 1:
        raise InvalidInputError("moment orders must satisfy m, n >= 0 and m + n >= 1")
    i = np.arange(1, D.shape[0] + 1, dtype=np.float64)[:, None]
    j = np.arange(1, D.shape[1] + 1, dtype=np.float64)[None, :]
    ib = float((i * D).sum())
    jb = float((j * D).sum())
    return float(((i - ib) ** m * (j - jb) ** n * D).sum())


def shannon_entropy(D) -> float:
    """Natural-log entropy of a 2D grid with 0 log 0 = 0."""
    D = _check_distribution(D, negative_only=True)
    nz = D[D > 0]
    return float(-(nz * np.log(nz)).sum())


def rotation_about(axis: int, theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    if axis == 0:
        return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])
    if axis == 1:
        return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


ROPS_PLANES = ((0, 1), (1, 2), (0, 2))  # xy, yz, xz


def rops_rotations(params):
    return [rotation_about(axis, k * math.pi / params.rops_n_rot)
            for axis in range(3) for k in range(params.rops_n_rot)]


def _grid_stats(grids):
    """(mu11, mu21, mu12, mu22, entropy) for a stack of normalized grids."""
    n = grids.shape[-1]
    i = np.arange(1, n + 1, dtype=np.float64)[None, :, None]
    j = np.arange(1, n + 1, dtype=np.float64)[None, None, :]
    ib = (i * grids).sum(axis=(1, 2))[:, None, None]
    jb = (j * grids).sum(axis=(1, 2))[:, None, None]
    di, dj = i - ib, j - jb

    def mu(m, k):
        return (di ** m * dj ** k * grids).sum(axis=(1, 2))

    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(grids > 0, grids * np.log(grids), 0.0)
    ent = -plogp.sum(axis=(1, 2))
    return np.stack([mu(1, 1), mu(2, 1), mu(1, 2), mu(2, 2), ent], axis=1)


def rops(pts, params):
    """Rotate about each LRF axis, project onto three planes, summarize each density map."""
    n_maps = params.rops_n_rot * 3 * 3
    if pts.shape[0] == 0:
        return np.zeros(n_maps * 5)
    nd = params.rops_n_div
    rots = np.stack(rops_rotations(params))              # (3*n_rot, 3, 3)
    rotated = np.einsum("rij,mj->rmi", rots, pts)         # (3*n_rot, m, 3)
    u = np.stack([rotated[:, :, a] for a, _ in ROPS_PLANES], axis=1)   # (R, 3, m)
    v = np.stack([rotated[:, :, b] for _, b in ROPS_PLANES], axis=1)
    u = u.reshape(n_maps, -1)
    v = v.reshape(n_maps, -1)

    def grid_index(c):
        lo = c.min(axis=1, keepdims=True)
        span = c.max(axis=1, keepdims=True) - lo
        safe = np.where(span > 0, span, 1.0)
        idx = np.floor((c - lo) / safe * nd).astype(np.intp)
        return np.clip(idx, 0, nd - 1)

    cell = grid_index(u) * nd + grid_index(v)
    cell += (np.arange(n_maps) * nd * nd)[:, None]
    counts = np.bincount(cell.ravel(), minlength=n_maps * nd * nd).astype(np.float64)
    grids = counts.reshape(n_maps, nd, nd) / pts.shape[0]
    return _grid_stats(grids).ravel()


# ---------------------------------------------------------------------------
# TriSI


def spin_coordinates(pts, axis):
    """(alpha, beta) of each point about a unit spin axis through the origin."""
    beta = pts @ axis
    alpha = np.sqrt(np.maximum((pts * pts).sum(axis=1) - beta * beta, 0.0))
    return alpha, beta


def trisi(pts, radius, params):
    nd = params.trisi_n_div
    out = np.zeros((3, nd * nd))
    if pts.shape[0] == 0:
        return out.ravel()
    for a, axis in enumerate(np.eye(3)):
        alpha, beta = spin_coordinates(pts, axis)
        keep = (alpha <= radius) & (np.abs(beta) <= radius)
        cell = _bin(alpha[keep], 0.0, radius, nd) * nd + _bin(beta[keep], -radius, radius, nd)
        grid = np.bincount(cell, minlength=nd * nd).astype(np.float64)
        total = grid.sum()
        if total > 0:
            out[a] = grid / total
    return out.ravel()
