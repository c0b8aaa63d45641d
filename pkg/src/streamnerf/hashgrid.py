"""Multiresolution hash encoding with trilinear interpolation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

HASH_PRIMES = (1, 2_654_435_761, 805_459_861)

# Corner offsets in (i, j, k) order, corner c = 4*di + 2*dj + dk.
_CORNERS = np.array([[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)], dtype=np.int64)


@dataclass(frozen=True)
class HashGridConfig:
    levels: int = 8
    table_size: int = 2**14
    features_per_level: int = 2
    base_resolution: int = 16
    growth_factor: float = 1.5

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        t = self.table_size
        if t < 1 or t & (t - 1):
            raise ValueError(f"table_size must be a power of two, got {t}")
        if self.base_resolution < 1 or self.growth_factor < 1.0:
            raise ValueError("base_resolution >= 1 and growth_factor >= 1 required")

    @cached_property
    def resolutions(self) -> np.ndarray:
        l = np.arange(self.levels)
        return np.floor(self.base_resolution * self.growth_factor**l).astype(np.int64)

    @property
    def output_dim(self) -> int:
        return self.levels * self.features_per_level

    @property
    def n_params(self) -> int:
        return self.levels * self.table_size * self.features_per_level


def hash_corners(corners: np.ndarray, table_size: int) -> np.ndarray:
    """Table index for integer corner coordinates (..., 3)."""
    c = corners.astype(np.uint64)
    h = c[..., 0] * np.uint64(HASH_PRIMES[0])
    h ^= c[..., 1] * np.uint64(HASH_PRIMES[1])
    h ^= c[..., 2] * np.uint64(HASH_PRIMES[2])
    return (h & np.uint64(table_size - 1)).astype(np.int64)


@dataclass
class EncodingCache:
    flat_index: np.ndarray  # (L, n, 8) index into the flattened (L*T) table rows
    weights: np.ndarray  # (L, n, 8)


def encode(cfg: HashGridConfig, tables: np.ndarray, xn: np.ndarray, want_cache: bool = False):
    """Encode points already normalized to [0, 1]^3.

    Returns features of shape (n, L*F), level-major, and optionally the
    gather indices/weights needed for the backward pass.
    """
    n = xn.shape[0]
    L, T, F = cfg.levels, cfg.table_size, cfg.features_per_level
    scaled = xn[None, :, :] * cfg.resolutions[:, None, None].astype(np.float64)
    cell = np.floor(scaled)
    frac = scaled - cell
    corners = cell.astype(np.int64)[:, :, None, :] + _CORNERS  # (L, n, 8, 3)
    idx = hash_corners(corners, T)
    idx += (np.arange(L, dtype=np.int64) * T)[:, None, None]

    # w = prod over axes of (frac if offset else 1 - frac)
    fr = frac[:, :, None, :]
    w = np.where(_CORNERS == 1, fr, 1.0 - fr).prod(axis=-1)  # (L, n, 8)

    gathered = tables.reshape(L * T, F)[idx]  # (L, n, 8, F)
    feats = np.einsum("lnc,lncf->nlf", w, gathered).reshape(n, L * F)
    if want_cache:
        return feats, EncodingCache(idx, w)
    return feats


def encode_backward(cfg: HashGridConfig, cache: EncodingCache, grad_feats: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the tables given dLoss/dfeatures of shape (n, L*F)."""
    L, T, F = cfg.levels, cfg.table_size, cfg.features_per_level
    n = grad_feats.shape[0]
    g = grad_feats.reshape(n, L, F).transpose(1, 0, 2)  # (L, n, F)
    flat_idx = cache.flat_index.ravel()
    out = np.empty((L * T, F))
    for f in range(F):
        contrib = cache.weights * g[:, :, None, f]  # (L, n, 8)
        out[:, f] = np.bincount(flat_idx, weights=contrib.ravel(), minlength=L * T)
    return out.reshape(L, T, F)


@numba.njit(cache=True, nogil=True)
def _encode_kernel(xn, resolutions, tables, feats, idx_out, w_out, want_cache):
    L, T, F = tables.shape
    mask = np.uint64(T - 1)
    p1 = np.uint64(HASH_PRIMES[0])
    p2 = np.uint64(HASH_PRIMES[1])
    p3 = np.uint64(HASH_PRIMES[2])
    for n in range(xn.shape[0]):
        for l in range(L):
            res = resolutions[l]
            sx = xn[n, 0] * res
            sy = xn[n, 1] * res
            sz = xn[n, 2] * res
            fx = np.floor(sx)
            fy = np.floor(sy)
            fz = np.floor(sz)
            tx = sx - fx
            ty = sy - fy
            tz = sz - fz
            ix = np.int64(fx)
            iy = np.int64(fy)
            iz = np.int64(fz)
            for f in range(F):
                feats[n, l * F + f] = 0.0
            for c in range(8):
                di = (c >> 2) & 1
                dj = (c >> 1) & 1
                dk = c & 1
                w = (tx if di else 1.0 - tx) * (ty if dj else 1.0 - ty) * (tz if dk else 1.0 - tz)
                h = (
                    (np.uint64(ix + di) * p1)
                    ^ (np.uint64(iy + dj) * p2)
                    ^ (np.uint64(iz + dk) * p3)
                ) & mask
                k = np.int64(h)
                for f in range(F):
                    feats[n, l * F + f] += w * tables[l, k, f]
                if want_cache:
                    idx_out[l, n, c] = l * T + k
                    w_out[l, n, c] = w


@numba.njit(cache=True, nogil=True)
def _scatter_kernel(flat_index, weights, grad_feats, out):
    L, N, _ = flat_index.shape
    F = out.shape[1]
    for l in range(L):
        for n in range(N):
            for c in range(8):
                k = flat_index[l, n, c]
                w = weights[l, n, c]
                for f in range(F):
                    out[k, f] += w * grad_feats[n, l * F + f]


def encode_fast(cfg: HashGridConfig, tables: np.ndarray, xn: np.ndarray, want_cache: bool = False):
    """Compiled equivalent of :func:`encode`."""
    n = xn.shape[0]
    L = cfg.levels
    feats = np.empty((n, cfg.output_dim))
    if want_cache:
        idx = np.empty((L, n, 8), dtype=np.int64)
        w = np.empty((L, n, 8))
    else:
        idx = np.empty((0, 0, 0), dtype=np.int64)
        w = np.empty((0, 0, 0))
    _encode_kernel(
        np.ascontiguousarray(xn, dtype=np.float64), cfg.resolutions, tables, feats, idx, w, want_cache
    )
    if want_cache:
        return feats, EncodingCache(idx, w)
    return feats


def encode_backward_fast(cfg: HashGridConfig, cache: EncodingCache, grad_feats: np.ndarray) -> np.ndarray:
    L, T, F = cfg.levels, cfg.table_size, cfg.features_per_level
    out = np.zeros((L * T, F))
    _scatter_kernel(cache.flat_index, cache.weights, np.ascontiguousarray(grad_feats), out)
    return out.reshape(L, T, F)
