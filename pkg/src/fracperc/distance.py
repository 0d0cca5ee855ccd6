"""Distance sets of fractal percolation approximations."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .core import BudgetExceeded, CubeIndex, Realization, max_cubes_budget, subtree
from .intervals import IntervalUnion
from .sums import Certificate, longest_common_interval

FFT_GRID_LIMIT = 2**24


def pair_distance_interval(k1, k2, h):
    """Range ``[min, max]`` of ``|x - y|`` over x, y in two closed cubes of side ``h``."""
    dk = np.abs(np.asarray(k1, dtype=np.int64) - np.asarray(k2, dtype=np.int64))
    lo = h * float(np.linalg.norm(np.maximum(dk - 1, 0)))
    hi = h * float(np.linalg.norm(dk + 1))
    return lo, hi


def _indicator(cubes, side):
    d = cubes.shape[1]
    grid = np.zeros((side,) * d, dtype=float)
    grid[tuple(cubes.T)] = 1.0
    return grid


def difference_counts(A, B, side, max_grid=FFT_GRID_LIMIT):
    """Signed offsets ``kA - kB`` with the number of cube pairs realizing each.

    Uses an FFT correlation of the two indicator grids when the padded grid
    is small enough, otherwise a chunked pairwise enumeration.
    """
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    d = A.shape[1]
    if len(A) == 0 or len(B) == 0:
        return np.empty((0, d), dtype=np.int64), np.empty(0, dtype=np.int64)
    if (2 * side - 1) ** d <= max_grid:
        corr = fftconvolve(_indicator(A, side), np.flip(_indicator(B, side)), mode="full")
        counts = np.rint(corr).astype(np.int64)
        idx = np.argwhere(counts > 0)
        return idx - (side - 1), counts[tuple(idx.T)]
    budget = max_cubes_budget()
    if len(A) * len(B) > budget:
        raise BudgetExceeded(f"{len(A) * len(B)} cube pairs exceed budget {budget}")
    offs, cnts = [], []
    step = max(1, 2_000_000 // len(B))
    for s in range(0, len(A), step):
        diff = (A[s : s + step, None, :] - B[None, :, :]).reshape(-1, d)
        u, c = np.unique(diff, axis=0, return_counts=True)
        offs.append(u)
        cnts.append(c)
    u, inv = np.unique(np.concatenate(offs), axis=0, return_inverse=True)
    return u, np.bincount(inv.ravel(), weights=np.concatenate(cnts)).astype(np.int64)


def _abs_offset_grid(A, B, side, max_grid):
    """Boolean grid over ``|kA - kB|`` (componentwise) marking realized offsets."""
    d = A.shape[1]
    if (2 * side - 1) ** d > max_grid:
        return None
    corr = fftconvolve(_indicator(A, side), np.flip(_indicator(B, side)), mode="full") > 0.5
    grid = np.zeros((side,) * d, dtype=bool)
    for signs in np.ndindex(*(2,) * d):
        sl = tuple(slice(side - 1, None) if s == 0 else slice(side - 1, None, -1) for s in signs)
        grid |= corr[sl]
    return grid


def difference_vectors(A, B, side, max_grid=FFT_GRID_LIMIT):
    """Distinct ``|kA - kB|`` vectors (componentwise absolute value), shape ``(K, d)``."""
    A = np.asarray(A, dtype=np.int64)
    B = np.asarray(B, dtype=np.int64)
    if len(A) == 0 or len(B) == 0:
        return np.empty((0, A.shape[1]), dtype=np.int64)
    grid = _abs_offset_grid(A, B, side, max_grid)
    if grid is not None:
        return np.argwhere(grid)
    dk, _ = difference_counts(A, B, side, max_grid)
    return np.unique(np.abs(dk), axis=0)


def _intervals_from_differences(dk, h, tol):
    dk = np.sort(np.abs(dk), axis=1)
    lo = h * np.linalg.norm(np.maximum(dk - 1, 0), axis=1)
    hi = h * np.linalg.norm(dk + 1, axis=1)
    return IntervalUnion(lo, hi, tol)


def _level(x, n, M):
    if isinstance(x, Realization):
        if M is not None and M != x.M:
            raise ValueError("realizations must share M")
        return x.levels[n], x.M
    if M is None:
        raise ValueError("M is required for raw cube arrays")
    return np.asarray(x, dtype=np.int64), M


def distance_set(A, B, n, M=None, tol=None):
    """``{|x - y| : x in A_n, y in B_n}`` as an interval union.

    ``A`` and ``B`` are realizations (level ``n`` is used) or raw level-``n``
    cube arrays, in which case ``M`` must be given.
    """
    A, M = _level(A, n, M)
    B, M = _level(B, n, M)
    h = float(M) ** -n
    tol = 1e-12 * h if tol is None else tol
    return _intervals_from_differences(difference_vectors(A, B, M**n), h, tol)


def self_distance_set(real, n, distinct=False):
    """Distance set of the level-``n`` approximation with itself.

    With ``distinct=True`` only cube pairs differing in every coordinate
    contribute; such pairs are built from disjoint sets of coordinate slabs.
    """
    cubes = real.levels[n]
    h = float(real.M) ** -n
    dk = difference_vectors(cubes, cubes, real.M**n)
    if distinct and len(dk):
        dk = dk[np.all(dk != 0, axis=1)]
    return _intervals_from_differences(dk, h, 1e-12 * h)


@dataclass
class DistanceProfile:
    n: int
    union: IntervalUnion
    certificate: Certificate | None
    pairs: int

    def to_dict(self):
        return {
            "kind": "distance",
            "n": self.n,
            "intervals": self.union.to_list(),
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "pairs": self.pairs,
        }


def distance_profile(A, B, n, M=None, lower=0.0):
    """Distance union at level ``n`` with its longest sub-interval above ``lower``."""
    a, M = _level(A, n, M)
    b, M = _level(B, n, M)
    union = distance_set(a, b, n, M)
    return DistanceProfile(n, union, longest_common_interval([union], 0.0, lower), len(a) * len(b))


def sphere_slice_counts(A, B, n, t_values, M=None):
    """Number of cube pairs whose distance range contains ``t`` for each ``t``."""
    a, M = _level(A, n, M)
    b, M = _level(B, n, M)
    h = float(M) ** -n
    dk, counts = difference_counts(a, b, M**n)
    dk = np.abs(dk)
    lo = h * np.linalg.norm(np.maximum(dk - 1, 0), axis=1)
    hi = h * np.linalg.norm(dk + 1, axis=1)
    t = np.asarray(t_values, dtype=float)
    ol, oh = np.argsort(lo), np.argsort(hi)
    cl = np.concatenate([[0], np.cumsum(counts[ol])])
    ch = np.concatenate([[0], np.cumsum(counts[oh])])
    started = cl[np.searchsorted(lo[ol], t, side="right")]
    ended = ch[np.searchsorted(hi[oh], t, side="left")]
    return started - ended


def sphere_slice_lipschitz(A, B, n, t_values, M=None):
    """Largest finite-difference slope of the pair count, divided by ``M^n``.

    A count-based stand-in for the Lipschitz constant of the distance-sphere
    slice volume; it is measured, never asserted.
    """
    t = np.asarray(t_values, dtype=float)
    c = sphere_slice_counts(A, B, n, t, M).astype(float)
    _, M = _level(A, n, M)
    if len(t) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(c)) / np.diff(t))) / M**n


def default_lower_cutoff(real, depth=None):
    """Distances below this are covered trivially by neighbouring deepest cubes."""
    depth = real.depth if depth is None else depth
    return 2.0 * float(real.M) ** -depth * math.sqrt(real.d)


def distance_certificate(real, depth=None, min_len=0.0, lower=None):
    """Longest interval inside the self distance set at every level up to ``depth``.

    Distances below ``lower`` (default ``2 M^-depth sqrt(d)``) are ignored.
    Returns None for extinct realizations or when no interval reaches ``min_len``.
    """
    depth = real.depth if depth is None else depth
    if real.count(depth) == 0:
        return None
    lower = default_lower_cutoff(real, depth) if lower is None else lower
    return longest_common_interval(
        (self_distance_set(real, n) for n in range(depth + 1)), min_len, lower
    )


def pair_certificate(real, cube_a, cube_b, depth=None, min_len=0.0):
    """Certificate for ``D(A, B)`` where ``A, B`` are the parts inside two retained cubes."""
    depth = real.depth if depth is None else depth
    if cube_a.n != cube_b.n:
        raise ValueError("anchor cubes must share a level")
    sa, sb = subtree(real, cube_a), subtree(real, cube_b)
    unions = []
    for n in range(cube_a.n, depth + 1):
        scale = real.M ** (n - cube_a.n)
        A = sa.levels[n - cube_a.n] + np.array(cube_a.k) * scale
        B = sb.levels[n - cube_b.n] + np.array(cube_b.k) * scale
        unions.append(distance_set(A, B, n, real.M))
    return longest_common_interval(unions, min_len)


def far_anchor_pair(real, n):
    """Two retained level-``n`` cubes at maximal index distance, or None."""
    cubes = real.levels[n]
    if len(cubes) < 2:
        return None
    diff = cubes[:, None, :] - cubes[None, :, :]
    dist = (diff**2).sum(axis=2)
    i, j = np.unravel_index(int(np.argmax(dist)), dist.shape)
    return CubeIndex(real.M, n, cubes[i]), CubeIndex(real.M, n, cubes[j])


__all__ = [
    "Certificate",
    "DistanceProfile",
    "difference_counts",
    "difference_vectors",
    "distance_profile",
    "distance_certificate",
    "distance_set",
    "far_anchor_pair",
    "pair_certificate",
    "pair_distance_interval",
    "self_distance_set",
    "sphere_slice_counts",
    "sphere_slice_lipschitz",
]
