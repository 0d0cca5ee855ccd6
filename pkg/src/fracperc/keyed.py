"""Counter-based keyed hashing for per-cube randomness.

Every retain/discard decision is a pure function of ``(seed, level, coords)``,
so realizations can be generated lazily, in any order, and replayed exactly.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LEVEL_SALT = np.uint64(0xD6E8FEB86659FD93)
_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """Vectorized splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        z = z ^ (z >> np.uint64(31))
    return z


def cube_hash(seed, level, coords):
    """Hash of the level-``level`` cubes with integer coordinates ``coords``.

    ``coords`` has shape ``(N, d)``; returns a uint64 array of length N.
    """
    coords = np.asarray(coords, dtype=np.int64)
    with np.errstate(over="ignore"):
        salt = splitmix64(np.uint64(level) * _LEVEL_SALT)
    base = splitmix64(np.uint64(seed & _MASK64) ^ salt)
    h = np.full(coords.shape[0], base, dtype=np.uint64)
    for i in range(coords.shape[1]):
        h = splitmix64(h ^ coords[:, i].astype(np.uint64))
    return h


def seeded_cube_hash(seeds, level, coords):
    """``cube_hash`` for many seeds at once; returns shape ``(len(seeds), N)``."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    coords = np.asarray(coords, dtype=np.int64)
    with np.errstate(over="ignore"):
        salt = splitmix64(np.uint64(level) * _LEVEL_SALT)
    h = np.broadcast_to(splitmix64(seeds ^ salt)[:, None], (len(seeds), len(coords)))
    for i in range(coords.shape[1]):
        h = splitmix64(h ^ coords[None, :, i].astype(np.uint64))
    return h


def threshold(p):
    """Fixed-point retention threshold: a cube is kept iff hash < threshold.

    Returns None for p >= 1 (keep everything).
    """
    if p >= 1.0:
        return None
    return np.uint64(int(p * 2.0**64))


def retain_mask(seed, level, coords, p):
    thr = threshold(p)
    if thr is None:
        return np.ones(len(coords), dtype=bool)
    return cube_hash(seed, level, coords) < thr


def derive_seed(master_seed, index):
    """Seed of trial ``index`` under ``master_seed``; deterministic and 64-bit."""
    with np.errstate(over="ignore"):
        salt = splitmix64(np.uint64(index & _MASK64) + _LEVEL_SALT)
    return int(splitmix64(np.uint64(master_seed & _MASK64) ^ salt))
