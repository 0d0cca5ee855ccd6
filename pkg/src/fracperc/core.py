"""Fractal percolation realizations: construction, counting, survival, dimension."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .keyed import derive_seed, retain_mask

FORMAT_NAME = "fracperc-realization"
FORMAT_VERSION = 1
DEFAULT_MAX_CUBES = 50_000_000


class BudgetExceeded(RuntimeError):
    """Raised when a computation would exceed the configured resource budget."""


class ExtinctError(ValueError):
    """Raised when an operation needs a non-empty level and the realization died out."""


def max_cubes_budget():
    return int(float(os.environ.get("FRACPERC_MAX_CUBES", DEFAULT_MAX_CUBES)))


@dataclass(frozen=True)
class PercolationParams:
    d: int
    M: int
    p: float
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension d must be >= 1, got {self.d}")
        if self.M < 2:
            raise ValueError(f"subdivision M must be >= 2, got {self.M}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"probability out of (0,1]: {self.p}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def mean_offspring(self):
        return self.p * self.M**self.d

    def with_seed(self, seed):
        return PercolationParams(self.d, self.M, self.p, seed)

    def to_dict(self):
        return {"d": self.d, "M": self.M, "p": self.p, "seed": self.seed}


@dataclass(frozen=True)
class CubeIndex:
    """Level-``n`` M-adic cube with integer coordinates ``k``."""

    M: int
    n: int
    k: tuple

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        side = self.M**self.n
        if self.n < 0 or any(not 0 <= v < side for v in self.k):
            raise ValueError(f"cube index out of range: n={self.n}, k={self.k}")

    @property
    def d(self):
        return len(self.k)

    @property
    def side(self):
        return float(self.M) ** -self.n

    @property
    def center(self):
        return tuple((v + 0.5) * self.side for v in self.k)

    @property
    def lower(self):
        return tuple(v * self.side for v in self.k)

    def parent(self):
        if self.n == 0:
            raise ValueError("the unit cube has no parent")
        return CubeIndex(self.M, self.n - 1, tuple(v // self.M for v in self.k))

    def path(self):
        """M-adic digit string (one digit vector per level) from the root."""
        digits = []
        k = self.k
        for _ in range(self.n):
            digits.append(tuple(v % self.M for v in k))
            k = tuple(v // self.M for v in k)
        return digits[::-1]


def _child_offsets(M, d):
    grids = np.indices((M,) * d).reshape(d, -1).T
    return grids.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Realization:
    """Nested retained cubes per level: ``levels[n]`` is an ``(N_n, d)`` int64 array."""

    params: PercolationParams
    depth: int
    levels: tuple
    origin: CubeIndex | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        levels = []
        for arr in self.levels:
            a = np.ascontiguousarray(arr, dtype=np.int64).reshape(-1, self.params.d)
            a.setflags(write=False)
            levels.append(a)
        object.__setattr__(self, "levels", tuple(levels))
        if len(self.levels) != self.depth + 1:
            raise ValueError("levels must hold depth+1 arrays (level 0 included)")

    @property
    def d(self):
        return self.params.d

    @property
    def M(self):
        return self.params.M

    def cubes(self, n):
        self._check_level(n)
        return self.levels[n]

    def count(self, n):
        return int(self.cubes(n).shape[0])

    def _check_level(self, n):
        if not 0 <= n <= self.depth:
            raise IndexError(f"level {n} outside [0, {self.depth}]")

    def extinction_level(self):
        """First empty level, or None if level ``depth`` is non-empty."""
        for n, arr in enumerate(self.levels):
            if arr.shape[0] == 0:
                return n
        return None

    def _keys(self, n):
        cache_key = ("keys", n)
        if cache_key not in self._cache:
            side = self.M**n
            if side**self.d < 2**62:
                mult = np.array([side ** (self.d - 1 - i) for i in range(self.d)], dtype=np.int64)
                keys = np.sort(self.levels[n] @ mult)
            else:
                keys = {tuple(row) for row in self.levels[n].tolist()}
            self._cache[cache_key] = keys
        return self._cache[cache_key]

    def contains(self, n, coords):
        """Boolean mask: which rows of ``coords`` are retained level-``n`` cubes."""
        self._check_level(n)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, self.d)
        keys = self._keys(n)
        if isinstance(keys, set):
            return np.array([tuple(row) in keys for row in coords.tolist()], dtype=bool)
        side = self.M**n
        inside = np.all((coords >= 0) & (coords < side), axis=1)
        mult = np.array([side ** (self.d - 1 - i) for i in range(self.d)], dtype=np.int64)
        q = np.where(inside[:, None], coords, 0) @ mult
        pos = np.searchsorted(keys, q)
        hit = pos < len(keys)
        hit[hit] = keys[pos[hit]] == q[hit]
        return hit & inside

    def is_retained(self, cube):
        if cube.n > self.depth:
            return False
        return bool(self.contains(cube.n, [cube.k])[0])

    def validate(self):
        """Assert the nesting and range invariants; raises AssertionError."""
        assert self.levels[0].shape == (1, self.d) and not self.levels[0].any()
        for n in range(1, self.depth + 1):
            arr = self.levels[n]
            if arr.shape[0] == 0:
                continue
            assert arr.min() >= 0 and arr.max() < self.M**n, f"index out of range at level {n}"
            assert self.contains(n - 1, arr // self.M).all(), f"orphan cube at level {n}"

    def to_dict(self):
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "params": self.params.to_dict(),
            "depth": self.depth,
            "origin": None if self.origin is None else {"n": self.origin.n, "k": list(self.origin.k)},
            "levels": [arr.ravel().tolist() for arr in self.levels],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != FORMAT_NAME or data.get("version") != FORMAT_VERSION:
            raise ValueError("unsupported realization format")
        params = PercolationParams(**data["params"])
        origin = data.get("origin")
        if origin is not None:
            origin = CubeIndex(params.M, origin["n"], origin["k"])
        levels = tuple(np.array(lv, dtype=np.int64).reshape(-1, params.d) for lv in data["levels"])
        return cls(params, data["depth"], levels, origin)

    def save(self, path):
        """Write to ``.npz`` (binary) or JSON (any other suffix)."""
        path = Path(path)
        if path.suffix == ".npz":
            header = self.to_dict()
            del header["levels"]
            arrays = {f"level_{n}": arr for n, arr in enumerate(self.levels)}
            np.savez_compressed(path, header=json.dumps(header), **arrays)
        else:
            path.write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.suffix == ".npz":
            with np.load(path) as z:
                header = json.loads(str(z["header"]))
                header["levels"] = [z[f"level_{n}"] for n in range(header["depth"] + 1)]
            return cls.from_dict(header)
        return cls.from_dict(json.loads(path.read_text()))


def theoretical_dimension(params):
    """Almost-sure dimension of the limit set given survival.

    Negative values mean the process dies out almost surely.
    """
    return math.log(params.p * params.M**params.d) / math.log(params.M)


def expected_total_cubes(params, depth):
    m = params.mean_offspring
    return sum(m**n for n in range(depth + 1))


def generate(params, depth, max_cubes=None):
    """Generate a realization down to level ``depth``.

    Each child of a retained cube is kept iff its keyed hash falls below the
    retention threshold, so the result depends only on ``(params, depth)``.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    budget = max_cubes_budget() if max_cubes is None else max_cubes
    if expected_total_cubes(params, depth) > budget:
        raise BudgetExceeded(
            f"expected {expected_total_cubes(params, depth):.3g} cubes exceeds budget {budget}"
        )
    d, M = params.d, params.M
    offsets = _child_offsets(M, d)
    levels = [np.zeros((1, d), dtype=np.int64)]
    current = levels[0]
    for n in range(1, depth + 1):
        if current.shape[0] == 0:
            levels.append(current)
            continue
        children = (current[:, None, :] * M + offsets[None, :, :]).reshape(-1, d)
        current = children[retain_mask(params.seed, n, children, params.p)]
        levels.append(current)
    return Realization(params, depth, tuple(levels))


def retained_count(real, n):
    return real.count(n)


def survival_estimate(params, depth, trials):
    """Fraction of ``trials`` seeds (derived from ``params.seed``) alive at ``depth``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    alive = 0
    for i in range(trials):
        real = generate(params.with_seed(derive_seed(params.seed, i)), depth)
        alive += real.count(depth) > 0
    return alive / trials


def subtree(real, cube):
    """Rescaled copy of the realization inside ``cube`` (depth reduced by ``cube.n``)."""
    if not real.is_retained(cube):
        raise KeyError(f"cube {cube} is not retained")
    base = np.array(cube.k, dtype=np.int64)
    levels = []
    for j in range(real.depth - cube.n + 1):
        arr = real.levels[cube.n + j]
        scale = real.M**j
        mask = np.all(arr // scale == base, axis=1)
        levels.append(arr[mask] - base * scale)
    return Realization(real.params, real.depth - cube.n, tuple(levels), origin=cube)


def box_count_slope(real, n_lo, n_hi):
    """Least-squares slope of log #cubes against n log M over ``[n_lo, n_hi]``."""
    if not 0 <= n_lo < n_hi <= real.depth:
        raise ValueError("need 0 <= n_lo < n_hi <= depth")
    ns = np.arange(n_lo, n_hi + 1)
    counts = np.array([real.count(n) for n in ns], dtype=float)
    if counts[-1] == 0:
        raise ExtinctError(f"level {n_hi} is empty")
    x = ns * math.log(real.M)
    return float(np.polyfit(x, np.log(counts), 1)[0])
