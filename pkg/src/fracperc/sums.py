"""Algebraic sums of independent one-dimensional percolations and their slice machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BudgetExceeded, PercolationParams, Realization, generate, max_cubes_budget
from .intervals import IntervalUnion
from .keyed import derive_seed
from .slices2d import Line, line_box_chords


class InfeasibleError(ValueError):
    """Raised when probabilities violate the preconditions of an operation."""


@dataclass(frozen=True, eq=False)
class FamilyRealization:
    """``d`` independent one-dimensional realizations sharing ``M`` and ``depth``."""

    M: int
    probs: tuple
    depth: int
    members: tuple
    seed: int = 0

    @property
    def d(self):
        return len(self.members)

    @property
    def p(self):
        """Retention probability of a product cube given its parent."""
        return math.prod(self.probs)

    def alive(self, n):
        return all(m.count(n) > 0 for m in self.members)

    def coords(self, i, n):
        return self.members[i].levels[n][:, 0]


def generate_family(M, probs, depth, seed=0, require_supercritical=True):
    """Generate independent members; member ``i`` uses ``derive_seed(seed, i)``."""
    probs = tuple(float(p) for p in probs)
    if len(probs) < 1:
        raise ValueError("need at least one member")
    if require_supercritical and any(p <= 1.0 / M for p in probs):
        raise InfeasibleError(f"every p_i must exceed 1/M = {1.0 / M}")
    members = tuple(
        generate(PercolationParams(1, M, p, derive_seed(seed, i)), depth) for i, p in enumerate(probs)
    )
    return FamilyRealization(M, probs, depth, members, seed)


@dataclass(frozen=True)
class Coefficients:
    a: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        object.__setattr__(self, "a", a)
        if any(v <= 0 for v in a):
            raise ValueError("coefficients must be positive")
        if abs(math.fsum(v * v for v in a) - 1.0) > 1e-12:
            raise ValueError("coefficients must have unit Euclidean norm")

    @classmethod
    def from_raw(cls, raw):
        """Normalize arbitrary non-zero coefficients (signs dropped, reflection is harmless)."""
        raw = [abs(float(v)) for v in raw]
        if any(v == 0 for v in raw):
            raise ValueError("coefficients must be non-zero")
        norm = math.sqrt(math.fsum(v * v for v in raw))
        return cls(tuple(v / norm for v in raw))

    @property
    def array(self):
        return np.array(self.a)

    @property
    def total(self):
        return math.fsum(self.a)

    @property
    def d(self):
        return len(self.a)


def _check(family, coeffs, n):
    if coeffs.d != family.d:
        raise ValueError("coefficient count must match the number of members")
    if not 0 <= n <= family.depth:
        raise IndexError(f"level {n} outside [0, {family.depth}]")


def member_union(real, n, tol=0.0):
    """The level-``n`` approximation of a one-dimensional realization as intervals."""
    h = float(real.M) ** -n
    k = real.levels[n][:, 0].astype(float)
    return IntervalUnion(k * h, (k + 1) * h, tol)


def merge_tolerance(coeffs):
    return 1e-12 * coeffs.total


def algebraic_sum(family, coeffs, n, max_pairs=None):
    """Level-``n`` approximation of ``sum_i a_i E^(i)`` as a normalized interval union."""
    _check(family, coeffs, n)
    tol = merge_tolerance(coeffs)
    budget = max_cubes_budget() if max_pairs is None else max_pairs
    acc = None
    for a, member in zip(coeffs.a, family.members):
        part = member_union(member, n).scale(a)
        part = IntervalUnion(part.lo, part.hi, tol)
        acc = part if acc is None else acc.minkowski_sum(part, max_pairs=budget)
        if acc.is_empty:
            return IntervalUnion.empty(tol)
    return acc


@dataclass(frozen=True)
class Certificate:
    lo: float
    hi: float

    @property
    def length(self):
        return self.hi - self.lo

    def to_dict(self):
        return {"lo": self.lo, "hi": self.hi, "len": self.length}


def longest_common_interval(unions, min_len=0.0, lower=None):
    """Longest interval inside every union of ``unions`` (optionally above ``lower``)."""
    common = None
    for u in unions:
        common = u if common is None else common.intersection(u)
        if common.is_empty:
            return None
    if common is None:
        return None
    if lower is not None:
        common = common.clip(lo=lower)
    best = common.longest()
    if best is None or best[1] - best[0] < min_len:
        return None
    return Certificate(*best)


def interval_certificate(family, coeffs, depth=None, min_len=1e-12):
    """Longest interval contained in the sum approximation at every level up to ``depth``."""
    if min_len <= 0:
        raise ValueError("min_len must be > 0")
    depth = family.depth if depth is None else depth
    if not family.alive(depth):
        return None
    return longest_common_interval(
        (algebraic_sum(family, coeffs, n) for n in range(depth + 1)), min_len
    )


def _adjust_sorted(p, M):
    d = len(p)
    p1 = p[0]
    rest = math.prod(p[1:])
    if rest < M ** (-d + 2):
        return list(p)
    if p1 > M ** (-1 + 1 / d):
        delta = 0.5 * (M ** (-1 + 1 / d) + M ** (-1 + 1 / (d - 1)))
        return [min(delta, p1)] * d
    lo_target = M ** (-d + 1) / p1
    hi_target = M ** (-d + 2)
    target = math.sqrt(lo_target * hi_target)

    def prod_at(t):
        return math.prod(t * pi + (1 - t) * p1 for pi in p[1:])

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if prod_at(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    t0 = 0.5 * (lo + hi)
    return [p1] + [t0 * pi + (1 - t0) * p1 for pi in p[1:]]


def adjust_probabilities(probs, M):
    """Lower the probabilities so every (d-1)-subproduct drops below ``M^(2-d)``.

    The output ``q`` keeps ``prod q > M^(1-d)`` and ``1/M < q_i <= p_i``.
    """
    p = [float(v) for v in probs]
    d = len(p)
    if d < 2:
        raise InfeasibleError("need at least two probabilities")
    if any(v <= 1.0 / M or v > 1.0 for v in p):
        raise InfeasibleError(f"every p_i must lie in (1/M, 1] with M = {M}")
    if math.prod(p) <= M ** (-d + 1):
        raise InfeasibleError(f"product {math.prod(p)} does not exceed M^(1-d) = {M ** (-d + 1)}")
    order = sorted(range(d), key=lambda i: (p[i], i))
    q_sorted = _adjust_sorted([p[i] for i in order], M)
    q = [0.0] * d
    for pos, i in enumerate(order):
        q[i] = q_sorted[pos]
    return np.array(q)


def adjustment_violations(probs, q, M, tol=1e-9):
    """Names of the conclusions ``q`` fails (empty when all hold within ``tol``)."""
    d = len(q)
    out = []
    if not math.prod(q) > M ** (-d + 1) - tol:
        out.append("product")
    for j in range(d):
        if not math.prod(q[i] for i in range(d) if i != j) < M ** (-d + 2) + tol:
            out.append(f"subproduct_{j}")
    for i in range(d):
        if not (1.0 / M - tol < q[i] <= probs[i] + tol):
            out.append(f"range_{i}")
    return out


def product_cubes(family, n, max_cubes=None):
    """All retained level-``n`` product cubes, shape ``(K, d)``."""
    parts = [family.coords(i, n) for i in range(family.d)]
    total = math.prod(len(p) for p in parts)
    budget = max_cubes_budget() if max_cubes is None else max_cubes
    if total > budget:
        raise BudgetExceeded(f"{total} product cubes exceed budget {budget}")
    if total == 0:
        return np.empty((0, family.d), dtype=np.int64)
    grids = np.meshgrid(*parts, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def product_volume(family, n):
    """d-dimensional volume of the level-``n`` product approximation."""
    h = float(family.M) ** -n
    return math.prod(m.count(n) * h for m in family.members)


def slice_cubes(family, coeffs, t, n, max_cubes=None):
    """Retained level-``n`` product cubes whose interior meets ``a . y = t``."""
    _check(family, coeffs, n)
    d = family.d
    h = float(family.M) ** -n
    a = coeffs.array
    rho = coeffs.total * h / 2 * (1 - 1e-12)
    parts = [family.coords(i, n) for i in range(d)]
    if any(len(p) == 0 for p in parts):
        return np.empty((0, d), dtype=np.int64)
    budget = max_cubes_budget() if max_cubes is None else max_cubes
    head_total = math.prod(len(p) for p in parts[:-1])
    if head_total > budget:
        raise BudgetExceeded(f"{head_total} partial product cubes exceed budget {budget}")
    if d > 1:
        grids = np.meshgrid(*parts[:-1], indexing="ij")
        head = np.stack([g.ravel() for g in grids], axis=1)
    else:
        head = np.empty((1, 0), dtype=np.int64)
    partial = ((head + 0.5) * h) @ a[:-1]
    last = np.sort(parts[-1])
    centers = (last + 0.5) * h
    lo = np.searchsorted(centers, (t - rho - partial) / a[-1], side="right")
    hi = np.searchsorted(centers, (t + rho - partial) / a[-1], side="left")
    sizes = np.maximum(hi - lo, 0)
    if sizes.sum() > budget:
        raise BudgetExceeded(f"{sizes.sum()} slice cubes exceed budget {budget}")
    rows = np.repeat(np.arange(len(head)), sizes)
    offs = np.arange(sizes.sum()) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    picks = last[np.repeat(lo, sizes) + offs]
    cubes = np.concatenate([head[rows], picks[:, None]], axis=1)
    inside = np.abs(((cubes + 0.5) * h) @ a - t) < rho
    return cubes[inside]


def _plane_basis(a):
    a = np.asarray(a, dtype=float)
    _, _, vt = np.linalg.svd(a[None, :])
    return vt[1:]


def _plane_cube_areas(lower, h, a, t):
    """Polygon area of the plane ``a . y = t`` inside each cube (d = 3)."""
    K = lower.shape[0]
    if K == 0:
        return np.empty(0)
    pts, valid = [], []
    for j in range(3):
        o1, o2 = [i for i in range(3) if i != j]
        for b1 in (0.0, 1.0):
            for b2 in (0.0, 1.0):
                v = lower.copy()
                v[:, o1] += b1 * h
                v[:, o2] += b2 * h
                s = (t - v @ a) / (a[j] * h)
                ok = (s >= -1e-12) & (s <= 1 + 1e-12)
                v[:, j] += np.clip(s, 0.0, 1.0) * h
                pts.append(v)
                valid.append(ok)
    P = np.stack(pts, axis=1)
    V = np.stack(valid, axis=1)
    nvalid = V.sum(axis=1)
    safe = np.maximum(nvalid, 1)
    centroid = (P * V[:, :, None]).sum(axis=1) / safe[:, None]
    basis = _plane_basis(a)
    rel = P - centroid[:, None, :]
    u = rel @ basis[0]
    w = rel @ basis[1]
    ang = np.where(V, np.arctan2(w, u), np.inf)
    order = np.argsort(ang, axis=1, kind="stable")
    u = np.take_along_axis(u, order, axis=1)
    w = np.take_along_axis(w, order, axis=1)
    Vs = np.take_along_axis(V, order, axis=1)
    u = np.where(Vs, u, u[:, :1])
    w = np.where(Vs, w, w[:, :1])
    cross = u * np.roll(w, -1, axis=1) - np.roll(u, -1, axis=1) * w
    area = 0.5 * np.abs(cross.sum(axis=1))
    return np.where(nvalid >= 3, area, 0.0)


def cube_slice_volumes(cubes, n, M, coeffs, t):
    """Exact (d-1)-volume of ``a . y = t`` inside each level-``n`` cube (d = 2 or 3)."""
    h = float(M) ** -n
    a = coeffs.array
    lower = np.asarray(cubes, dtype=float) * h
    if coeffs.d == 2:
        px, py = t * a[0], t * a[1]
        return line_box_chords(px, py, a[1], -a[0], lower[:, 0], lower[:, 1], h)
    if coeffs.d == 3:
        return _plane_cube_areas(lower, h, a, t)
    raise ValueError("exact slice volumes are available for d = 2 and d = 3 only")


@dataclass
class SliceVolume:
    volume: float
    g: float
    count: int
    se: float = 0.0
    mode: str = "exact"


def hyperplane_slice_volume(family, coeffs, t, n, mode="exact", samples=200_000, seed=0):
    """(d-1)-volume of the level-``n`` product approximation on ``a . y = t``.

    ``g`` is the volume rescaled by ``M^(n(d-1))``.  ``mode="mc"`` samples
    uniform points of the hyperplane inside a bounding box and works for
    any ``d``.
    """
    _check(family, coeffs, n)
    d = family.d
    scale = float(family.M) ** (n * (d - 1))
    cubes = slice_cubes(family, coeffs, t, n)
    if mode == "exact":
        if d not in (2, 3):
            raise ValueError("exact mode needs d in {2, 3}; use mode='mc'")
        vols = cube_slice_volumes(cubes, n, family.M, coeffs, t)
        vol = math.fsum(vols.tolist())
        return SliceVolume(vol, vol * scale, len(cubes))
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    vol, se = _mc_slice_volume(family, coeffs, t, n, samples, seed)
    return SliceVolume(vol, vol * scale, len(cubes), se, "mc")


def _mc_slice_volume(family, coeffs, t, n, samples, seed):
    d = family.d
    a = coeffs.array
    basis = _plane_basis(a)
    R = math.sqrt(d)
    rng = np.random.default_rng(seed)
    hits, done = 0, 0
    side = family.M**n
    while done < samples:
        size = min(100_000, samples - done)
        u = rng.uniform(-R, R, size=(size, d - 1))
        y = t * a[None, :] + u @ basis
        ok = np.all((y >= 0) & (y < 1), axis=1)
        k = np.floor(y * side).astype(np.int64)
        for i, member in enumerate(family.members):
            idx = np.flatnonzero(ok)
            ok[idx] = member.contains(n, k[idx, i : i + 1])
        hits += int(ok.sum())
        done += size
    box = (2 * R) ** (d - 1)
    frac = hits / samples
    return box * frac, box * math.sqrt(frac * (1 - frac) / samples)


def t_grid(coeffs, n, M, gamma_t=1.0):
    """Points of ``[0, sum(a)]`` spaced ``M^(-n gamma_t)`` apart (endpoints included)."""
    total = coeffs.total
    steps = max(1, math.ceil(total * float(M) ** (n * gamma_t)))
    return np.linspace(0.0, total, steps + 1)


def volume_profile(family, coeffs, n, t_grid):
    """Rows ``(t, volume, g_n, count)`` over ``t_grid`` (exact mode)."""
    rows = []
    for t in t_grid:
        sv = hyperplane_slice_volume(family, coeffs, float(t), n)
        rows.append({"t": float(t), "volume": sv.volume, "g_n": sv.g, "count": sv.count})
    return rows


def lipschitz_constant(family, coeffs, n, t_grid):
    """Largest finite-difference slope of the slice volume, divided by ``M^n``."""
    t = np.asarray(t_grid, dtype=float)
    vols = np.array([hyperplane_slice_volume(family, coeffs, float(x), n).volume for x in t])
    slopes = np.abs(np.diff(vols)) / np.diff(t)
    return float(slopes.max()) / family.M**n if len(slopes) else 0.0


class Graph:
    """Simple undirected graph on ``0..n_vertices-1`` stored as CSR adjacency."""

    def __init__(self, n_vertices, edges=()):
        self.n_vertices = int(n_vertices)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        if len(e):
            e = np.unique(e, axis=0)
        self.edges = e
        both = np.concatenate([e, e[:, ::-1]]) if len(e) else e
        order = np.lexsort((both[:, 1], both[:, 0])) if len(both) else np.empty(0, dtype=np.int64)
        both = both[order]
        self.indices = both[:, 1] if len(both) else np.empty(0, dtype=np.int64)
        counts = np.bincount(both[:, 0], minlength=self.n_vertices) if len(both) else np.zeros(
            self.n_vertices, dtype=np.int64
        )
        self.indptr = np.concatenate([[0], np.cumsum(counts)])

    def neighbors(self, v):
        return self.indices[self.indptr[v] : self.indptr[v + 1]]

    def degrees(self):
        return np.diff(self.indptr)

    def max_degree(self):
        return int(self.degrees().max()) if self.n_vertices else 0

    def has_edge(self, u, v):
        return bool(np.any(self.neighbors(u) == v))


class DependencyGraph(Graph):
    """Product cubes on a hyperplane; an edge joins cubes sharing some coordinate value."""

    def __init__(self, cubes, edges, t=None, n=None):
        self.cubes = np.asarray(cubes, dtype=np.int64)
        self.t = t
        self.n = n
        super().__init__(len(self.cubes), edges)

    def shared_counts(self):
        """Per coordinate ``i``: for each vertex, how many others share its ``i``-th index."""
        out = []
        for i in range(self.cubes.shape[1]):
            _, inv, counts = np.unique(self.cubes[:, i], return_inverse=True, return_counts=True)
            out.append(counts[inv] - 1)
        return np.stack(out, axis=1) if out else np.empty((0, 0), dtype=np.int64)


def _sharing_edges(cubes):
    chunks = []
    for i in range(cubes.shape[1]):
        order = np.argsort(cubes[:, i], kind="stable")
        vals = cubes[order, i]
        bounds = np.flatnonzero(np.diff(vals)) + 1
        for group in np.split(order, bounds):
            if len(group) > 1:
                iu, ju = np.triu_indices(len(group), k=1)
                chunks.append(np.stack([group[iu], group[ju]], axis=1))
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(chunks)


def dependency_graph(family, coeffs, t, n):
    if family.d < 2:
        raise ValueError("dependency graphs need d >= 2")
    cubes = slice_cubes(family, coeffs, t, n)
    return DependencyGraph(cubes, _sharing_edges(cubes), t, n)


def greedy_coloring(graph):
    """Partition vertices into independent sets by repeatedly extracting a maximal one.

    Vertices are scanned in index order, so the partition is deterministic.
    """
    remaining = np.ones(graph.n_vertices, dtype=bool)
    classes = []
    while remaining.any():
        blocked = ~remaining
        chosen = []
        for v in np.flatnonzero(remaining).tolist():
            if not blocked[v]:
                chosen.append(v)
                blocked[v] = True
                blocked[graph.neighbors(v)] = True
        remaining[chosen] = False
        classes.append(np.array(chosen, dtype=np.int64))
    return classes


def is_independent(graph, vertices):
    members = np.zeros(graph.n_vertices, dtype=bool)
    members[vertices] = True
    if len(graph.edges) == 0:
        return True
    return not np.any(members[graph.edges[:, 0]] & members[graph.edges[:, 1]])


@dataclass
class PartitionProfile:
    n: int
    t: float
    epsilon: float
    p: float
    threshold: float
    classes: list
    rows: list
    upper_ok: bool
    lower_ok: bool
    small_ok: bool

    @property
    def class_count(self):
        return len(self.classes)

    @property
    def large_count(self):
        return sum(r["large"] for r in self.rows)


def family_partition_profile(family, coeffs, t, n, epsilon=0.1):
    """Coloring classes of the dependency graph and their current/next-level slice volumes.

    For each class, ``z`` is the slice volume of its cubes at level ``n`` and
    ``Z`` the slice volume of their retained children at level ``n+1``.
    ``upper_ok`` records ``Z < (1+eps) p z`` on every large class,
    ``lower_ok`` records ``Z > (1-eps) p z`` on every large class.
    """
    if family.d < 2:
        raise ValueError("need d >= 2")
    if n + 1 > family.depth:
        raise IndexError(f"level {n + 1} is not generated (depth {family.depth})")
    M, d = family.M, family.d
    graph = dependency_graph(family, coeffs, t, n)
    classes = greedy_coloring(graph)
    z_cube = cube_slice_volumes(graph.cubes, n, M, coeffs, t)
    children = slice_cubes(family, coeffs, t, n + 1)
    child_vol = cube_slice_volumes(children, n + 1, M, coeffs, t)
    h_cube = np.zeros(len(graph.cubes))
    if len(children):
        parents = children // M
        lookup = {tuple(c): i for i, c in enumerate(graph.cubes.tolist())}
        idx = np.array([lookup[tuple(c)] for c in parents.tolist()], dtype=np.int64)
        np.add.at(h_cube, idx, child_vol)
    p = family.p
    thr = float(M) ** (-n * (d - 1)) * n ** (1 + epsilon)
    rows = []
    upper_ok = lower_ok = small_ok = True
    for ci, members in enumerate(classes):
        z = math.fsum(z_cube[members].tolist())
        Z = math.fsum(h_cube[members].tolist())
        large = z > thr
        row = {"class": ci, "size": len(members), "z": z, "Z": Z, "large": large}
        if large:
            row["upper"] = Z < (1 + epsilon) * p * z
            row["lower"] = Z > (1 - epsilon) * p * z
            upper_ok &= row["upper"]
            lower_ok &= row["lower"]
        else:
            small_ok &= Z <= z * (1 + 1e-12) + 1e-15
        rows.append(row)
    return PartitionProfile(n, t, epsilon, p, thr, classes, rows, upper_ok, lower_ok, small_ok)


@dataclass
class CountCheck:
    n: int
    Z: float
    rows: list
    max_ratio: float | None


def volume_to_count_check(family, coeffs, n, t_grid):
    """Slice cube counts against the rescaled maximal slice volume ``Z``.

    The ratio ``count / Z`` bounded over ``t`` is the constant of the
    volume-to-count comparison; slices with no cubes report no ratio.
    """
    profile = volume_profile(family, coeffs, n, t_grid)
    zmax = max((r["g_n"] for r in profile), default=0.0)
    rows = []
    for r in profile:
        ratio = r["count"] / zmax if r["count"] and zmax > 0 else None
        local = r["count"] / r["g_n"] if r["count"] and r["g_n"] > 0 else None
        rows.append({**r, "ratio": ratio, "local_ratio": local})
    ratios = [r["ratio"] for r in rows if r["ratio"] is not None]
    return CountCheck(n, zmax, rows, max(ratios) if ratios else None)


def c7_bound(coeffs):
    """Explicit multiplier ``2 sum(a) / min(a)`` on the number of nearby hyperplanes."""
    return 2.0 * coeffs.total / min(coeffs.a)


def planar_match(family, coeffs, t, n):
    """Planar realization and line whose slice equals the d = 2 product slice.

    The second coordinate is reflected (``y -> 1 - y``) so the line gets an
    angle in ``(0, pi/2)``.
    """
    if family.d != 2:
        raise ValueError("planar_match needs d = 2")
    M = family.M
    levels = []
    for m in range(n + 1):
        cubes = product_cubes(family, m)
        if len(cubes):
            cubes = cubes.copy()
            cubes[:, 1] = M**m - 1 - cubes[:, 1]
        levels.append(cubes)
    real = Realization(PercolationParams(2, M, min(1.0, family.p), 0), n, tuple(levels))
    a1, a2 = coeffs.a
    alpha = math.atan2(a1, a2)
    line = Line.through(alpha, (t - a2) / a1, 0.0)
    return real, line
