"""Line-square incidence geometry on planar realizations.

Lines are parameterized by their angle ``alpha`` with the x-axis and the point
``z`` (arclength from ``(0, 1)``) where they cross the decreasing diagonal
of the unit square.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .core import BudgetExceeded, ExtinctError
from .intervals import IntervalUnion
from .keyed import derive_seed, seeded_cube_hash, threshold

SQRT2 = math.sqrt(2.0)
INCIDENCE_SLACK = 1e-12
_ZERO_DIRECTION = 1e-15
DEFAULT_MAX_LINES = 2_000_000_000


def max_lines_budget():
    return int(float(os.environ.get("FRACPERC_MAX_LINES", DEFAULT_MAX_LINES)))


def line_box_chords(px, py, ux, uy, x0, y0, h):
    """Length of the line ``P + t u`` (``|u| = 1``) inside each open box.

    ``x0, y0`` are lower-left corners of boxes with side ``h``; all arguments
    broadcast, so many lines can be clipped against many boxes at once.  A
    zero direction component uses the strict interior test, so lines along
    a face contribute nothing.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    shape = np.broadcast_shapes(np.shape(px), np.shape(py), np.shape(ux), np.shape(uy), x0.shape, y0.shape)
    lo = np.full(shape, -np.inf)
    hi = np.full(shape, np.inf)
    for p, u, b in ((px, ux, x0), (py, uy, y0)):
        p = np.asarray(p, dtype=float)
        u = np.asarray(u, dtype=float)
        zero = np.abs(u) < _ZERO_DIRECTION
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (b - p) / u
            t1 = (b + h - p) / u
        inside = (b < p) & (p < b + h)
        lo = np.maximum(lo, np.where(zero, np.where(inside, -np.inf, np.inf), np.minimum(t0, t1)))
        hi = np.minimum(hi, np.where(zero, np.inf, np.maximum(t0, t1)))
    return np.where(hi > lo, hi - lo, 0.0)


@dataclass(frozen=True)
class Line:
    """Line with angle ``alpha`` in [0, pi/2] crossing the decreasing diagonal at ``z``.

    ``z`` outside ``[0, sqrt(2)]`` is allowed for shifted lines; such lines
    may miss the unit square entirely.
    """

    alpha: float
    z: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= math.pi / 2:
            raise ValueError(f"alpha must lie in [0, pi/2], got {self.alpha}")

    @property
    def direction(self):
        c, s = math.cos(self.alpha), math.sin(self.alpha)
        return (0.0 if abs(c) < _ZERO_DIRECTION else c, 0.0 if abs(s) < _ZERO_DIRECTION else s)

    @property
    def point(self):
        return (self.z / SQRT2, 1.0 - self.z / SQRT2)

    @property
    def offset(self):
        """Signed distance along the normal ``(-sin, cos)``."""
        c, s = self.direction
        px, py = self.point
        return -px * s + py * c

    @classmethod
    def through(cls, alpha, x, y):
        c, s = math.cos(alpha), math.sin(alpha)
        off = -x * s + y * c
        return cls(alpha, (c - off) * SQRT2 / (s + c))

    def in_family(self, theta=0.0):
        """Whether the line belongs to the theta-separated family (axis lines never do)."""
        return theta < self.alpha < math.pi / 2 - theta and 0.0 < self.z < SQRT2

    def chords(self, x0, y0, h):
        c, s = self.direction
        px, py = self.point
        return line_box_chords(px, py, c, s, x0, y0, h)

    def chord_in_square(self):
        return float(self.chords(np.array([0.0]), np.array([0.0]), 1.0)[0])


def chord_length(cube, line):
    """Exact length of ``line`` inside the open cube."""
    if cube.d != 2:
        raise ValueError("chord_length needs a planar cube")
    x0, y0 = cube.lower
    return float(line.chords(np.array([x0]), np.array([y0]), cube.side)[0])


def _require_planar(real, n):
    if real.d != 2:
        raise ValueError("planar realization required")
    if not 0 <= n <= real.depth:
        raise IndexError(f"level {n} outside [0, {real.depth}]")


def level_chords(real, n, line):
    """Chord of ``line`` through every retained level-``n`` square (in storage order)."""
    _require_planar(real, n)
    cubes = real.levels[n]
    h = float(real.M) ** -n
    return line.chords(cubes[:, 0] * h, cubes[:, 1] * h, h)


def slice_length(real, n, line):
    """Length of the level-``n`` approximation along ``line`` (compensated sum)."""
    return math.fsum(level_chords(real, n, line).tolist())


def slice_count(real, n, line):
    """Number of retained level-``n`` squares whose interior meets ``line``."""
    h = float(real.M) ** -n
    return int(np.count_nonzero(level_chords(real, n, line) > INCIDENCE_SLACK * h))


def shifted_lines(line, n, M):
    """Parallel lines on both sides at distance ``3 M^-n / (4 sqrt 2)``.

    Returns ``(upper, lower)``; ``upper`` lies on the side of the normal
    ``(-sin alpha, cos alpha)``.
    """
    delta = 3.0 * float(M) ** -n / (4.0 * SQRT2)
    c, s = math.cos(line.alpha), math.sin(line.alpha)
    dz = delta * SQRT2 / (s + c)
    return Line(line.alpha, line.z - dz), Line(line.alpha, line.z + dz)


def incidence_split(real, n, line):
    """Masks over level-``n`` cubes: (big chord >= M^-n/sqrt2, small chord, incident)."""
    h = float(real.M) ** -n
    ch = level_chords(real, n, line)
    incident = ch > INCIDENCE_SLACK * h
    big = incident & (ch >= h / SQRT2)
    return big, incident & ~big, incident


def containment_holds(real, n, line):
    """Small-chord squares of ``line`` are big-chord squares of a shifted line."""
    upper, lower = shifted_lines(line, n, real.M)
    _, small, _ = incidence_split(real, n, line)
    big_u, _, _ = incidence_split(real, n, upper)
    big_l, _, _ = incidence_split(real, n, lower)
    return bool(np.all(~small | big_u | big_l))


def count_bound(real, n, line):
    """``(#incident squares, 2 M^n (L(line) + L(upper) + L(lower)))``."""
    upper, lower = shifted_lines(line, n, real.M)
    total = math.fsum(slice_length(real, n, ln) for ln in (line, upper, lower))
    return slice_count(real, n, line), 2.0 * real.M**n * total


def _line_arrays(lines):
    d = np.array([ln.direction for ln in lines], dtype=float).reshape(-1, 2)
    pt = np.array([ln.point for ln in lines], dtype=float).reshape(-1, 2)
    return pt[:, 0], pt[:, 1], d[:, 0], d[:, 1]


def inequality_violations(real, n, lines, chunk=128):
    """Number of lines failing the containment and the count bound at level ``n``.

    Batched form of ``containment_holds`` and ``count_bound``; returns
    ``(containment_failures, count_failures)``.
    """
    _require_planar(real, n)
    lines = list(lines)
    cubes = real.levels[n]
    h = float(real.M) ** -n
    x0 = (cubes[:, 0] * h)[:, None]
    y0 = (cubes[:, 1] * h)[:, None]
    slack = INCIDENCE_SLACK * h
    bad_contain = bad_count = 0
    for s in range(0, len(lines), chunk):
        part = lines[s : s + chunk]
        shifted = [shifted_lines(ln, n, real.M) for ln in part]
        chords = [
            line_box_chords(*_line_arrays(group), x0, y0, h)
            for group in (part, [u for u, _ in shifted], [lw for _, lw in shifted])
        ]
        base, up, low = chords
        incident = base > slack
        small = incident & (base < h / SQRT2)
        covered = (up > slack) & (up >= h / SQRT2) | (low > slack) & (low >= h / SQRT2)
        bad_contain += int(np.count_nonzero(np.any(small & ~covered, axis=0)))
        counts = np.count_nonzero(incident, axis=0)
        for j in range(len(part)):
            total = math.fsum(base[:, j].tolist()) + math.fsum(up[:, j].tolist()) + math.fsum(low[:, j].tolist())
            bad_count += int(counts[j] > 2.0 * real.M**n * total)
    return bad_contain, bad_count


def _reduced_grid(width, M, level, start):
    """Points ``start + width * j / M^level`` for j = 1..M^level - 1.

    Each j/M^level is reduced to lowest terms before conversion, so a point
    shared by two levels gets the same float at both.
    """
    j = np.arange(1, M**level, dtype=np.int64)
    denom_exp = np.full(j.shape, level)
    while True:
        mask = (j % M == 0) & (denom_exp > 0)
        if not mask.any():
            break
        j = np.where(mask, j // M, j)
        denom_exp = np.where(mask, denom_exp - 1, denom_exp)
    frac = j.astype(float) / np.power(float(M), denom_exp)
    return start + width * frac


@dataclass(frozen=True, eq=False)
class LineGrid:
    """Nested product grid of anchors on the diagonal and angles in (theta, pi/2 - theta)."""

    theta: float
    n: int
    M: int
    density_exponent: float
    anchor_level: int
    angle_level: int
    anchors: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)

    @property
    def size(self):
        return len(self.anchors) * len(self.angles)

    @property
    def anchor_spacing(self):
        return SQRT2 * float(self.M) ** -self.anchor_level

    @property
    def angle_spacing(self):
        return (math.pi / 2 - 2 * self.theta) * float(self.M) ** -self.angle_level

    def lines(self):
        for a in self.angles.tolist():
            for z in self.anchors.tolist():
                yield Line(a, z)

    def nearest(self, line):
        """Grid line closest to ``line`` in (angle, anchor) coordinates."""
        ia = int(np.argmin(np.abs(self.angles - line.alpha)))
        iz = int(np.argmin(np.abs(self.anchors - line.z)))
        return Line(float(self.angles[ia]), float(self.anchors[iz]))

    def contains(self, other):
        """Set inclusion of ``other`` in this grid (exact float match)."""
        return bool(
            np.isin(other.anchors, self.anchors).all() and np.isin(other.angles, self.angles).all()
        )


def _level_for(width, M, target):
    # smallest m >= 0 with width * M^-m <= target
    m = max(0, math.ceil(math.log(width / target) / math.log(M) - 1e-12))
    while width * float(M) ** -m > target:
        m += 1
    return m


def line_grid(theta, n, density_exponent=1.0, M=2, max_lines=None):
    """Grid of lines with anchor and angle spacing at most ``M^(-density_exponent * n)``."""
    if not 0.0 < theta < math.pi / 4:
        raise ValueError(f"theta must lie in (0, pi/4), got {theta}")
    if not 0.0 < density_exponent <= 2.0:
        raise ValueError("density_exponent must lie in (0, 2]")
    target = float(M) ** (-density_exponent * n)
    width = math.pi / 2 - 2 * theta
    la = _level_for(SQRT2, M, target)
    lb = _level_for(width, M, target)
    size = (M**la - 1) * (M**lb - 1)
    budget = max_lines_budget() if max_lines is None else max_lines
    if size > budget:
        raise BudgetExceeded(f"line grid of {size} lines exceeds budget {budget}")
    anchors = _reduced_grid(SQRT2, M, la, 0.0)
    angles = _reduced_grid(width, M, lb, theta)
    return LineGrid(theta, n, M, density_exponent, la, lb, anchors, angles)


def grid_maxima(real, n, grid):
    """Per-angle maxima of ``L_n`` and of the incidence count over grid anchors."""
    from ._kernels import grid_sweep

    _require_planar(real, n)
    cubes = real.levels[n]
    h = float(real.M) ** -n
    best_len, best_pos, best_cnt = grid_sweep(
        cubes[:, 0].astype(np.float64),
        cubes[:, 1].astype(np.float64),
        h,
        grid.angles,
        grid.anchors,
        grid.anchor_spacing,
        INCIDENCE_SLACK,
    )
    return best_len, best_pos, best_cnt


def growth_constants(p, M, epsilon):
    r = SQRT2 * (epsilon / 3.0) ** 2 * p**2
    return {
        "u": 1.0 + epsilon / 3.0,
        "r": r,
        "lambda": p * M * (1.0 + 2.0 * epsilon / 3.0),
        "C2": 8.0 * M * math.log(M) / r + 1.0,
        "b_slope": 8.0 * math.log(M) / r,
    }


def clamp_epsilon(p, M, epsilon):
    """Shrink ``epsilon`` into ``0 < eps < min(p, 1/10)`` and, if ``p < 1/M``, ``M p (1+eps) < 1``."""
    bound = min(p, 0.1)
    if p * M < 1.0:
        bound = min(bound, 1.0 / (M * p) - 1.0)
    if 0.0 < epsilon < bound:
        return epsilon
    return 0.99 * bound


def in_growth_regime(p, M):
    return M**-2 < p <= 1.0 / M


@dataclass
class GrowthDiagnostics:
    M: int
    p: float
    epsilon: float
    theta: float
    density_exponent: float
    r: float
    u: float
    lam: float
    C2: float
    ns: list
    a: list
    b: list
    max_count: list
    holds: list
    threshold: int | None
    applicable: bool
    verdict: bool

    def rows(self):
        return [
            {
                "n": n,
                "a_n": a,
                "b_n": b,
                "lambda": self.lam,
                "C2": self.C2,
                "max_count": c,
                "verdict": h,
            }
            for n, a, b, c, h in zip(self.ns, self.a, self.b, self.max_count, self.holds)
        ]

    def a_over_n(self, n):
        return self.a[self.ns.index(n)] / n


def growth_diagnostics(real, n_range, theta=math.pi / 8, density_exponent=1.0, epsilon=0.05):
    """Rescaled maximal slice lengths over nested line grids and the growth dichotomy.

    ``a_n`` is the max over ``line_grid(theta, n)`` of ``M^n L_n``; a level
    passes when ``a_n <= M b_n`` or ``a_{n+1} <= lambda a_n``.  The verdict
    requires every level from the first ``n`` with ``a_n <= b_n`` onward to
    pass.
    """
    M, p = real.M, real.params.p
    eps = clamp_epsilon(p, M, epsilon)
    k = growth_constants(p, M, eps)
    ns = list(range(n_range[0], n_range[1] + 1))
    a, counts = [], []
    for n in ns:
        if real.count(n) == 0:
            a.append(0.0)
            counts.append(0)
            continue
        grid = line_grid(theta, n, density_exponent, M)
        best_len, _, best_cnt = grid_maxima(real, n, grid)
        a.append(float(best_len.max()) * M**n)
        counts.append(int(best_cnt.max()))
    b = [k["b_slope"] * n for n in ns]
    holds = []
    for i in range(len(ns)):
        ok = a[i] <= M * b[i]
        if not ok and i + 1 < len(ns):
            ok = a[i + 1] <= k["lambda"] * a[i]
        holds.append(bool(ok))
    start = next((i for i in range(len(ns)) if a[i] <= b[i]), None)
    verdict = start is not None and all(holds[start:])
    return GrowthDiagnostics(
        M=M,
        p=p,
        epsilon=eps,
        theta=theta,
        density_exponent=density_exponent,
        r=k["r"],
        u=k["u"],
        lam=k["lambda"],
        C2=k["C2"],
        ns=ns,
        a=a,
        b=b,
        max_count=counts,
        holds=holds,
        threshold=None if start is None else ns[start],
        applicable=in_growth_regime(p, M),
        verdict=bool(verdict),
    )


def diagonal_count_profile(real, n_range, density_exponent=1.0):
    """Max incidence count over 45-degree grid lines at each level, divided by n."""
    out = []
    for n in range(n_range[0], n_range[1] + 1):
        if real.count(n) == 0:
            out.append(0.0)
            continue
        grid = line_grid(math.pi / 8, n, density_exponent, real.M)
        single = LineGrid(
            grid.theta, n, real.M, density_exponent, grid.anchor_level, grid.angle_level,
            grid.anchors, np.array([math.pi / 4]),
        )
        _, _, cnt = grid_maxima(real, n, single)
        out.append(int(cnt[0]) / n)
    return out


def measure_s_theta(theta, n, M=2, density_exponent=1.0, samples=1000, seed=0):
    """Largest ``M^(n-1) (L(l) - L(l'))`` over random in-family lines ``l``.

    ``l'`` is the nearest grid line; with every square retained the slice
    length is the plain chord in the unit square, so no realization is needed.
    """
    rng = np.random.default_rng(seed)
    grid = line_grid(theta, n, density_exponent, M)
    worst = 0.0
    for _ in range(samples):
        line = Line(rng.uniform(theta, math.pi / 2 - theta), rng.uniform(0.0, SQRT2))
        near = grid.nearest(line)
        worst = max(worst, (line.chord_in_square() - near.chord_in_square()) * float(M) ** (n - 1))
    return worst


def _projection_intervals(real, n, alpha):
    cubes = real.levels[n]
    h = float(real.M) ** -n
    c, s = math.cos(alpha), math.sin(alpha)
    x0 = cubes[:, 0] * h
    y0 = cubes[:, 1] * h
    smin = -(x0 + h) * s + y0 * c
    smax = -x0 * s + (y0 + h) * c
    f = SQRT2 / (s + c)
    return (c - smax) * f, (c - smin) * f


def projection(real, n, alpha):
    """Projection of the level-``n`` approximation along angle ``alpha`` onto the diagonal."""
    if not 0.0 < alpha < math.pi / 2:
        raise ValueError("alpha must lie in (0, pi/2)")
    _require_planar(real, n)
    lo, hi = _projection_intervals(real, n, alpha)
    return IntervalUnion(lo, hi, tol=0.0)


def projection_box_count(real, n, alpha):
    """Number of length-``M^-n`` boxes of the diagonal meeting the projected approximation."""
    union = projection(real, n, alpha)
    if union.is_empty:
        return 0
    h = float(real.M) ** -n
    n_boxes = math.ceil(SQRT2 / h - 1e-9)
    slack = INCIDENCE_SLACK * h
    first = np.clip(np.floor((union.lo + slack) / h), 0, n_boxes - 1).astype(np.int64)
    last = np.clip(np.ceil((union.hi - slack) / h) - 1, 0, n_boxes - 1).astype(np.int64)
    total, reach = 0, -1
    for f, l in zip(first.tolist(), last.tolist()):
        f = max(f, reach + 1)
        if l >= f:
            total += l - f + 1
            reach = l
    return total


def projection_slope(real, n_lo, n_hi, alpha):
    ns = np.arange(n_lo, n_hi + 1)
    counts = np.array([projection_box_count(real, int(n), alpha) for n in ns], dtype=float)
    if counts[-1] == 0:
        raise ExtinctError(f"level {n_hi} is empty")
    return float(np.polyfit(ns * math.log(real.M), np.log(counts), 1)[0])


def diagonal_descendants(cube, k):
    """Coordinates of the ``M^k`` level-``n+k`` squares on the increasing diagonal of ``cube``."""
    j = np.arange(cube.M**k, dtype=np.int64)
    base = np.array(cube.k, dtype=np.int64) * cube.M**k
    return base[None, :] + j[:, None]


def diagonal_event(real, cube, k):
    """True iff every diagonal descendant ``k`` levels below ``cube`` is retained."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if cube.n + k > real.depth:
        raise IndexError(f"need depth >= {cube.n + k}, realization has {real.depth}")
    if not real.is_retained(cube):
        raise KeyError(f"cube {cube} is not retained")
    return bool(real.contains(cube.n + k, diagonal_descendants(cube, k)).all())


def diagonal_event_frequency(M, p, k, trials, master_seed=0, start=0):
    """Count of root diagonal events over derived seeds ``start .. start+trials-1``.

    Evaluates only the keyed hashes of the diagonal squares (and hence their
    ancestors), which gives the same outcome as ``diagonal_event`` on a full
    generated realization with that seed.
    """
    thr = threshold(p)
    if thr is None:
        return trials
    seeds = np.array([derive_seed(master_seed, start + i) for i in range(trials)], dtype=np.uint64)
    alive = np.ones(trials, dtype=bool)
    for level in range(1, k + 1):
        j = np.arange(M**level, dtype=np.int64)
        h = seeded_cube_hash(seeds, level, np.stack([j, j], axis=1))
        alive &= np.all(h < thr, axis=1)
    return int(np.count_nonzero(alive))


def diagonal_event_bounds(p, M, k):
    return p ** (2 * M**k), p ** (M**k)


def hoeffding_bound(bounds, t):
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if t <= 0:
        return 1.0
    return math.exp(-2.0 * t * t / float(np.sum((bounds[:, 1] - bounds[:, 0]) ** 2)))


@dataclass
class TailCheck:
    empirical: float
    se: float
    bound: float

    @property
    def passed(self):
        return self.empirical <= self.bound + 3.0 * self.se


def hoeffding_tail_check(m, bounds, t, trials, seed=0, sampler=None, chunk=20_000):
    """Empirical ``P(sum X - E sum X >= t)`` for independent bounded summands.

    Summands are uniform on ``[a_i, b_i]`` unless ``sampler(rng, size)``
    returning an ``(size, m)`` array with known means is given, in which
    case the centering uses the sampler's ``mean`` attribute.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if bounds.shape[0] == 1 and m > 1:
        bounds = np.repeat(bounds, m, axis=0)
    if bounds.shape[0] != m or np.any(bounds[:, 0] > bounds[:, 1]):
        raise ValueError("need m bounds with a_i <= b_i")
    rng = np.random.default_rng(seed)
    if sampler is None:
        mean = float(np.sum(bounds.mean(axis=1)))
    else:
        mean = float(np.sum(sampler.mean))
    hits, done = 0, 0
    while done < trials:
        size = min(chunk, trials - done)
        if sampler is None:
            x = rng.uniform(bounds[:, 0], bounds[:, 1], size=(size, m))
        else:
            x = sampler(rng, size)
        hits += int(np.count_nonzero(x.sum(axis=1) - mean >= t))
        done += size
    freq = hits / trials
    return TailCheck(freq, math.sqrt(max(freq * (1 - freq), 0.0) / trials), hoeffding_bound(bounds, t))
