"""Experiment configuration, shipped defaults and validation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources

RECIPES = (
    "dimension-sweep",
    "slice-growth",
    "projection-dimension",
    "diagonal-event",
    "sum-certificate",
    "probability-adjust",
    "distance-certificate",
    "hoeffding-tail",
)
FORMATS = ("csv", "json")


def load_defaults():
    """Shipped verdict thresholds, each with a provenance note."""
    text = resources.files("fracperc.harness").joinpath("defaults.json").read_text()
    return json.loads(text)


def default_thresholds(recipe):
    entry = load_defaults().get("thresholds", {}).get(recipe, {})
    return {k: v["value"] for k, v in entry.items()}


@dataclass
class ExperimentConfig:
    """Everything needed to re-run an experiment bit-for-bit.

    Trial ``i`` uses seed ``derive_seed(master_seed, i)`` unless explicit
    ``seeds`` are given.  ``control=True`` marks a sum-certificate run that
    deliberately sits below the interval condition (a comparison arm).
    """

    recipe: str
    d: int = 2
    M: int = 2
    p: float = 0.5
    probs: list | None = None
    coeffs: list | None = None
    depth: int = 8
    n_lo: int | None = None
    n_hi: int | None = None
    theta: float = math.pi / 8
    density_exponent: float = 1.0
    epsilon: float = 0.05
    trials: int = 10
    master_seed: int = 0
    seeds: list | None = None
    alphas: list = field(default_factory=lambda: [math.pi / 6, math.pi / 4, math.pi / 3])
    ks: list = field(default_factory=lambda: [1, 2])
    summands: int = 100
    t: float = 10.0
    d_range: list = field(default_factory=lambda: [2, 6])
    M_range: list = field(default_factory=lambda: [2, 5])
    min_len: float | None = None
    control: bool = False
    thresholds: dict = field(default_factory=dict)
    workers: int = 1
    out: str | None = None
    format: str = "csv"

    @property
    def level_range(self):
        lo = 1 if self.n_lo is None else self.n_lo
        hi = self.depth if self.n_hi is None else self.n_hi
        return lo, hi

    def resolved_thresholds(self):
        out = default_thresholds(self.recipe)
        out.update(self.thresholds)
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


def _prob_violations(name, p):
    if not isinstance(p, (int, float)) or not 0.0 < p <= 1.0:
        return [f"{name}: probability out of (0,1]: {p}"]
    return []


def validate_config(config):
    """Field-by-field precondition violations; empty iff the config can run."""
    c = config
    v = []
    if c.recipe not in RECIPES:
        v.append(f"recipe: unknown recipe {c.recipe!r}; expected one of {', '.join(RECIPES)}")
        return v
    if c.format not in FORMATS:
        v.append(f"format: must be one of {FORMATS}")
    if not isinstance(c.M, int) or c.M < 2:
        v.append(f"M: subdivision must be an integer >= 2, got {c.M}")
    if not isinstance(c.d, int) or c.d < 1:
        v.append(f"d: dimension must be an integer >= 1, got {c.d}")
    if not isinstance(c.depth, int) or c.depth < 1:
        v.append(f"depth: must be an integer >= 1, got {c.depth}")
    if not isinstance(c.trials, int) or c.trials < 1:
        v.append(f"trials: must be an integer >= 1, got {c.trials}")
    if not isinstance(c.workers, int) or c.workers < 1:
        v.append(f"workers: must be an integer >= 1, got {c.workers}")
    if not isinstance(c.master_seed, int) or not 0 <= c.master_seed < 2**64:
        v.append("master_seed: must be a 64-bit unsigned integer")
    if c.seeds is not None and any(not isinstance(s, int) or not 0 <= s < 2**64 for s in c.seeds):
        v.append("seeds: every seed must be a 64-bit unsigned integer")
    if c.recipe not in ("sum-certificate", "probability-adjust", "hoeffding-tail"):
        v += _prob_violations("p", c.p)
    lo, hi = c.level_range
    if c.recipe in ("dimension-sweep", "slice-growth", "projection-dimension"):
        if not (isinstance(lo, int) and isinstance(hi, int) and 0 <= lo < hi <= c.depth):
            v.append(f"n_lo/n_hi: need 0 <= n_lo < n_hi <= depth, got [{lo}, {hi}] with depth {c.depth}")
    if c.recipe in ("slice-growth", "projection-dimension", "diagonal-event") and c.d != 2:
        v.append(f"d: recipe {c.recipe} works in the plane (d = 2), got {c.d}")
    if c.recipe == "slice-growth":
        if not 0.0 < c.theta < math.pi / 4:
            v.append(f"theta: line family angle must lie in (0, pi/4), got {c.theta}")
        if c.density_exponent <= 0:
            v.append("grid-exp: density exponent must be > 0")
        if c.epsilon <= 0:
            v.append("epsilon: must be > 0")
        if isinstance(c.p, (int, float)) and isinstance(c.M, int) and c.M >= 2 and not c.M**-2 < c.p <= 1 / c.M:
            v.append(f"p: linear slice growth regime needs M^-2 < p <= M^-1, got p={c.p}, M={c.M}")
    if c.recipe == "projection-dimension":
        if not c.alphas or any(not 0 < a < math.pi / 2 for a in c.alphas):
            v.append("alphas: every projection angle must lie in (0, pi/2)")
    if c.recipe == "diagonal-event":
        if not c.ks or any(not isinstance(k, int) or k < 1 for k in c.ks):
            v.append("ks: every k must be an integer >= 1")
    if c.recipe == "sum-certificate":
        v += _family_violations(c)
        if c.min_len is not None and c.min_len <= 0:
            v.append("min_len: certificate length must be > 0")
    if c.recipe == "probability-adjust":
        if len(c.d_range) != 2 or not 2 <= c.d_range[0] <= c.d_range[1]:
            v.append("d_range: need 2 <= lo <= hi")
        if len(c.M_range) != 2 or not 2 <= c.M_range[0] <= c.M_range[1]:
            v.append("M_range: need 2 <= lo <= hi")
    if c.recipe == "distance-certificate" and c.min_len is not None and c.min_len <= 0:
        v.append("min_len: certificate length must be > 0")
    if c.recipe == "hoeffding-tail":
        if not isinstance(c.summands, int) or c.summands < 1:
            v.append("summands: must be an integer >= 1")
        if c.t <= 0:
            v.append("t: deviation must be > 0")
    return v


def _family_violations(c):
    v = []
    if not c.probs:
        return ["probs: sum-certificate needs member probabilities"]
    d = len(c.probs)
    for i, p in enumerate(c.probs):
        v += _prob_violations(f"probs[{i}]", p)
    if v or not isinstance(c.M, int) or c.M < 2:
        return v
    for i, p in enumerate(c.probs):
        if p <= 1.0 / c.M:
            v.append(f"probs[{i}]: member bound p_i > M^-1 violated ({p} <= {1.0 / c.M})")
    if not c.control and math.prod(c.probs) <= c.M ** (-d + 1):
        v.append(
            f"probs: interval condition prod p_i > M^(-d+1) violated "
            f"({math.prod(c.probs)} <= {c.M ** (-d + 1)})"
        )
    if c.coeffs is not None:
        if len(c.coeffs) != d:
            v.append("coeffs: need one coefficient per member")
        elif any(a == 0 for a in c.coeffs):
            v.append("coeffs: coefficients must be non-zero")
    return v
