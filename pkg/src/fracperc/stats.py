"""Small statistical helpers shared by the experiment recipes."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import binomtest


def mean_se(values):
    """Sample mean and standard error (zero SE for fewer than two values)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("no values")
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def wilson_interval(successes, trials, confidence=0.99):
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def within_se(estimate, target, se, k=3.0):
    return abs(estimate - target) <= k * se


def frequency(flags):
    flags = np.asarray(flags, dtype=bool)
    return float(flags.mean()) if flags.size else float("nan")
