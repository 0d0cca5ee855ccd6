"""Experiment recipes: per-trial work units, deterministic merge, verdicts."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..core import BudgetExceeded, ExtinctError, PercolationParams, box_count_slope, generate, theoretical_dimension
from ..distance import distance_certificate
from ..keyed import derive_seed
from ..slices2d import (
    diagonal_event_bounds,
    diagonal_event_frequency,
    growth_diagnostics,
    hoeffding_tail_check,
    projection_slope,
)
from ..stats import frequency, mean_se, wilson_interval
from ..sums import Coefficients, adjust_probabilities, adjustment_violations, generate_family, interval_certificate
from .config import ExperimentConfig, validate_config
from .records import ExperimentRecord

DIAGONAL_BLOCK = 10_000


class ConfigError(ValueError):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = violations


def trial_seed(config, i):
    if config.seeds is not None:
        return int(config.seeds[i])
    return derive_seed(config.master_seed, i)


def trial_count(config):
    return len(config.seeds) if config.seeds is not None else config.trials


def _params(config, seed):
    return PercolationParams(config.d, config.M, config.p, seed)


# Per-trial units.  Each takes the config dict and a work index and returns a
# list of rows that depends only on those two arguments.


def _dimension_trial(config, i):
    seed = trial_seed(config, i)
    lo, hi = config.level_range
    real = generate(_params(config, seed), hi)
    target = theoretical_dimension(real.params)
    try:
        slope = box_count_slope(real, lo, hi)
    except ExtinctError:
        return [{"trial": i, "seed": seed, "survived": False, "slope": None, "target": target}]
    return [{"trial": i, "seed": seed, "survived": True, "slope": slope, "target": target}]


def _growth_trial(config, i):
    seed = trial_seed(config, i)
    lo, hi = config.level_range
    real = generate(_params(config, seed), hi)
    if real.count(hi) == 0:
        return []
    g = growth_diagnostics(real, (lo, hi), config.theta, config.density_exponent, config.epsilon)
    return [{"trial": i, "seed": seed, **row} for row in g.rows()]


def _projection_trial(config, i):
    seed = trial_seed(config, i)
    lo, hi = config.level_range
    real = generate(_params(config, seed), hi)
    target = min(1.0, theoretical_dimension(real.params))
    if real.count(hi) == 0:
        return []
    return [
        {"trial": i, "seed": seed, "alpha": float(a), "slope": projection_slope(real, lo, hi, a), "target": target}
        for a in config.alphas
    ]


def _diagonal_block(config, i):
    """Work unit ``i`` covers one block of trials for every k."""
    start = i * DIAGONAL_BLOCK
    size = min(DIAGONAL_BLOCK, config.trials - start)
    return [
        {"k": k, "start": start, "size": size, "successes": diagonal_event_frequency(config.M, config.p, k, size, config.master_seed, start)}
        for k in config.ks
    ]


def _family(config, seed):
    return generate_family(config.M, config.probs, config.depth, seed)


def _coeffs(config):
    raw = config.coeffs if config.coeffs is not None else [1.0] * len(config.probs)
    return Coefficients.from_raw(raw)


def _cert_row(i, seed, survived, cert, min_len):
    if cert is None:
        return {"trial": i, "seed": seed, "survived": survived, "cert_lo": None, "cert_hi": None, "cert_len": None, "certified": False}
    return {
        "trial": i,
        "seed": seed,
        "survived": survived,
        "cert_lo": cert.lo,
        "cert_hi": cert.hi,
        "cert_len": cert.length,
        "certified": cert.length >= min_len,
    }


def _sum_trial(config, i):
    seed = trial_seed(config, i)
    fam = _family(config, seed)
    survived = fam.alive(config.depth)
    min_len = _min_len(config)
    cert = interval_certificate(fam, _coeffs(config), config.depth, min_len=1e-12) if survived else None
    return [_cert_row(i, seed, survived, cert, min_len)]


def _distance_trial(config, i):
    seed = trial_seed(config, i)
    real = generate(_params(config, seed), config.depth)
    survived = real.count(config.depth) > 0
    cert = distance_certificate(real) if survived else None
    return [_cert_row(i, seed, survived, cert, _min_len(config))]


def random_adjust_input(seed, d_range, M_range):
    """A random valid probability-adjustment input drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(d_range[0], d_range[1] + 1))
    M = int(rng.integers(M_range[0], M_range[1] + 1))
    while True:
        p = rng.uniform(1.0 / M, 1.0, size=d)
        p = np.where(p <= 1.0 / M, np.nextafter(1.0 / M, 1.0), p)
        if math.prod(p) > M ** (-d + 1):
            return d, M, [float(x) for x in p]


def _adjust_trial(config, i):
    d, M, p = random_adjust_input(trial_seed(config, i), config.d_range, config.M_range)
    q = [float(x) for x in adjust_probabilities(p, M)]
    tol = config.resolved_thresholds().get("tol", 1e-9)
    return [{"trial": i, "d": d, "M": M, "probs": p, "q": q, "violations": len(adjustment_violations(p, q, M, tol))}]


def _hoeffding_trial(config, i):
    chk = hoeffding_tail_check(config.summands, [(0.0, 1.0)], config.t, config.trials, seed=config.master_seed)
    return [
        {
            "summands": config.summands,
            "t": config.t,
            "trials": config.trials,
            "hits": int(round(chk.empirical * config.trials)),
            "empirical": chk.empirical,
            "se": chk.se,
            "bound": chk.bound,
            "passed": chk.passed,
        }
    ]


def _min_len(config):
    if config.min_len is not None:
        return config.min_len
    return config.resolved_thresholds().get("min_len", 1e-12)


UNITS = {
    "dimension-sweep": _dimension_trial,
    "slice-growth": _growth_trial,
    "projection-dimension": _projection_trial,
    "diagonal-event": _diagonal_block,
    "sum-certificate": _sum_trial,
    "probability-adjust": _adjust_trial,
    "distance-certificate": _distance_trial,
    "hoeffding-tail": _hoeffding_trial,
}


def unit_count(config):
    if config.recipe == "diagonal-event":
        return math.ceil(config.trials / DIAGONAL_BLOCK)
    if config.recipe == "hoeffding-tail":
        return 1
    return trial_count(config)


def _run_unit(args):
    recipe, cfg, i = args
    return UNITS[recipe](ExperimentConfig.from_dict(cfg), i)


def run_units(config, on_rows=None):
    """Run all work units and return their rows merged in unit order.

    A ``BudgetExceeded`` error carries the rows finished before it in its
    ``partial`` attribute.
    """
    cfg = config.to_dict()
    jobs = [(config.recipe, cfg, i) for i in range(unit_count(config))]
    out = []

    def consume(results):
        try:
            for rows in results:
                out.extend(rows)
                if on_rows is not None:
                    on_rows(rows)
        except BudgetExceeded as exc:
            exc.partial = list(out)
            raise

    if config.workers <= 1 or len(jobs) <= 1:
        consume(map(_run_unit, jobs))
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            consume(pool.map(_run_unit, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    return out


# Summaries and verdicts.


def _summarize_dimension(config, rows, th):
    slopes = [r["slope"] for r in rows if r["survived"]]
    target = rows[0]["target"] if rows else None
    s = {"surviving": len(slopes), "trials": len(rows), "target": target}
    if slopes:
        s["mean_slope"], s["se"] = mean_se(slopes)
    ok_n = len(slopes) >= th.get("min_surviving", 1)
    ok_mean = bool(slopes) and abs(s["mean_slope"] - target) <= th.get("slope_tol", 0.1)
    return s, {"surviving": ok_n, "slope": ok_mean}


def _summarize_growth(config, rows, th):
    by_trial = {}
    for r in rows:
        by_trial.setdefault(r["trial"], []).append(r)
    lo, hi = config.level_range
    n_mid = th.get("ratio_levels", [hi // 2, hi])[0]
    n_top = th.get("ratio_levels", [hi // 2, hi])[1]
    dich, ratio_ok, ratios = [], [], []
    for trial_rows in by_trial.values():
        a = {r["n"]: r["a_n"] for r in trial_rows}
        b = {r["n"]: r["b_n"] for r in trial_rows}
        ns = sorted(a)
        start = next((k for k, n in enumerate(ns) if a[n] <= b[n]), None)
        dich.append(start is not None and all(r["verdict"] for r in trial_rows[start:]))
        if n_mid in a and n_top in a and a[n_mid] > 0:
            ratio = (a[n_top] / n_top) / (a[n_mid] / n_mid)
            ratios.append(ratio)
            ratio_ok.append(ratio <= th.get("ratio_max", 2.0))
    s = {
        "surviving": len(by_trial),
        "dichotomy_rate": frequency(dich),
        "ratio_rate": frequency(ratio_ok),
        "ratio_levels": [n_mid, n_top],
        "max_ratio": max(ratios) if ratios else None,
    }
    v = {
        "dichotomy": bool(dich) and s["dichotomy_rate"] >= th.get("dichotomy_rate", 0.95),
        "linear_ratio": bool(ratio_ok) and s["ratio_rate"] >= th.get("ratio_rate", 0.9),
    }
    return s, v


def _summarize_projection(config, rows, th):
    s, v = {"target": rows[0]["target"] if rows else None}, {}
    tol = th.get("slope_tol", 0.1)
    for a in config.alphas:
        slopes = [r["slope"] for r in rows if r["alpha"] == float(a)]
        key = format(float(a), ".6f")
        s[f"surviving_{key}"] = len(slopes)
        if slopes:
            m, se = mean_se(slopes)
            s[f"mean_slope_{key}"], s[f"se_{key}"] = m, se
            v[f"slope_{key}"] = abs(m - s["target"]) <= tol and len(slopes) >= th.get("min_surviving", 1)
        else:
            v[f"slope_{key}"] = False
    return s, v


def _merge_diagonal(config, rows):
    conf = config.resolved_thresholds().get("confidence", 0.99)
    out = []
    for k in config.ks:
        succ = sum(r["successes"] for r in rows if r["k"] == k)
        lo_b, hi_b = diagonal_event_bounds(config.p, config.M, k)
        w_lo, w_hi = wilson_interval(succ, config.trials, conf)
        out.append(
            {
                "k": k,
                "trials": config.trials,
                "successes": succ,
                "frequency": succ / config.trials,
                "wilson_lo": w_lo,
                "wilson_hi": w_hi,
                "lower_bound": lo_b,
                "upper_bound": hi_b,
                "inside": lo_b < w_lo and w_hi < hi_b,
            }
        )
    return out


def _summarize_diagonal(config, rows, th):
    return {}, {f"k{r['k']}": r["inside"] for r in rows}


def _summarize_certificates(config, rows, th):
    surv = [r for r in rows if r["survived"]]
    cert = [r["certified"] for r in surv]
    s = {"trials": len(rows), "surviving": len(surv), "frequency": frequency(cert), "min_len": _min_len(config)}
    if surv:
        s["wilson_lo"], s["wilson_hi"] = wilson_interval(sum(cert), len(surv), 0.99)
    v = {}
    if "min_frequency" in th:
        v["frequency"] = bool(surv) and s["frequency"] >= th["min_frequency"]
    return s, v


def _summarize_adjust(config, rows, th):
    fails = sum(r["violations"] > 0 for r in rows)
    return {"inputs": len(rows), "failures": fails}, {"inequalities": fails == 0}


def _summarize_hoeffding(config, rows, th):
    r = rows[0]
    return {"empirical": r["empirical"], "bound": r["bound"]}, {"tail": r["passed"]}


SUMMARIES = {
    "dimension-sweep": _summarize_dimension,
    "slice-growth": _summarize_growth,
    "projection-dimension": _summarize_projection,
    "diagonal-event": _summarize_diagonal,
    "sum-certificate": _summarize_certificates,
    "probability-adjust": _summarize_adjust,
    "distance-certificate": _summarize_certificates,
    "hoeffding-tail": _summarize_hoeffding,
}


def finalize(config, rows, aborted=None):
    if config.recipe == "diagonal-event":
        rows = _merge_diagonal(config, rows) if not aborted else []
    summary, verdicts = ({}, {}) if aborted else SUMMARIES[config.recipe](config, rows, config.resolved_thresholds())
    return ExperimentRecord(config, rows, summary, {k: bool(v) for k, v in verdicts.items()}, aborted)


def run_experiment(config):
    """Validate, run and summarize one recipe; raises ConfigError on bad input.

    On a budget abort the returned record holds the rows finished so far and
    its ``aborted`` field names the cause.
    """
    violations = validate_config(config)
    if violations:
        raise ConfigError(violations)
    try:
        rows = run_units(config)
    except BudgetExceeded as exc:
        return finalize(config, getattr(exc, "partial", []), aborted=str(exc))
    return finalize(config, rows)


def replay(record):
    """Re-run a stored record's config; returns ``(new_record, identical)``."""
    fresh = run_experiment(record.config)
    return fresh, fresh.metrics_csv() == record.metrics_csv()
