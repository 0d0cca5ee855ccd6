"""Command line interface: ``fracperc <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..core import BudgetExceeded, PercolationParams, generate
from .config import RECIPES, ExperimentConfig
from .recipes import ConfigError, replay, run_experiment
from .records import ExperimentRecord, rows_to_csv

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

COMMAND_RECIPES = {
    "dims": {"default": "dimension-sweep"},
    "slices": {"default": "slice-growth", "growth": "slice-growth", "diagonal": "diagonal-event", "hoeffding": "hoeffding-tail"},
    "project": {"default": "projection-dimension"},
    "sums": {"default": "sum-certificate", "certificate": "sum-certificate", "adjust": "probability-adjust"},
    "distance": {"default": "distance-certificate"},
}

# CLI flag -> config field.
FLAG_FIELDS = {
    "M": "M",
    "p": "p",
    "d": "d",
    "depth": "depth",
    "seed": "master_seed",
    "seeds": "seeds",
    "trials": "trials",
    "theta": "theta",
    "epsilon": "epsilon",
    "grid_exp": "density_exponent",
    "out": "out",
    "format": "format",
    "workers": "workers",
    "n_lo": "n_lo",
    "n_hi": "n_hi",
    "alpha": "alphas",
    "k": "ks",
    "probs": "probs",
    "coeffs": "coeffs",
    "min_len": "min_len",
    "summands": "summands",
    "t": "t",
    "control": "control",
}


def _common(sp):
    sp.add_argument("--M", type=int, help="subdivision factor")
    sp.add_argument("--p", type=float, help="retention probability")
    sp.add_argument("--d", type=int, help="dimension")
    sp.add_argument("--depth", type=int, help="deepest generated level")
    sp.add_argument("--seed", type=int, help="master seed; trial i uses a hash of (seed, i)")
    sp.add_argument("--trials", type=int, help="number of trials")
    sp.add_argument("--out", help="output path (stdout when omitted)")
    sp.add_argument("--format", choices=["csv", "json"], help="csv metric rows or the json record")


def _experiment(sp):
    _common(sp)
    sp.add_argument("--seeds", type=int, nargs="+", help="explicit seed list (overrides --seed/--trials)")
    sp.add_argument("--theta", type=float, help="line family separation angle, in (0, pi/4)")
    sp.add_argument("--epsilon", type=float)
    sp.add_argument("--grid-exp", type=float, help="line grid density exponent")
    sp.add_argument("--n-lo", type=int)
    sp.add_argument("--n-hi", type=int)
    sp.add_argument("--alpha", type=float, nargs="+", help="projection angles")
    sp.add_argument("--k", type=int, nargs="+", help="diagonal event depths")
    sp.add_argument("--probs", type=float, nargs="+", help="member probabilities")
    sp.add_argument("--coeffs", type=float, nargs="+", help="sum coefficients (normalized)")
    sp.add_argument("--min-len", type=float, help="minimal certificate length")
    sp.add_argument("--summands", type=int)
    sp.add_argument("--t", type=float, help="deviation for the tail check")
    sp.add_argument("--control", action="store_true", default=None, help="allow a sum run below the interval condition")
    sp.add_argument("--workers", type=int, help="worker processes")
    sp.add_argument("--config", help="JSON file with config fields")
    sp.add_argument("--threshold", action="append", default=[], metavar="KEY=VALUE", help="override a verdict threshold")


def build_parser():
    parser = argparse.ArgumentParser(prog="fracperc", description="Fractal percolation slices, projections, sums and distance sets.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate one realization")
    _common(gen)

    for name, modes in COMMAND_RECIPES.items():
        sp = sub.add_parser(name, help=f"run the {modes['default']} recipe")
        _experiment(sp)
        if len(modes) > 1:
            sp.add_argument("--mode", choices=[m for m in modes if m != "default"], help="recipe variant")

    chk = sub.add_parser("check", help="run any recipe, or replay a stored record")
    _experiment(chk)
    chk.add_argument("--recipe", choices=RECIPES)
    chk.add_argument("--replay", help="stored JSON record to re-run and compare")
    return parser


def _parse_threshold(item):
    key, _, value = item.partition("=")
    if not key or not value:
        raise ConfigError([f"threshold: expected KEY=VALUE, got {item!r}"])
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def config_from_args(args, recipe):
    data = {}
    if getattr(args, "config", None):
        data.update(json.loads(Path(args.config).read_text()))
    data["recipe"] = recipe
    for flag, name in FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[name] = value
    if data.get("seeds") is not None and getattr(args, "trials", None) is None:
        data["trials"] = len(data["seeds"])
    thresholds = dict(data.get("thresholds", {}))
    for item in getattr(args, "threshold", []) or []:
        k, v = _parse_threshold(item)
        thresholds[k] = v
    data["thresholds"] = thresholds
    try:
        return ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError([str(exc)]) from exc


def _emit(record, fmt, out):
    if out:
        record.write(out, fmt)
    elif fmt == "json":
        sys.stdout.write(record.to_json() + "\n")
    else:
        sys.stdout.write(record.metrics_csv())


def _report(record):
    for name, ok in record.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {record.config.recipe}:{name}", file=sys.stderr)
    if record.aborted:
        print(f"ABORT {record.config.recipe}: {record.aborted}", file=sys.stderr)


def _cmd_generate(args):
    params = PercolationParams(args.d or 2, args.M or 2, 0.5 if args.p is None else args.p, args.seed or 0)
    real = generate(params, args.depth or 6)
    if (args.format or "csv") == "json":
        text = json.dumps(real.to_dict())
    else:
        text = rows_to_csv(["n", "count"], [{"n": n, "count": real.count(n)} for n in range(real.depth + 1)])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_PASS


def _cmd_replay(args):
    record = ExperimentRecord.load(args.replay)
    if args.workers is not None:
        record.config.workers = args.workers
    fresh, identical = replay(record)
    print(f"{'PASS' if identical else 'FAIL'} replay:identical_rows", file=sys.stderr)
    if args.out:
        fresh.write(args.out, args.format)
    return EXIT_PASS if identical else EXIT_FAIL


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "check" and args.replay:
            return _cmd_replay(args)
        if args.command == "check":
            if not args.recipe:
                raise ConfigError(["recipe: check needs --recipe or --replay"])
            recipe = args.recipe
        else:
            modes = COMMAND_RECIPES[args.command]
            recipe = modes[getattr(args, "mode", None) or "default"]
        config = config_from_args(args, recipe)
        record = run_experiment(config)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(record, config.format, config.out)
    _report(record)
    if record.aborted:
        return EXIT_BUDGET
    return EXIT_PASS if record.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
