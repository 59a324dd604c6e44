"""Command-line interface: ``covop test | power | simulate``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .covmetrics import COVARIANCE_MODES, METRICS
from .exceptions import CovopError
from .fileio import file_digest, ingest_curves, read_matrix_csv, write_curves, write_json, write_lower_triangle
from .multadjust import ADJUSTMENTS
from .npc import COMBINERS, P_VALUE_RULES
from .permengine import DEFAULT_ADJUSTMENT, STRATEGIES, PermutationPlan, check_combination, global_test
from .simgen import ScenarioConfig, data_seed_sequence, generate_dataset, permutation_seed, run_power_study


def build_parser():
    parser = argparse.ArgumentParser(prog="covop", description=__doc__)
    parser.add_argument("--version", action="version", version=f"covop {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test equality of covariance operators")
    t.add_argument("--data", required=True, type=Path)
    src = t.add_mutually_exclusive_group()
    src.add_argument("--labels", type=Path, help="CSV with one group label per curve")
    src.add_argument("--label-column", help="column of --data holding group labels")
    t.add_argument("--metric", choices=METRICS, default="sqrt")
    t.add_argument("--combiner", choices=COMBINERS, default="tippett")
    t.add_argument("--strategy", choices=STRATEGIES, default="synchronized")
    t.add_argument("--adjustment", choices=ADJUSTMENTS, default=None)
    t.add_argument("--B", dest="n_permutations", type=int, default=1000)
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--p-value-rule", choices=P_VALUE_RULES, default="plain")
    t.add_argument("--covariance-mode", choices=COVARIANCE_MODES, default="about-group-mean")
    t.add_argument("--n-jobs", type=int, default=1)
    t.add_argument("--out", type=Path, default=Path("report.json"))
    t.add_argument(
        "--matrix-out", type=Path, default=None,
        help="lower-triangular adjusted p-value CSV (default: <out>_adjusted.csv)",
    )

    for name, helptext in (("power", "run a size/power study"), ("simulate", "write simulated datasets")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--scenario", required=True, type=Path)
        s.add_argument("--out-dir", required=True, type=Path)
        if name == "power":
            s.add_argument("--n-jobs", type=int, default=1)
    return parser


def _config_echo(args, adjustment):
    return {
        "metric": args.metric,
        "combiner": args.combiner,
        "strategy": args.strategy,
        "adjustment": adjustment,
        "B": args.n_permutations,
        "seed": args.seed,
        "alpha": args.alpha,
        "p_value_rule": args.p_value_rule,
        "covariance_mode": args.covariance_mode,
    }


def cmd_test(args):
    adjustment = args.adjustment or DEFAULT_ADJUSTMENT[args.combiner]
    plan = PermutationPlan(args.strategy, args.n_permutations, args.seed, args.p_value_rule)
    dataset = ingest_curves(args.data, args.labels, args.label_column)
    start = time.perf_counter()
    res = global_test(
        dataset,
        metric=args.metric,
        plan=plan,
        combiner=args.combiner,
        adjustment=adjustment,
        alpha=args.alpha,
        covariance_mode=args.covariance_mode,
        n_jobs=args.n_jobs,
    )
    elapsed = time.perf_counter() - start
    labels = res.metadata["labels"]
    report = {
        "global_p": res.global_p,
        "partial_p": [
            {
                "i": i + 1,
                "j": j + 1,
                "group_i": labels[i],
                "group_j": labels[j],
                "statistic": float(t),
                "raw": float(r),
                "adjusted": float(a),
                "rejected": bool(rej),
            }
            for (i, j), t, r, a, rej in zip(
                res.pairs, res.observed_stats, res.partial_p, res.adjusted_p, res.rejected
            )
        ],
        "config": _config_echo(args, adjustment),
        "kappa_star": res.metadata["kappa_star"],
        "groups": labels,
        "version": __version__,
        "input_digest": file_digest(args.data, args.labels),
        "wall_clock_seconds": elapsed,
    }
    for key in ("global_p_note", "partial_p_note"):
        if key in res.metadata:
            report[key] = res.metadata[key]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_json(args.out, report)
    matrix_out = args.matrix_out or args.out.with_name(args.out.stem + "_adjusted.csv")
    write_lower_triangle(matrix_out, labels, res.pairs, res.adjusted_p)
    print(f"global p-value: {res.global_p:.4g}  ({args.combiner}, {args.metric}, B={plan.n_permutations})")
    for entry in report["partial_p"]:
        mark = "*" if entry["rejected"] else " "
        print(f" {mark} {entry['group_i']} vs {entry['group_j']}: raw {entry['raw']:.4g}  adjusted {entry['adjusted']:.4g}")
    print(f"report written to {args.out}")
    return 0


def load_scenario(path):
    """Read a scenario JSON file; sigma1/sigma2 may be matrices or CSV paths."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CovopError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise CovopError(f"{path}: scenario must be a JSON object")
    for key in ("sigma1", "sigma2"):
        if isinstance(data.get(key), str):
            data[key] = read_matrix_csv(path.parent / data[key])
        elif data.get(key) is not None:
            data[key] = np.asarray(data[key], dtype=float)
    try:
        return ScenarioConfig.from_dict(data)
    except TypeError as exc:
        raise CovopError(f"{path}: invalid scenario ({exc})") from None


def cmd_power(args):
    config = load_scenario(args.scenario)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    table = run_power_study(config, n_jobs=args.n_jobs)
    (args.out_dir / "power.csv").write_text(table.to_csv(), encoding="utf-8")
    payload = {
        "columns": list(table.COLUMNS),
        "rows": table.rows,
        "scenario": config.to_dict(),
        "version": __version__,
        "wall_clock_seconds": time.perf_counter() - start,
    }
    write_json(args.out_dir / "power.json", payload)
    print(table.to_csv(), end="")
    return 0


def cmd_simulate(args):
    config = load_scenario(args.scenario)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for gamma in config.gammas:
        for r in range(config.replicates):
            dataset = generate_dataset(config, gamma, r)
            name = f"gamma{gamma:g}_rep{r:04d}.csv"
            write_curves(args.out_dir / name, dataset)
            files.append(
                {
                    "file": name,
                    "gamma": gamma,
                    "replicate": r,
                    "data_seed": {"entropy": config.seed, "spawn_key": list(data_seed_sequence(config.seed, r).spawn_key)},
                    "permutation_seed": permutation_seed(config.seed, r),
                }
            )
    write_json(
        args.out_dir / "manifest.json",
        {"scenario": config.to_dict(), "files": files, "version": __version__},
    )
    print(f"wrote {len(files)} datasets to {args.out_dir}")
    return 0


COMMANDS = {"test": cmd_test, "power": cmd_power, "simulate": cmd_simulate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "test":
        try:
            check_combination(args.combiner, args.adjustment or DEFAULT_ADJUSTMENT[args.combiner])
        except ValueError as exc:
            parser.error(str(exc))
    try:
        return COMMANDS[args.command](args)
    except (CovopError, ValueError, OSError) as exc:
        print(f"covop {args.command}: error: {exc}", file=sys.stderr)
        return 1
