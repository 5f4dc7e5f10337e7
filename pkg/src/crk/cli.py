"""Command-line surface: test-within, test-between, qdid, simulate, cherrypick.

Every run writes a JSON report (schema_version 1) whose config block
echoes all resolved settings including seeds, so a report suffices to
reproduce the run.  Exit codes: 0 success, 2 validation error, 3
numerical failure.
"""

import argparse
import csv
import sys
from dataclasses import replace

import numpy as np

from . import io as crk_io
from ._backend import backend
from ._qrpath_py import PivotLimitError
from .between import (
    crk_test_between,
    enumerate_matchings,
    matching_count,
    matchings_pairs,
    pairwise_treatment_qr,
    sample_matchings,
    split_by_treatment,
)
from .qdid import pairwise_qdid_estimates
from .randomization import GroupConfig
from .simulate import (
    DgpConfig,
    McStudy,
    run_cherrypick_study,
    run_mc_study,
)
from .within import EstimatorSpec, Session

_ESTIMATORS = {
    "qr": ("qr_coefficient", "within_qr"),
    "quantile": ("unconditional_quantile", "within_quantile"),
    "qte-pair": ("qte_within_pair", "between_pairs"),
}

_PRESETS = {
    "within-size": dict(mode="within", target_column=1, grid="0.1:0.9:0.1", q=10),
    "within-power-full": dict(mode="within", target_column=2, grid="0.1:0.9:0.1", q=12),
    "within-power-upper": dict(
        mode="within", target_column=2, grid="0.6:0.9:0.1", q=12
    ),
    "between-size": dict(mode="between", shift=0.0, grid="0.1:0.9:0.1", q=12),
    "between-power": dict(mode="between", shift=0.5, grid="0.1:0.9:0.1", q=12),
}


def _add_test_flags(sub, direction_default="right"):
    sub.add_argument("--grid", default="0.1:0.9:0.1", help="lo:hi:step or comma list")
    sub.add_argument("--null", default="0", help="constant or per-grid comma list")
    sub.add_argument("--alpha", type=float, default=0.05)
    sub.add_argument(
        "--direction",
        choices=["right", "left", "two-sided"],
        default=direction_default,
    )
    group = sub.add_mutually_exclusive_group()
    group.add_argument(
        "--sign-draws", type=int, default=None, help="sample the sign group"
    )
    group.add_argument(
        "--sign-exact", action="store_true", help="enumerate all 2^q sign vectors"
    )
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--output", default=None, help="JSON report path (default stdout)")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="crk",
        description="Cluster-randomized Kolmogorov-Smirnov tests on quantile processes",
    )
    parser.add_argument("--version", action="store_true", help="print version and exit")
    subs = parser.add_subparsers(dest="command")

    tw = subs.add_parser("test-within", help="within-cluster CRK test on a CSV file")
    tw.add_argument("data")
    tw.add_argument("--estimator", choices=sorted(_ESTIMATORS), default="qr")
    tw.add_argument("--schema", choices=["within_qr", "within_quantile", "between_pairs"])
    tw.add_argument(
        "--target", type=int, default=1, help="coefficient index (qr estimator)"
    )
    tw.add_argument(
        "--merge",
        default=None,
        help="pre-analysis merge plan, e.g. 'A,B;C,D' merges A with B and C with D",
    )
    tw.add_argument("--estimates-csv", default=None, help="per-cluster estimate table")
    _add_test_flags(tw)

    tb = subs.add_parser("test-between", help="between-cluster combined CRK test")
    tb.add_argument("data")
    tb.add_argument("--matchings", default="auto", help="'auto', 'all', or 'sample:N'")
    tb.add_argument(
        "--combiner",
        choices=["twice-mean", "bonferroni", "geometric-e"],
        default="twice-mean",
    )
    tb.add_argument("--pvalues-csv", default=None, help="per-matching p-value table")
    _add_test_flags(tb)

    qd = subs.add_parser("qdid", help="quantile difference-in-differences + between test")
    qd.add_argument("data", help="three-period panel CSV (wide or long)")
    qd.add_argument("--matchings", default="auto", help="'auto', 'all', or 'sample:N'")
    qd.add_argument(
        "--combiner",
        choices=["twice-mean", "bonferroni", "geometric-e"],
        default="twice-mean",
    )
    qd.add_argument("--pvalues-csv", default=None)
    _add_test_flags(qd)

    sim = subs.add_parser("simulate", help="Monte Carlo size/power study")
    sim.add_argument("--preset", choices=sorted(_PRESETS), default="within-size")
    sim.add_argument("--q", type=int, default=None, help="number of clusters")
    sim.add_argument("--neighborhoods", type=int, default=10)
    sim.add_argument("--rho", type=float, default=0.5)
    sim.add_argument("--shift", type=float, default=None, help="treated outcome shift")
    sim.add_argument("--reps", type=int, default=1000)
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--grid", default=None)
    sim.add_argument("--sign-draws", type=int, default=1000)
    sim.add_argument("--matching-draws", type=int, default=50)
    sim.add_argument(
        "--combiner",
        choices=["twice-mean", "bonferroni", "geometric-e"],
        default="twice-mean",
    )
    sim.add_argument("--direction", choices=["right", "left", "two-sided"], default="right")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--workers", type=int, default=None)
    sim.add_argument("--output", default=None)
    sim.add_argument("--csv", default=None, help="append a flat result row here")

    ch = subs.add_parser("cherrypick", help="size distortion of best-of-k matching")
    ch.add_argument("--picks", type=int, required=True)
    ch.add_argument("--q", type=int, default=12)
    ch.add_argument("--shift", type=float, default=None)
    ch.add_argument("--neighborhoods", type=int, default=10)
    ch.add_argument("--rho", type=float, default=0.5)
    ch.add_argument("--reps", type=int, default=1000)
    ch.add_argument("--alpha", type=float, default=0.05)
    ch.add_argument("--grid", default=None)
    ch.add_argument("--sign-draws", type=int, default=1000)
    ch.add_argument("--seed", type=int, default=0)
    ch.add_argument("--workers", type=int, default=None)
    ch.add_argument("--output", default=None)
    ch.add_argument("--csv", default=None)
    return parser


def _direction(flag: str) -> str:
    return "two_sided" if flag == "two-sided" else flag


def _group_config(args) -> GroupConfig:
    if getattr(args, "sign_exact", False):
        return GroupConfig(mode="exact", seed=args.seed)
    if args.sign_draws is not None:
        return GroupConfig(mode="sampled", draws=args.sign_draws, seed=args.seed)
    return GroupConfig(mode="auto", seed=args.seed)


def _group_echo(args) -> dict:
    cfg = _group_config(args)
    return {"mode": cfg.mode, "draws": cfg.draws, "seed": args.seed}


def _emit(args, command: str, config: dict, result: dict) -> None:
    text = crk_io.write_json_report(args.output, command, config, result)
    if args.output is None:
        print(text)


def _run_test_within(args) -> int:
    kind, default_schema = _ESTIMATORS[args.estimator]
    schema = args.schema or default_schema
    data = crk_io.load_cluster_csv(args.data, schema)
    session = Session(data)
    if args.merge:
        plan = [part.split(",") for part in args.merge.split(";") if part]
        session.merge(plan)
    grid = crk_io.parse_grid(args.grid)
    null = crk_io.parse_null(args.null)
    spec = EstimatorSpec(kind=kind, target_column=args.target)
    if args.estimates_csv:
        process = session.estimate(spec, grid)
        with open(args.estimates_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cluster", "u", "estimate"])
            for cid, row in zip(session.data.cluster_ids, process.values):
                for u, value in zip(process.grid, row):
                    writer.writerow([cid, float(u), float(value)])
    result = session.test_within(
        spec,
        grid,
        null=null,
        alpha=args.alpha,
        direction=_direction(args.direction),
        group=_group_config(args),
    )
    config = {
        "data": args.data,
        "schema": schema,
        "estimator": kind,
        "target_column": args.target,
        "merge": args.merge,
        "grid": list(grid),
        "null": null,
        "alpha": args.alpha,
        "direction": _direction(args.direction),
        "group": _group_echo(args),
        "backend": backend(),
    }
    _emit(args, "test-within", config, result.to_dict())
    return 0


def _resolve_matchings(args, q1: int, q0: int, seed: int):
    text = args.matchings.strip()
    if text == "auto":
        # exhaustive while affordable, otherwise a data-independent sample
        text = "all" if matching_count(q1, q0) <= 10_000 else "sample:50"
    if text == "all":
        return enumerate_matchings(q1, q0)
    if text.startswith("sample:"):
        count = int(text.split(":", 1)[1])
        return sample_matchings(q1, q0, min(count, matching_count(q1, q0)), seed)
    raise ValueError(
        f"--matchings must be 'auto', 'all', or 'sample:N', got {text!r}"
    )


def _pvalue_table(path, pairs, matchings, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["matching", "pairs", "p_right", "p_left"])
        for i, matching in enumerate(matchings.members):
            label = "|".join(
                f"{pairs.treated_ids[j]}:{pairs.control_ids[k]}"
                for j, k in matching.pairs
            )
            p_r = result.pvalues_right[i] if result.pvalues_right else ""
            p_l = result.pvalues_left[i] if result.pvalues_left else ""
            writer.writerow([i, label, p_r, p_l])


def _run_between_like(args, command: str) -> int:
    grid = crk_io.parse_grid(args.grid)
    null = crk_io.parse_null(args.null)
    if command == "test-between":
        data = crk_io.load_cluster_csv(args.data, "between_pairs")
        treated_pos, control_pos = split_by_treatment(data)
        q1, q0 = len(treated_pos), len(control_pos)
        matchings = _resolve_matchings(args, q1, q0, args.seed)
        pairs = pairwise_treatment_qr(
            data, grid, required_pairs=matchings_pairs(matchings)
        )
    else:
        panels = crk_io.load_panel_csv(args.data)
        q1 = sum(1 for p in panels.values() if p.treated)
        q0 = len(panels) - q1
        if q1 == 0 or q0 == 0:
            raise ValueError("need at least one treated and one control panel")
        matchings = _resolve_matchings(args, q1, q0, args.seed)
        pairs = pairwise_qdid_estimates(panels, grid)
    result = crk_test_between(
        pairs,
        matchings,
        null=null,
        alpha=args.alpha,
        direction=_direction(args.direction),
        group=_group_config(args),
        combiner=args.combiner.replace("-", "_"),
    )
    if args.pvalues_csv:
        _pvalue_table(args.pvalues_csv, pairs, matchings, result)
    config = {
        "data": args.data,
        "grid": list(grid),
        "null": null,
        "alpha": args.alpha,
        "direction": _direction(args.direction),
        "matchings": {"mode": matchings.mode, "count": matchings.size, "seed": args.seed},
        "combiner": args.combiner.replace("-", "_"),
        "group": _group_echo(args),
        "backend": backend(),
    }
    _emit(args, command, config, result.to_dict())
    return 0


def _study_from_args(args, preset: dict) -> McStudy:
    q = args.q if args.q is not None else preset["q"]
    shift = args.shift if args.shift is not None else preset.get("shift", 0.0)
    grid_text = args.grid if args.grid is not None else preset["grid"]
    mode = preset["mode"]
    dgp = DgpConfig(
        q=q,
        neighborhoods=args.neighborhoods,
        rho=args.rho,
        model="cluster_treatment" if mode == "between" else "qr_covariate",
        treat_shift=shift,
    )
    return McStudy(
        dgp=dgp,
        mode=mode,
        grid=crk_io.parse_grid(grid_text),
        alpha=args.alpha,
        direction=_direction(args.direction) if hasattr(args, "direction") else "right",
        sign_draws=args.sign_draws,
        target_column=preset.get("target_column", 1),
        matching_draws=getattr(args, "matching_draws", None),
        combiner=getattr(args, "combiner", "twice-mean").replace("-", "_"),
        replications=args.reps,
        master_seed=args.seed,
    )


def _append_csv(path, label: str, study: McStudy, result) -> None:
    import os

    exists = os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(
                [
                    "study",
                    "q",
                    "neighborhoods",
                    "rho",
                    "shift",
                    "combiner",
                    "replications",
                    "rejections",
                    "rejection_rate",
                    "mc_stderr",
                    "master_seed",
                ]
            )
        writer.writerow(
            [
                label,
                study.dgp.q,
                study.dgp.neighborhoods,
                study.dgp.rho,
                study.dgp.treat_shift,
                study.combiner,
                result.replications,
                result.rejections,
                f"{result.rejection_rate:.6f}",
                f"{result.mc_stderr:.6f}",
                result.master_seed,
            ]
        )


def _run_simulate(args) -> int:
    study = _study_from_args(args, _PRESETS[args.preset])
    result = run_mc_study(study, workers=args.workers)
    if args.csv:
        _append_csv(args.csv, args.preset, study, result)
    _emit(args, "simulate", result.config, {
        "replications": result.replications,
        "rejections": result.rejections,
        "rejection_rate": result.rejection_rate,
        "mc_stderr": result.mc_stderr,
    })
    return 0


def _run_cherrypick(args) -> int:
    preset = dict(_PRESETS["between-size"])
    study = _study_from_args(args, preset)
    study = replace(study, matching_draws=None)
    result = run_cherrypick_study(study, args.picks, workers=args.workers)
    if args.csv:
        _append_csv(args.csv, f"cherrypick-{args.picks}", study, result)
    _emit(args, "cherrypick", result.config, {
        "replications": result.replications,
        "rejections": result.rejections,
        "rejection_rate": result.rejection_rate,
        "mc_stderr": result.mc_stderr,
    })
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.version:
        from . import __version__

        print(f"crk {__version__} ({backend()} kernel)")
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "test-within":
            return _run_test_within(args)
        if args.command == "test-between":
            return _run_between_like(args, "test-between")
        if args.command == "qdid":
            return _run_between_like(args, "qdid")
        if args.command == "simulate":
            return _run_simulate(args)
        if args.command == "cherrypick":
            return _run_cherrypick(args)
        parser.error(f"unknown command {args.command!r}")
    except (np.linalg.LinAlgError, PivotLimitError, FloatingPointError) as exc:
        # LinAlgError subclasses ValueError, so this clause must come first
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
