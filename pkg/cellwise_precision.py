#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Command line: estimate | simulate | support-counts | calibrate | index-study.

Exit codes: 0 success, 2 input error, 3 numerical non-convergence.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

import settings
from errors import CellwiseError, ConfigError, InputParseError, InvalidInput
from experiment_runner import load_experiment_config, simulate, write_support_counts
from index_study import column_contamination_sweep, inflate_variance_sweep
from pipeline import LambdaMode, LambdaPolicy, PipelineSpec
from psd_repair import PsdMethod, PsdTag
from robust_scale import CONSISTENCY, ScaleKind, ScaleTag, calibrate_table

LOGGER = logging.getLogger("cellwise_precision")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 2, 3


# ====== CSV input ======
def _is_number(cell) -> bool:
    try:
        float(str(cell).strip())
        return True
    except ValueError:
        return False


def read_data_csv(path) -> np.ndarray:
    """讀取資料矩陣；第一列若含非數值則視為表頭。"""
    try:
        raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise InputParseError(f"cannot parse {path}: {exc}", row=0, column=0) from exc

    first_line = 1
    if not all(_is_number(c) for c in raw.iloc[0]):
        raw = raw.iloc[1:]
        first_line = 2

    values = np.empty(raw.shape, dtype=float)
    for i, row in enumerate(raw.itertuples(index=False)):
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(str(cell).strip())
            except ValueError:
                raise InputParseError(f"non-numeric cell {cell!r}", row=first_line + i, column=j + 1) from None
            if not np.isfinite(values[i, j]):
                raise InputParseError(f"non-finite cell {cell!r}", row=first_line + i, column=j + 1)
    if values.shape[0] < 2 or values.shape[1] < 2:
        raise InputParseError(f"need at least 2 rows and 2 columns, got {values.shape}", row=first_line, column=1)
    return values


def pipeline_from_args(args) -> PipelineSpec:
    return PipelineSpec(
        scale_kind=ScaleKind(ScaleTag(args.scale), trim_d=args.trim_d),
        psd_method=PsdMethod(PsdTag(args.psd), delta=args.delta),
        lambda_policy=LambdaPolicy(LambdaMode.FIXED, value=args.lam),
        baseline=args.baseline,
        penalize_diagonal=not args.no_penalize_diagonal,
    )


# ====== Commands ======
def cmd_estimate(args) -> int:
    X = read_data_csv(args.input)
    pipe = pipeline_from_args(args)
    est = pipe.estimate(X, args.lam)

    # 輸出精度矩陣與診斷資訊
    out = Path(args.output or "precision.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(est.theta).to_csv(out, index=False, header=False, float_format="%.12g")
    diagnostics = {
        "pipeline": pipe.name,
        "lambda": est.lambda_used,
        "iterations": est.outer_iters,
        "kkt_residual": est.kkt_residual,
        "converged": est.converged,
        "min_eigenvalue": est.min_eigenvalue,
        "edge_count": est.edge_count,
        "n": int(X.shape[0]),
        "p": int(X.shape[1]),
    }
    diag_path = out.with_name(f"{out.stem}_diagnostics.json")
    diag_path.write_text(json.dumps(diagnostics, indent=2), encoding="utf-8")
    print(f"[OK] {X.shape[1]}x{X.shape[1]} precision -> {out}")
    if not est.converged:
        print(f"[WARN] solver did not converge (kkt={est.kkt_residual:.3g}); matrix written anyway", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _experiment(args):
    return load_experiment_config(args.config, seed=args.seed, workers=args.workers, output=args.output)


def cmd_simulate(args) -> int:
    results, summary = simulate(_experiment(args))
    print(f"[OK] results -> {results}")
    print(f"[OK] PRIAL summary -> {summary}")
    return EXIT_OK


def cmd_support_counts(args) -> int:
    out = write_support_counts(_experiment(args))
    print(f"[OK] support counts -> {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    """以 Monte Carlo 估計一致性常數，輸出 JSON。"""
    seed = settings.default_seed() if args.seed is None else args.seed
    table = calibrate_table(args.kinds, args.n_cal, args.reps, seed)
    analytic = {k: v for k, v in CONSISTENCY.as_dict().items() if k in table}
    payload = json.dumps({"n_cal": args.n_cal, "reps": args.reps, "seed": seed,
                          "constants": table, "analytic": analytic}, indent=2)
    if args.output:
        Path(args.output).write_text(payload, encoding="utf-8")
        print(f"[OK] constants -> {args.output}")
    else:
        print(payload)
    return EXIT_OK


def cmd_index_study(args) -> int:
    seed = settings.default_seed() if args.seed is None else args.seed
    if args.study == "inflate":
        df = inflate_variance_sweep(args.p, args.n, seed=seed)
    else:
        df = column_contamination_sweep(args.p, args.n, range(0, args.max_count + 1), args.outlier_scale,
                                        args.reps, seed)
    out = Path(args.output or Path(settings.output_dir()) / f"index_{args.study}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(out, index=False, float_format="%.10g")
    print(f"[OK] {len(df)} rows -> {out}")
    return EXIT_OK


# ====== Main ======
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description="Cellwise-robust sparse precision matrix estimation")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--output", default=None)
    ap.add_argument("--log-level", default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a precision matrix from a CSV data file")
    est.add_argument("--input", required=True)
    est.add_argument("--scale", choices=[t.value for t in ScaleTag], default="qn")
    est.add_argument("--trim-d", type=float, default=3.0)
    est.add_argument("--psd", choices=[t.value for t in PsdTag], default="npd")
    est.add_argument("--delta", type=float, default=1e-6)
    est.add_argument("--baseline", action="store_true", help="classical covariance instead of pairwise")
    est.add_argument("--lambda", dest="lam", type=float, required=True)
    est.add_argument("--no-penalize-diagonal", action="store_true")
    est.set_defaults(func=cmd_estimate)

    for name, func in (("simulate", cmd_simulate), ("support-counts", cmd_support_counts)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.set_defaults(func=func)

    cal = sub.add_parser("calibrate", help="Monte Carlo Gaussian-consistency constants")
    cal.add_argument("--kinds", nargs="+", choices=[t.value for t in ScaleTag], default=[t.value for t in ScaleTag])
    cal.add_argument("--n-cal", type=int, default=1000)
    cal.add_argument("--reps", type=int, default=100)
    cal.set_defaults(func=cmd_calibrate)

    idx = sub.add_parser("index-study", help="index behaviour under a known distortion")
    idx.add_argument("study", choices=["inflate", "contaminate"])
    idx.add_argument("--p", type=int, default=10)
    idx.add_argument("--n", type=int, default=100)
    idx.add_argument("--max-count", type=int, default=25)
    idx.add_argument("--outlier-scale", type=float, default=10.0)
    idx.add_argument("--reps", type=int, default=20)
    idx.set_defaults(func=cmd_index_study)
    return ap


def main(argv=None) -> int:
    """命令列入口；回傳結束代碼。"""
    args = build_parser().parse_args(argv)
    settings.configure_logging(args.log_level)
    try:
        return args.func(args)
    except (InputParseError, ConfigError, InvalidInput) as exc:
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CellwiseError as exc:
        LOGGER.error("%s: %s", type(exc).__name__, exc)
        print(f"[ERROR] {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
