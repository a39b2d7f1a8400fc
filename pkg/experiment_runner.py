"""Monte Carlo experiments: contamination sweeps x pipelines x replications.

One replication is the unit of work. It draws a clean sample from the true
model, tunes lambda on its own clean training set (oracle policy), then for
every contamination level and pipeline contaminates, estimates and scores.
Seeds come from ``derive_seed(master, replication, stage)`` so the output
does not depend on the number of workers.
"""
from __future__ import annotations

import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import linalg

import settings
from errors import CellwiseError, ConfigError
from glasso_solver import DEFAULT_GRID, tune_lambda
from perf_metrics import METRIC_FIELDS, index_report, prial, score_precision, support_mask
from pipeline import CLASSICAL, LambdaMode, LambdaPolicy, PipelineSpec, covariance_from_precision, pipeline_labels
from psd_repair import PsdMethod
from robust_scale import ScaleKind
from simlab import Scenario, contaminate, derive_seed, gen_theta, sample_gaussian

LOGGER = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COV_FIELDS = ["entropy_loss", "norm_frobenius", "norm_one", "norm_infinity", "norm_spectral",
              "log_det", "log_cond", "quadratic_loss"]
RESULT_COLUMNS = (
    ["family", "p", "n", "level", "outlier_scale", "pipeline", "scale", "psd", "regularizer", "lambda",
     "replication", "seed"]
    + METRIC_FIELDS
    + [f"cov_{f}" for f in COV_FIELDS]
    + ["kkt_residual", "converged", "error"]
)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    pipelines: list[PipelineSpec]
    replications: int
    sweep: list[float]
    output: str = "results/simulate.csv"
    master_seed: int = 0
    baseline_lambda: float | None = None
    workers: int = 1
    name: str = "experiment"

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.sweep:
            raise ConfigError("contamination sweep is empty")
        if not self.pipelines:
            raise ConfigError("no pipelines configured")
        if self.baseline_lambda is not None and not (math.isfinite(self.baseline_lambda) and self.baseline_lambda > 0):
            raise ConfigError(f"baseline_lambda must be a positive number, got {self.baseline_lambda}")
        for level in self.sweep:
            if not self.scenario.bernoulli and level != int(level):
                raise ConfigError(f"fixed-count sweep levels must be whole numbers, got {level}")
            self.scenario.at_level(level)

    @property
    def labels(self) -> list[str]:
        return pipeline_labels(self.pipelines)


# ---- Config parsing ----
_SCENARIO_KEYS = {"family", "p", "n", "mode", "outlier_scale", "outlier_k", "condition_target", "df"}
_EXPERIMENT_KEYS = {"name", "replications", "sweep", "output", "seed", "baseline_lambda", "workers"}
_PIPELINE_KEYS = {"scale", "trim_d", "psd", "delta", "ogk_iterations", "reweight_quantile", "baseline",
                  "lambda", "lambda_grid", "penalize_diagonal"}


def _reject_unknown(section: str, table: dict, allowed: set):
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _pipeline_from_table(table: dict) -> PipelineSpec:
    _reject_unknown("pipelines", table, _PIPELINE_KEYS)
    if "lambda" in table:
        policy = LambdaPolicy(LambdaMode.FIXED, value=float(table["lambda"]))
    else:
        policy = LambdaPolicy(LambdaMode.ORACLE, grid=tuple(table.get("lambda_grid", DEFAULT_GRID)))
    return PipelineSpec(
        scale_kind=ScaleKind(table.get("scale", "qn"), trim_d=float(table.get("trim_d", 3.0))),
        psd_method=PsdMethod(table.get("psd", "npd"), delta=float(table.get("delta", 1e-6)),
                             ogk_iterations=int(table.get("ogk_iterations", 2)),
                             reweight_quantile=float(table.get("reweight_quantile", 0.9))),
        lambda_policy=policy,
        baseline=bool(table.get("baseline", False)),
        penalize_diagonal=bool(table.get("penalize_diagonal", True)),
    )


def parse_experiment(doc: dict, seed: int | None = None, workers: int | None = None,
                     output: str | None = None) -> ExperimentConfig:
    try:
        sc = dict(doc["scenario"])
        ex = dict(doc["experiment"])
        pipes = list(doc["pipelines"])
    except KeyError as exc:
        raise ConfigError(f"missing section {exc}") from exc
    _reject_unknown("scenario", sc, _SCENARIO_KEYS)
    _reject_unknown("experiment", ex, _EXPERIMENT_KEYS)

    mode = sc.get("mode", "fixed")
    if mode not in ("fixed", "bernoulli"):
        raise ConfigError(f"scenario.mode must be 'fixed' or 'bernoulli', got {mode!r}")
    if "outlier_k" in sc:
        scale = math.sqrt(float(sc["outlier_k"]))
    else:
        scale = float(sc.get("outlier_scale", 10.0))
    master = int(seed if seed is not None else ex.get("seed", settings.default_seed()))
    try:
        scenario = Scenario(
            family=sc["family"], p=int(sc["p"]), n=int(sc["n"]),
            contam_count_per_col=None if mode == "bernoulli" else 0,
            contam_epsilon=0.0 if mode == "bernoulli" else None,
            outlier_scale=scale,
            condition_target=sc.get("condition_target"),
            seed=master,
            df=float(sc.get("df", 10.0)),
        )
        return ExperimentConfig(
            scenario=scenario,
            pipelines=[_pipeline_from_table(t) for t in pipes],
            replications=int(ex.get("replications", 50)),
            sweep=[float(v) for v in ex.get("sweep", [0])],
            output=output or ex.get("output", "results/simulate.csv"),
            master_seed=master,
            baseline_lambda=None if "baseline_lambda" not in ex else float(ex["baseline_lambda"]),
            workers=int(workers if workers is not None else ex.get("workers", settings.default_workers())),
            name=ex.get("name", "experiment"),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad experiment config: {exc}") from exc
    except ValueError as exc:
        # unknown enum values land here along with every CellwiseError
        raise ConfigError(str(exc)) from exc


def load_experiment_config(path, **overrides) -> ExperimentConfig:
    """讀取 TOML 設定檔。"""
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_experiment(doc, **overrides)


# ---- One replication ----
@dataclass
class ReplicationResult:
    replication: int
    rows: list[dict]
    baseline_loss: float
    supports: dict = field(default_factory=dict)


def experiment_theta(cfg: ExperimentConfig) -> np.ndarray:
    sc = cfg.scenario
    return gen_theta(sc.family, sc.p, sc.condition_target, derive_seed(cfg.master_seed, 0, "theta"))


def _level_seed(cfg: ExperimentConfig, rep: int, level_idx: int) -> int:
    return derive_seed(cfg.master_seed, rep, f"contam:{level_idx}")


def _empty_metrics() -> dict:
    out = {f: math.nan for f in METRIC_FIELDS}
    out.update({f"cov_{f}": math.nan for f in COV_FIELDS})
    return out


def _score(theta_true: np.ndarray, sigma_true: np.ndarray, est) -> dict:
    out = score_precision(theta_true, est.theta).as_dict()
    cov = index_report(sigma_true, covariance_from_precision(est.theta)).as_dict("cov_")
    out.update({f"cov_{f}": cov[f"cov_{f}"] for f in COV_FIELDS})
    return out


def run_replication(cfg: ExperimentConfig, rep: int, keep_support: bool = False) -> ReplicationResult:
    """單次重複實驗：產生乾淨樣本、調 λ、逐一汙染程度與 pipeline 估計並評分。"""
    sc = cfg.scenario
    theta_true = experiment_theta(cfg)
    sigma_true = covariance_from_precision(theta_true)
    data_seed = derive_seed(cfg.master_seed, rep, "data")
    # 乾淨樣本只抽一次，所有汙染程度共用
    clean = sample_gaussian(theta_true, sc.n, data_seed)

    tuned: dict[tuple, float] = {}

    def lambda_for(policy: LambdaPolicy) -> float:
        if policy.mode is LambdaMode.FIXED:
            return policy.value
        if policy.grid not in tuned:
            tuned[policy.grid] = tune_lambda(theta_true, sc, policy.grid, derive_seed(cfg.master_seed, rep, "tune"))
        return tuned[policy.grid]

    try:
        # 基準：乾淨資料上的古典估計
        base_lam = cfg.baseline_lambda if cfg.baseline_lambda is not None else lambda_for(LambdaPolicy())
        baseline_loss = score_precision(theta_true, CLASSICAL.estimate(clean, base_lam).theta).entropy_loss
    except (CellwiseError, linalg.LinAlgError) as exc:
        LOGGER.warning("replication %d: clean classical baseline failed: %s", rep, exc)
        baseline_loss = math.nan

    rows, supports = [], {}
    labels = cfg.labels
    for level_idx, level in enumerate(cfg.sweep):
        scen = sc.at_level(level)
        seed = _level_seed(cfg, rep, level_idx)
        X = contaminate(clean, scen, seed).X  # 汙染
        for pipe_idx, pipe in enumerate(cfg.pipelines):
            row = {
                "family": sc.family.value, "p": sc.p, "n": sc.n, "level": level,
                "outlier_scale": sc.outlier_scale, "pipeline": labels[pipe_idx],
                "scale": "classical" if pipe.baseline else pipe.scale_kind.label,
                "psd": "none" if pipe.baseline else pipe.psd_method.tag.value,
                "regularizer": pipe.regularizer, "lambda": math.nan,
                "replication": rep, "seed": seed,
                "kkt_residual": math.nan, "converged": False, "error": "",
                "_pipe": pipe_idx, "_level": level_idx,
            }
            try:
                lam = lambda_for(pipe.lambda_policy)
                row["lambda"] = lam
                est = pipe.estimate(X, lam)
                row.update(_score(theta_true, sigma_true, est))
                row.update(kkt_residual=est.kkt_residual, converged=est.converged)
                if keep_support:
                    supports[(pipe_idx, level_idx)] = support_mask(est.theta)
            except (CellwiseError, linalg.LinAlgError, FloatingPointError) as exc:
                LOGGER.warning("replication %d, %s at level %g failed: %s", rep, labels[pipe_idx], level, exc)
                row.update(_empty_metrics())
                row["error"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
    return ReplicationResult(rep, rows, baseline_loss, supports)


def _run_one(args):
    cfg, rep, keep_support = args
    return run_replication(cfg, rep, keep_support)


def run_replications(cfg: ExperimentConfig, keep_support: bool = False) -> list[ReplicationResult]:
    jobs = [(cfg, rep, keep_support) for rep in range(cfg.replications)]
    if cfg.workers <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    return sorted(results, key=lambda r: r.replication)


# ---- Tables ----
def _prial_or_nan(baseline: float, loss: float) -> float:
    if not (np.isfinite(baseline) and baseline > 0 and np.isfinite(loss)):
        return math.nan
    return prial(baseline, loss)


def results_frame(results: list[ReplicationResult]) -> tuple[pd.DataFrame, float]:
    losses = [r.baseline_loss for r in results if np.isfinite(r.baseline_loss)]
    baseline = float(np.mean(losses)) if losses else math.nan
    df = pd.DataFrame([row for r in results for row in r.rows])
    df = df.sort_values(["_pipe", "_level", "replication"], kind="mergesort")
    df["prial"] = [_prial_or_nan(baseline, v) for v in df["entropy_loss"]]
    return df[RESULT_COLUMNS].reset_index(drop=True), baseline


def prial_summary(df: pd.DataFrame, baseline: float) -> pd.DataFrame:
    """PRIAL of the average entropy loss per (pipeline, level)."""
    order = list(dict.fromkeys(df["pipeline"]))
    summary = (
        df.groupby(["pipeline", "level"], sort=False)
        .agg(mean_entropy_loss=("entropy_loss", "mean"),
             mean_cov_entropy_loss=("cov_entropy_loss", "mean"),
             mean_mcc=("mcc", "mean"),
             mean_log_cond=("log_cond", "mean"),
             replications=("replication", "count"),
             errors=("error", lambda e: int((e != "").sum())))
        .reset_index()
    )
    summary["baseline_entropy_loss"] = baseline
    summary["prial"] = [_prial_or_nan(baseline, v) for v in summary["mean_entropy_loss"]]
    summary["pipeline"] = pd.Categorical(summary["pipeline"], categories=order, ordered=True)
    return summary.sort_values(["pipeline", "level"], kind="mergesort").reset_index(drop=True)


def write_csv(df: pd.DataFrame, path, comment: str | None = None) -> Path:
    """輸出 CSV；第一行可放註解。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        if comment:
            f.write(f"# {comment}\n")
        df.to_csv(f, index=False, lineterminator="\n", float_format="%.10g")
    return path


def _stamp(cfg: ExperimentConfig) -> str:
    now = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"generated {now} schema v{SCHEMA_VERSION} experiment={cfg.name} seed={cfg.master_seed}"


def simulate(cfg: ExperimentConfig) -> tuple[Path, Path]:
    results = run_replications(cfg)
    df, baseline = results_frame(results)
    out = write_csv(df, cfg.output, _stamp(cfg))
    summary_path = out.with_name(f"{out.stem}_prial.csv")
    write_csv(prial_summary(df, baseline), summary_path, _stamp(cfg))
    LOGGER.info("wrote %d rows to %s (baseline entropy loss %.4f)", len(df), out, baseline)
    return out, summary_path


def support_counts(cfg: ExperimentConfig) -> pd.DataFrame:
    """Per-entry nonzero counts over replications, long format."""
    results = run_replications(cfg, keep_support=True)
    p = cfg.scenario.p
    records = []
    for pipe_idx, label in enumerate(cfg.labels):
        for level_idx, level in enumerate(cfg.sweep):
            counts = np.zeros((p, p), dtype=int)
            for r in results:
                mask = r.supports.get((pipe_idx, level_idx))
                if mask is not None:
                    counts += mask
            for i in range(p):
                rec = {"pipeline": label, "level": level, "row": i}
                rec.update({f"c{j}": int(counts[i, j]) for j in range(p)})
                records.append(rec)
    return pd.DataFrame(records)


def write_support_counts(cfg: ExperimentConfig) -> Path:
    out = write_csv(support_counts(cfg), cfg.output, _stamp(cfg))
    LOGGER.info("wrote support counts to %s", out)
    return out
