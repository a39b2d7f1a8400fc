import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from errors import ConfigError
from experiment_runner import (
    RESULT_COLUMNS,
    load_experiment_config,
    parse_experiment,
    prial_summary,
    results_frame,
    run_replications,
    simulate,
    support_counts,
)

CONFIG_DIR = Path(__file__).parent / "configs"


def small_doc(**experiment):
    ex = {"name": "tiny", "replications": 2, "sweep": [0, 3], "baseline_lambda": 0.1}
    ex.update(experiment)
    return {
        "scenario": {"family": "banded", "p": 5, "n": 40, "mode": "fixed", "outlier_scale": 10.0},
        "experiment": ex,
        "pipelines": [
            {"baseline": True, "lambda": 0.1},
            {"scale": "qn", "psd": "npd", "lambda": 0.1},
            {"scale": "mad", "psd": "ogk", "lambda": 0.1},
        ],
    }


def read_results(path):
    return pd.read_csv(path, comment="#", keep_default_na=False, na_values=["nan", "NaN"])


def test_row_count_and_columns():
    cfg = parse_experiment(small_doc(), seed=3, workers=1)
    df, baseline = results_frame(run_replications(cfg))
    assert len(df) == 2 * 2 * 3
    assert list(df.columns) == RESULT_COLUMNS
    assert np.isfinite(baseline) and baseline > 0
    assert (df["error"] == "").all()
    assert df["converged"].all()


def test_single_replication_single_row():
    doc = small_doc(replications=1, sweep=[0])
    doc["pipelines"] = doc["pipelines"][1:2]
    df, _ = results_frame(run_replications(parse_experiment(doc, seed=1, workers=1)))
    assert len(df) == 1


def test_rows_are_ordered_by_pipeline_level_replication():
    cfg = parse_experiment(small_doc(), seed=3, workers=1)
    df, _ = results_frame(run_replications(cfg))
    assert list(df["pipeline"][:4]) == ["classical+glasso"] * 4
    assert list(df["level"][:4]) == [0, 0, 3, 3]
    assert list(df["replication"][:4]) == [0, 1, 0, 1]


def test_parallel_matches_serial():
    serial, _ = results_frame(run_replications(parse_experiment(small_doc(), seed=5, workers=1)))
    parallel, _ = results_frame(run_replications(parse_experiment(small_doc(), seed=5, workers=2)))
    pd.testing.assert_frame_equal(serial, parallel)


def test_simulate_is_reproducible_apart_from_the_stamp(tmp_path):
    paths = []
    for i in range(2):
        cfg = parse_experiment(small_doc(), seed=9, workers=1, output=str(tmp_path / f"run{i}.csv"))
        paths.append(simulate(cfg))
    (a, a_sum), (b, b_sum) = paths
    body = [p.read_text(encoding="utf-8").splitlines() for p in (a, b)]
    assert body[0][0].startswith("# generated")
    assert body[0][1:] == body[1][1:]
    assert a_sum.name == "run0_prial.csv"

    summary = read_results(a_sum)
    assert len(summary) == 3 * 2
    assert set(summary.columns) >= {"pipeline", "level", "prial", "baseline_entropy_loss", "errors"}


def test_prial_summary_against_baseline():
    df = pd.DataFrame({
        "pipeline": ["a", "a", "b", "b"], "level": [0, 0, 0, 0], "replication": [0, 1, 0, 1],
        "entropy_loss": [1.0, 3.0, 4.0, 4.0], "cov_entropy_loss": [1.0, 1.0, 1.0, 1.0],
        "mcc": [0.5, 0.5, 0.1, 0.1], "log_cond": [1.0, 1.0, 1.0, 1.0], "error": ["", "", "", ""],
    })
    summary = prial_summary(df, baseline=2.0)
    assert list(summary["pipeline"]) == ["a", "b"]
    assert list(summary["prial"]) == pytest.approx([0.0, -100.0])


def test_failed_estimates_are_tagged_and_the_run_continues():
    doc = small_doc(replications=1, sweep=[0])
    doc["scenario"].update(p=6, n=5)
    doc["pipelines"] = [{"scale": "qn", "psd": "npd", "lambda": 0.0}, {"scale": "qn", "psd": "npd", "lambda": 0.2}]
    df, _ = results_frame(run_replications(parse_experiment(doc, seed=1, workers=1)))
    assert df.loc[0, "error"].startswith("InvalidInput")
    assert math.isnan(df.loc[0, "entropy_loss"])
    assert df.loc[1, "error"] == ""


def test_outlier_k_maps_to_root_scale():
    doc = small_doc()
    del doc["scenario"]["outlier_scale"]
    doc["scenario"]["outlier_k"] = 50
    cfg = parse_experiment(doc, seed=1, workers=1)
    assert cfg.scenario.outlier_scale == pytest.approx(math.sqrt(50))


def test_flags_override_file_values():
    cfg = parse_experiment(small_doc(seed=7, workers=3), seed=11, workers=1, output="x.csv")
    assert (cfg.master_seed, cfg.workers, cfg.output) == (11, 1, "x.csv")
    cfg = parse_experiment(small_doc(seed=7, workers=3))
    assert (cfg.master_seed, cfg.workers) == (7, 3)


@pytest.mark.parametrize("mutate", [
    lambda d: d["scenario"].update(colour="red"),
    lambda d: d["experiment"].update(replicates=3),
    lambda d: d["pipelines"][0].update(shrink=True),
    lambda d: d["scenario"].update(mode="rows"),
    lambda d: d["experiment"].update(sweep=[0, 41]),
    lambda d: d["experiment"].update(sweep=[]),
    lambda d: d["pipelines"][1].update(scale="sd"),
    lambda d: d.pop("pipelines"),
])
def test_config_errors(mutate):
    doc = small_doc()
    mutate(doc)
    with pytest.raises(ConfigError):
        parse_experiment(doc, seed=1, workers=1)


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[scenario\nfamily = 1", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_experiment_config(bad)
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / "missing.toml")


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_experiment_config(path, workers=1)
    assert cfg.replications >= 1
    assert cfg.pipelines


def test_support_counts_shape_and_diagonal():
    doc = small_doc(replications=3)
    doc["pipelines"] = [{"scale": "qn", "psd": "npd", "lambda": 0.05}, {"baseline": True, "lambda": 50.0}]
    cfg = parse_experiment(doc, seed=2, workers=1)
    counts = support_counts(cfg)
    assert len(counts) == 2 * 2 * 5
    assert list(counts.columns) == ["pipeline", "level", "row", "c0", "c1", "c2", "c3", "c4"]
    for _, block in counts.groupby(["pipeline", "level"]):
        mat = block[[f"c{j}" for j in range(5)]].to_numpy()
        assert np.all(np.diag(mat) == 3)
        assert mat.max() <= 3
    huge = counts[counts["pipeline"] == "classical+glasso"]
    mat = huge[[f"c{j}" for j in range(5)]].to_numpy().reshape(2, 5, 5)
    assert np.all(mat[:, ~np.eye(5, dtype=bool)] == 0)


def test_pipelines_differing_only_in_lambda_stay_apart():
    doc = small_doc(replications=2, sweep=[0])
    doc["pipelines"] = [
        {"scale": "qn", "lambda": 0.05},
        {"scale": "qn", "lambda": 0.5},
        {"scale": "qn", "lambda": 0.05, "penalize_diagonal": False},
    ]
    cfg = parse_experiment(doc, seed=4, workers=1)
    assert cfg.labels == ["qn+npd+glasso@lambda=0.05", "qn+npd+glasso@lambda=0.5", "qn+npd+glasso(offdiag)"]

    df, baseline = results_frame(run_replications(cfg))
    summary = prial_summary(df, baseline)
    assert list(summary["pipeline"]) == cfg.labels
    assert list(summary["replications"]) == [2, 2, 2]
    by_label = dict(zip(summary["pipeline"], summary["mean_entropy_loss"]))
    assert by_label["qn+npd+glasso@lambda=0.05"] != by_label["qn+npd+glasso@lambda=0.5"]


def test_identical_pipelines_get_numbered_labels():
    doc = small_doc()
    doc["pipelines"] = [{"scale": "mad", "psd": "ogk", "ogk_iterations": 1}, {"scale": "mad", "psd": "ogk"},
                        {"scale": "mad", "psd": "ogk"}]
    cfg = parse_experiment(doc, seed=1, workers=1)
    assert cfg.labels == ["mad+ogk(iter=1)+glasso", "mad+ogk+glasso@oracle#1", "mad+ogk+glasso@oracle#2"]


def test_support_count_blocks_use_unique_labels():
    doc = small_doc(replications=1, sweep=[0])
    doc["pipelines"] = [{"scale": "qn", "lambda": 0.05}, {"scale": "qn", "lambda": 5.0}]
    counts = support_counts(parse_experiment(doc, seed=2, workers=1))
    assert list(dict.fromkeys(counts["pipeline"])) == ["qn+npd+glasso@lambda=0.05", "qn+npd+glasso@lambda=5"]


@pytest.mark.parametrize("sweep", [[0, 2.5], [1.5]])
def test_fractional_cell_counts_are_rejected(sweep):
    with pytest.raises(ConfigError, match="whole numbers"):
        parse_experiment(small_doc(sweep=sweep), seed=1, workers=1)


def test_fractional_levels_are_fine_for_bernoulli():
    doc = small_doc(sweep=[0.0, 0.05])
    doc["scenario"]["mode"] = "bernoulli"
    assert parse_experiment(doc, seed=1, workers=1).sweep == [0.0, 0.05]


@pytest.mark.parametrize("value", [-0.1, 0, "lots", float("nan")])
def test_baseline_lambda_must_be_positive(value):
    with pytest.raises(ConfigError):
        parse_experiment(small_doc(baseline_lambda=value), seed=1, workers=1)


@pytest.mark.parametrize("k", [10, 50, 100])
def test_outlier_scale_sweep_configs(k):
    cfg = load_experiment_config(CONFIG_DIR / f"slow_outlier_k{k}.toml", workers=1)
    sc = cfg.scenario
    assert (sc.family.value, sc.p, sc.n) == ("banded", 90, 50)
    assert sc.outlier_scale == pytest.approx(math.sqrt(k))


def test_n50_configs_cover_every_dimension():
    dims = sorted(load_experiment_config(path, workers=1).scenario.p
                  for path in CONFIG_DIR.glob("slow_scattered_p*_n50.toml"))
    assert dims == [15, 30, 60, 90]
