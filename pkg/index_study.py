"""How the performance indices react to a known distortion.

Two scripted studies with Sigma = Theta = I:

* ``inflate_variance_sweep`` overwrites s11 of one clean sample covariance.
* ``column_contamination_sweep`` contaminates a growing number of cells per
  column and scores the classical covariance.

Each returns one row per setting with the covariance-side indices (S against
I) and precision-side indices (S^{-1} against I).
"""
from __future__ import annotations

import numpy as np
import pandas as pd

from pairwise_cov import classical_cov
from perf_metrics import index_report
from simlab import contaminate_fixed, derive_seed, sample_gaussian


def _both_sides(S: np.ndarray) -> dict:
    eye = np.eye(S.shape[0])
    out = index_report(eye, S).as_dict("cov_")
    out.update(index_report(eye, np.linalg.inv(S)).as_dict("prec_"))
    return {k: v for k, v in out.items() if not k.endswith(("mcc", "tp", "fp", "tn", "fn", "prial"))}


def inflate_variance_sweep(p: int = 5, n: int = 100, s11_grid=None, seed: int = 0) -> pd.DataFrame:
    grid = np.linspace(0.5, 10.0, 20) if s11_grid is None else np.asarray(s11_grid, dtype=float)
    S0 = classical_cov(sample_gaussian(np.eye(p), n, derive_seed(seed, 0, "inflate")))
    rows = []
    for s11 in grid:
        S = S0.copy()
        S[0, 0] = s11  # 只改 s11
        rows.append({"s11": float(s11), **_both_sides(S)})
    return pd.DataFrame(rows)


def column_contamination_sweep(p: int = 10, n: int = 100, counts=range(0, 26), outlier_scale: float = 10.0,
                               reps: int = 20, seed: int = 0) -> pd.DataFrame:
    rows = []
    for count in counts:
        per_rep = []
        for rep in range(reps):
            # 每次重複都重新抽樣
            clean = sample_gaussian(np.eye(p), n, derive_seed(seed, rep, "data"))
            X = contaminate_fixed(clean, int(count), outlier_scale, seed=derive_seed(seed, rep, f"contam:{count}")).X
            per_rep.append(_both_sides(classical_cov(X)))
        rows.append({"count": int(count), **pd.DataFrame(per_rep).mean().to_dict()})
    return pd.DataFrame(rows)
