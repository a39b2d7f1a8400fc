"""Pairwise robust covariance via the Gnanadesikan-Kettenring identity.

    cov(X, Y) = sX sY / 4 * [s(X/sX + Y/sY)^2 - s(X/sX - Y/sY)^2]

with ``s`` any scale estimator. The assembled matrix is symmetric but not
necessarily positive definite; see ``psd_repair``.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

from errors import EmptyOrTooShort, LengthMismatch, NonFinite
from robust_scale import ScaleFunction, ScaleKind, as_sample, resolve_scale


def as_data_matrix(X) -> np.ndarray:
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise EmptyOrTooShort(f"data matrix must be 2-D, got shape {arr.shape}")
    n, p = arr.shape
    if n < 2 or p < 2:
        raise EmptyOrTooShort(f"data matrix needs n >= 2 and p >= 2, got {n}x{p}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("data matrix contains NaN or Inf")
    return arr


def _gk(x: np.ndarray, y: np.ndarray, s: ScaleFunction, sx: float, sy: float) -> float:
    if sx == 0.0 or sy == 0.0:
        return 0.0
    u = x / sx + y / sy
    v = x / sx - y / sy
    return sx * sy / 4.0 * (s(u) ** 2 - s(v) ** 2)


def gk_cov_pair(x, y, kind: ScaleKind | ScaleFunction) -> float:
    x = as_sample(x)
    y = as_sample(y)
    if x.size != y.size:
        raise LengthMismatch(f"samples differ in length: {x.size} vs {y.size}")
    s = resolve_scale(kind)
    return float(_gk(x, y, s, s(x), s(y)))


def pairwise_cov_matrix(X, kind: ScaleKind | ScaleFunction) -> np.ndarray:
    """Symmetric p x p matrix: s(col_j)^2 on the diagonal, GK covariances off it.

    Constant columns get zero covariance with everything.
    """
    X = as_data_matrix(X)
    s = resolve_scale(kind)
    p = X.shape[1]
    cols = [X[:, j] for j in range(p)]
    scales = np.array([s(c) for c in cols])

    out = np.diag(scales**2)
    # each pair is independent of the others
    for j, k in combinations(range(p), 2):
        out[j, k] = out[k, j] = _gk(cols[j], cols[k], s, scales[j], scales[k])
    return out


def classical_cov(X) -> np.ndarray:
    """Sample covariance (n - 1 denominator); the comparison arm."""
    X = as_data_matrix(X)
    return np.cov(X, rowvar=False, ddof=1)
