"""Robust univariate scale estimators with Gaussian-consistency constants.

Every public estimator returns ``constant * raw`` where ``raw`` is the
un-calibrated statistic and ``constant`` comes from the ``ConsistencyTable``.
Quantiles use linear interpolation between order statistics at
``1 + (n - 1) q`` (numpy's default ``linear`` method), so IQR and Pn are
reproducible bit for bit.

Example: ``qn([1, 2, 4, 8])`` sorts the pairwise differences to
(1, 2, 3, 4, 6, 7), takes the 3rd smallest and returns 2.2219 * 3.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from errors import EmptyOrTooShort, InvalidInput, NonFinite

PHI_INV_75 = float(norm.ppf(0.75))


class ScaleTag(str, enum.Enum):
    MAD = "mad"
    IQR = "iqr"
    QN = "qn"
    TAU = "tau"
    PN = "pn"
    PN_TRIMMED = "pn_trimmed"


@dataclass(frozen=True)
class ScaleKind:
    tag: ScaleTag
    trim_d: float = 3.0
    tau_c1: float = 4.5
    tau_c2: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "tag", ScaleTag(self.tag))
        if self.trim_d <= 0:
            raise InvalidInput(f"trim_d must be positive, got {self.trim_d}")
        if not self.tau_c1 > self.tau_c2 > 0:
            raise InvalidInput(f"need tau_c1 > tau_c2 > 0, got {self.tau_c1}, {self.tau_c2}")

    @property
    def label(self) -> str:
        if self.tag is ScaleTag.PN_TRIMMED:
            return f"pn_trimmed(d={self.trim_d:g})"
        return self.tag.value


@functools.lru_cache(maxsize=None)
def tau_constant(c2: float) -> float:
    """1 / sqrt(E[min(Z^2, c2^2)]) for Z ~ N(0, 1)."""
    inside = (2.0 * norm.cdf(c2) - 1.0) - 2.0 * c2 * norm.pdf(c2)
    tail = 2.0 * c2**2 * norm.sf(c2)
    return 1.0 / math.sqrt(inside + tail)


@dataclass(frozen=True)
class ConsistencyTable:
    mad: float = 1.0 / PHI_INV_75
    iqr: float = 1.0 / (2.0 * PHI_INV_75)
    qn: float = 2.2219
    tau: float = tau_constant(3.0)
    pn: float = math.sqrt(2.0) / (2.0 * PHI_INV_75)
    pn_trimmed: float = math.sqrt(2.0) / (2.0 * PHI_INV_75)

    def constant(self, kind: ScaleKind) -> float:
        if kind.tag is ScaleTag.TAU:
            return tau_constant(kind.tau_c2)
        return getattr(self, kind.tag.value)

    def as_dict(self) -> dict[str, float]:
        return {tag.value: getattr(self, tag.value) for tag in ScaleTag}


CONSISTENCY = ConsistencyTable()


# ---- Sample validation ----
def as_sample(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size < 2:
        raise EmptyOrTooShort(f"scale estimate needs n >= 2, got n={arr.size}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("sample contains NaN or Inf")
    return arr


def _quartile_spread(v: np.ndarray) -> float:
    q1, q3 = np.quantile(v, [0.25, 0.75])
    return float(q3 - q1)


def _pairwise_means(x: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(x.size, k=1)
    return (x[i] + x[j]) / 2.0


# ---- Raw (un-calibrated) statistics ----
def _raw_mad(x: np.ndarray, kind: ScaleKind) -> float:
    return float(np.median(np.abs(x - np.median(x))))


def _raw_iqr(x: np.ndarray, kind: ScaleKind) -> float:
    return _quartile_spread(x)


def _raw_qn(x: np.ndarray, kind: ScaleKind) -> float:
    n = x.size
    i, j = np.triu_indices(n, k=1)
    diffs = np.abs(x[i] - x[j])
    h = n // 2 + 1
    k = h * (h - 1) // 2
    return float(np.partition(diffs, k - 1)[k - 1])


def _raw_tau(x: np.ndarray, kind: ScaleKind) -> float:
    s0 = CONSISTENCY.mad * _raw_mad(x, kind)
    if s0 == 0.0:
        return 0.0
    med = np.median(x)
    u = (x - med) / (kind.tau_c1 * s0)
    w = np.where(np.abs(u) <= 1.0, (1.0 - u**2) ** 2, 0.0)
    m = np.sum(w * x) / np.sum(w)
    r = (x - m) / s0
    rho = np.minimum(r**2, kind.tau_c2**2)
    return float(s0 * math.sqrt(np.mean(rho)))


def _raw_pn(x: np.ndarray, kind: ScaleKind) -> float:
    return _quartile_spread(_pairwise_means(x))


def _raw_pn_trimmed(x: np.ndarray, kind: ScaleKind) -> float:
    med = np.median(x)
    s = CONSISTENCY.mad * _raw_mad(x, kind)
    keep = np.abs(x - med) <= kind.trim_d * s
    if keep.sum() < 2:
        return _raw_pn(x, kind)
    # dropping flagged observations drops every pairwise mean that involves them
    return _quartile_spread(_pairwise_means(x[keep]))


_RAW = {
    ScaleTag.MAD: _raw_mad,
    ScaleTag.IQR: _raw_iqr,
    ScaleTag.QN: _raw_qn,
    ScaleTag.TAU: _raw_tau,
    ScaleTag.PN: _raw_pn,
    ScaleTag.PN_TRIMMED: _raw_pn_trimmed,
}


def scale_estimate(x, kind: ScaleKind, table: ConsistencyTable = CONSISTENCY) -> float:
    v = as_sample(x)
    return table.constant(kind) * _RAW[kind.tag](v, kind)


# ---- Public estimators ----
def mad(x) -> float:
    return scale_estimate(x, ScaleKind(ScaleTag.MAD))


def iqr(x) -> float:
    return scale_estimate(x, ScaleKind(ScaleTag.IQR))


def qn(x) -> float:
    """Rousseeuw-Croux Qn by explicit enumeration of the n(n-1)/2 differences."""
    return scale_estimate(x, ScaleKind(ScaleTag.QN))


def tau_scale(x, c1: float = 4.5, c2: float = 3.0) -> float:
    """tau-scale around a bisquare-weighted location, MAD as initial scale.

    Returns 0 when the MAD is 0 (a constant majority).
    """
    return scale_estimate(x, ScaleKind(ScaleTag.TAU, tau_c1=c1, tau_c2=c2))


def pn(x) -> float:
    """Interquartile range of the pairwise means."""
    return scale_estimate(x, ScaleKind(ScaleTag.PN))


def pn_trimmed(x, d: float = 3.0) -> float:
    """Pn after dropping observations farther than d * MAD from the median.

    Falls back to plain Pn when fewer than two observations survive.
    """
    return scale_estimate(x, ScaleKind(ScaleTag.PN_TRIMMED, trim_d=d))


ScaleFunction = Callable[[np.ndarray], float]


def resolve_scale(kind: ScaleKind | ScaleFunction) -> ScaleFunction:
    """Turn a ScaleKind into a one-argument estimator; callables pass through."""
    if isinstance(kind, ScaleKind):
        return functools.partial(scale_estimate, kind=kind)
    if callable(kind):
        return kind
    raise InvalidInput(f"not a scale estimator: {kind!r}")


# ---- Calibration ----
def calibrate_constant(kind: ScaleKind, n_cal: int = 1000, reps: int = 100, seed: int = 0) -> float:
    """Monte Carlo multiplier that makes ``kind`` unbiased for sigma on N(0, 1)."""
    if n_cal < 1000:
        raise InvalidInput(f"n_cal must be >= 1000, got {n_cal}")
    if reps < 100:
        raise InvalidInput(f"reps must be >= 100, got {reps}")
    rng = np.random.default_rng(seed)
    raw = _RAW[kind.tag]
    total = 0.0
    for _ in range(reps):
        total += raw(rng.standard_normal(n_cal), kind)
    return reps / total


def calibrate_table(tags, n_cal: int = 1000, reps: int = 100, seed: int = 0) -> dict[str, float]:
    return {ScaleTag(t).value: calibrate_constant(ScaleKind(ScaleTag(t)), n_cal, reps, seed) for t in tags}
