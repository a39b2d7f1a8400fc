"""Simulation laboratory: true precision matrices, Gaussian samples and
cellwise contamination (fixed count per column or independent Bernoulli).
"""
from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from errors import CountExceedsN, FactorizationFailure, InvalidInput, SimulationError

LOGGER = logging.getLogger(__name__)

MAX_SCATTER_RETRIES = 100
EXTREME_SCALE = 10.0


class ThetaFamily(str, enum.Enum):
    BANDED = "banded"
    SCATTERED = "scattered"
    DENSE = "dense"


@dataclass(frozen=True)
class Scenario:
    family: ThetaFamily
    p: int
    n: int
    contam_count_per_col: int | None = 0
    contam_epsilon: float | None = None
    outlier_scale: float = EXTREME_SCALE
    condition_target: float | None = None
    seed: int = 0
    df: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "family", ThetaFamily(self.family))
        if self.p < 2 or self.n < 2:
            raise InvalidInput(f"need p >= 2 and n >= 2, got p={self.p}, n={self.n}")
        if (self.contam_count_per_col is None) == (self.contam_epsilon is None):
            raise InvalidInput("exactly one of contam_count_per_col / contam_epsilon must be set")
        if self.contam_count_per_col is not None and not 0 <= self.contam_count_per_col <= self.n:
            raise CountExceedsN(f"count {self.contam_count_per_col} outside [0, {self.n}]")
        if self.contam_epsilon is not None and not 0.0 <= self.contam_epsilon < 1.0:
            raise InvalidInput(f"epsilon must lie in [0, 1), got {self.contam_epsilon}")
        if self.outlier_scale <= 0:
            raise InvalidInput(f"outlier_scale must be positive, got {self.outlier_scale}")

    @property
    def bernoulli(self) -> bool:
        return self.contam_epsilon is not None

    @property
    def level(self) -> float:
        return self.contam_epsilon if self.bernoulli else self.contam_count_per_col

    def at_level(self, level) -> "Scenario":
        if self.bernoulli:
            return replace(self, contam_epsilon=float(level))
        return replace(self, contam_count_per_col=int(level))

    def clean(self) -> "Scenario":
        return self.at_level(0)


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray
    contaminated_mask: np.ndarray
    theta_true: np.ndarray | None = None


def derive_seed(master_seed: int, replication: int, stage: str) -> int:
    """Independent 64-bit stream seed from (master, replication, stage)."""
    digest = hashlib.blake2b(f"{master_seed}:{replication}:{stage}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


# ---- Precision matrix families ----
def gen_banded(p: int) -> np.ndarray:
    idx = np.arange(p)
    return 0.6 ** np.abs(np.subtract.outer(idx, idx)).astype(float)


def gen_dense(p: int) -> np.ndarray:
    return np.full((p, p), 0.5) + 0.5 * np.eye(p)


def scattered_shift(B: np.ndarray, condition_target: float) -> float:
    """delta such that cond(B + delta I) equals condition_target."""
    lam = linalg.eigvalsh(B)
    return (lam[-1] - condition_target * lam[0]) / (condition_target - 1.0)


def gen_scattered(p: int, condition_target: float | None = None, seed: int = 0) -> np.ndarray:
    c = float(p if condition_target is None else condition_target)
    if c <= 1.0:
        raise InvalidInput(f"condition_target must exceed 1, got {c}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(p, k=1)
    for attempt in range(MAX_SCATTER_RETRIES):
        B = np.zeros((p, p))
        B[iu] = 0.5 * (rng.random(iu[0].size) < 0.1)
        B = B + B.T
        lam = linalg.eigvalsh(B)
        delta = scattered_shift(B, c)
        if delta + lam[0] > 0:
            M = B + delta * np.eye(p)
            d = 1.0 / np.sqrt(np.diag(M))
            theta = d[:, None] * M * d[None, :]
            np.fill_diagonal(theta, 1.0)
            return theta
        LOGGER.warning("scattered draw %d not PD (delta=%.3g), resampling", attempt, delta)
    raise SimulationError(f"no PD scattered matrix after {MAX_SCATTER_RETRIES} draws")


def gen_theta(family: ThetaFamily, p: int, condition_target: float | None = None, seed: int = 0) -> np.ndarray:
    family = ThetaFamily(family)
    if p < 2:
        raise InvalidInput(f"p must be >= 2, got {p}")
    if family is ThetaFamily.BANDED:
        return gen_banded(p)
    if family is ThetaFamily.DENSE:
        return gen_dense(p)
    return gen_scattered(p, condition_target, seed)


# ---- Sampling ----
def sample_gaussian(theta_true, n: int, seed: int) -> np.ndarray:
    """n rows of N(0, Theta^{-1}) through the lower Cholesky factor of Sigma."""
    theta_true = np.asarray(theta_true, dtype=float)
    p = theta_true.shape[0]
    try:
        sigma = linalg.cho_solve(linalg.cho_factor(theta_true, lower=True), np.eye(p))
        L = linalg.cholesky((sigma + sigma.T) / 2.0, lower=True)
    except linalg.LinAlgError as exc:
        raise FactorizationFailure(f"cannot factor covariance: {exc}") from exc
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p)) @ L.T


def student_t(rng: np.random.Generator, df: float, size) -> np.ndarray:
    """t draws as N(0,1) / sqrt(chi2_df / df)."""
    z = rng.standard_normal(size)
    return z / np.sqrt(rng.chisquare(df, size) / df)


def contaminate_fixed(X, count_per_col: int, outlier_scale: float, df: float = 10.0, seed: int = 0,
                      theta_true=None) -> LabeledDataset:
    X = np.array(X, dtype=float)
    n, p = X.shape
    if not 0 <= count_per_col <= n:
        raise CountExceedsN(f"count {count_per_col} outside [0, {n}]")
    rng = np.random.default_rng(seed)
    mask = np.zeros((n, p), dtype=bool)
    # 每一欄各自隨機挑選要汙染的列
    for j in range(p):
        rows = rng.choice(n, size=count_per_col, replace=False)
        mask[rows, j] = True
        X[rows, j] = outlier_scale * student_t(rng, df, count_per_col)
    return LabeledDataset(X, mask, theta_true)


def contaminate_bernoulli(X, epsilon: float, outlier_scale: float, df: float = 10.0, seed: int = 0,
                          theta_true=None) -> LabeledDataset:
    X = np.array(X, dtype=float)
    if not 0.0 <= epsilon < 1.0:
        raise InvalidInput(f"epsilon must lie in [0, 1), got {epsilon}")
    rng = np.random.default_rng(seed)
    mask = rng.random(X.shape) < epsilon
    X[mask] = outlier_scale * student_t(rng, df, int(mask.sum()))
    return LabeledDataset(X, mask, theta_true)


def row_contamination_prob(epsilon: float, p: int) -> float:
    """Probability that a row has at least one contaminated cell."""
    if not 0.0 <= epsilon <= 1.0 or p < 1:
        raise InvalidInput(f"need epsilon in [0, 1] and p >= 1, got {epsilon}, {p}")
    return 1.0 - (1.0 - epsilon) ** p


def contaminate(X, scenario: Scenario, seed: int, theta_true=None) -> LabeledDataset:
    """依情境選擇固定數量或 Bernoulli 汙染。"""
    if scenario.bernoulli:
        return contaminate_bernoulli(X, scenario.contam_epsilon, scenario.outlier_scale, scenario.df, seed, theta_true)
    return contaminate_fixed(X, scenario.contam_count_per_col, scenario.outlier_scale, scenario.df, seed, theta_true)


def generate_dataset(scenario: Scenario, theta_true=None) -> LabeledDataset:
    """Clean sample from the scenario's model, then contamination; all seeded by scenario.seed."""
    if theta_true is None:
        theta_true = gen_theta(scenario.family, scenario.p, scenario.condition_target,
                               derive_seed(scenario.seed, 0, "theta"))
    clean = sample_gaussian(theta_true, scenario.n, derive_seed(scenario.seed, 0, "data"))
    return contaminate(clean, scenario, derive_seed(scenario.seed, 0, "contam"), theta_true)
