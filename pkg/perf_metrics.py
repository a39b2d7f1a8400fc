"""Performance indices for precision (or covariance) estimates.

Most indices are functions of the relative matrix Theta0 = Theta^{-1} Theta_hat,
which is in general not symmetric; its eigenvalues are the generalized
eigenvalues of the pair (Theta_hat, Theta) and are real and positive when
both matrices are PD.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from errors import InvalidInput, NotPD, ZeroBaseline

EDGE_TOL = 1e-8


def _check_pd(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInput(f"{name} must be square, got shape {M.shape}")
    try:
        linalg.cholesky(M, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPD(f"{name} is not positive definite") from exc
    return M


def _same_dim(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise InvalidInput(f"dimension mismatch: {a.shape} vs {b.shape}")


def relative_eigenvalues(theta_true, theta_hat) -> np.ndarray:
    """Eigenvalues of Theta^{-1} Theta_hat via Cholesky-whitened eigh."""
    theta_true = _check_pd(theta_true, "theta_true")
    theta_hat = _check_pd(theta_hat, "theta_hat")
    _same_dim(theta_true, theta_hat)
    return linalg.eigh(theta_hat, theta_true, eigvals_only=True)


def relative_matrix(theta_true, theta_hat) -> np.ndarray:
    theta_true = _check_pd(theta_true, "theta_true")
    theta_hat = np.asarray(theta_hat, dtype=float)
    _same_dim(theta_true, theta_hat)
    return linalg.cho_solve(linalg.cho_factor(theta_true), theta_hat)


# ---- Loss functions ----
def entropy_loss(theta_true, theta_hat) -> float:
    """tr(Theta^{-1} Theta_hat) - log det(Theta^{-1} Theta_hat) - p."""
    lam = relative_eigenvalues(theta_true, theta_hat)
    return float(np.sum(lam - np.log(lam)) - lam.size)


def prial(loss_baseline: float, loss_estimate: float) -> float:
    if not loss_baseline > 0:
        raise ZeroBaseline(f"baseline loss must be positive, got {loss_baseline}")
    return 100.0 * (loss_baseline - loss_estimate) / loss_baseline


class MatrixNorms(NamedTuple):
    frobenius: float
    one: float
    infinity: float
    spectral: float


def matrix_norms(theta_true, theta_hat) -> MatrixNorms:
    """Norms of Theta^{-1} Theta_hat - I (one and infinity norms may differ)."""
    A = relative_matrix(theta_true, theta_hat) - np.eye(np.shape(theta_hat)[0])
    return MatrixNorms(
        frobenius=float(np.linalg.norm(A, "fro")),
        one=float(np.linalg.norm(A, 1)),
        infinity=float(np.linalg.norm(A, np.inf)),
        spectral=float(np.linalg.norm(A, 2)),
    )


def log_det_index(theta0_eigenvalues) -> float:
    lam = np.asarray(theta0_eigenvalues, dtype=float)
    return float(np.sum(np.log(lam)))


def log_cond_index(theta0) -> float:
    """log of the spectral condition number; +inf for a singular matrix."""
    sv = np.linalg.svd(np.asarray(theta0, dtype=float), compute_uv=False)
    if sv[-1] <= sv[0] * np.finfo(float).eps:
        return math.inf
    return float(max(0.0, math.log(sv[0] / sv[-1])))


def quadratic_loss(theta_true, theta_hat) -> float:
    A = relative_matrix(theta_true, theta_hat) - np.eye(np.shape(theta_hat)[0])
    return float(np.sum(A * A))


# ---- Support recovery ----
class SupportScore(NamedTuple):
    mcc: float
    tp: int
    fp: int
    tn: int
    fn: int


def support_mask(theta, edge_tol: float = EDGE_TOL) -> np.ndarray:
    return np.abs(np.asarray(theta, dtype=float)) > edge_tol


def mcc(theta_true, theta_hat, edge_tol: float = EDGE_TOL) -> SupportScore:
    theta_true = np.asarray(theta_true, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    _same_dim(theta_true, theta_hat)
    iu = np.triu_indices(theta_true.shape[0], k=1)
    truth = support_mask(theta_true, edge_tol)[iu]
    guess = support_mask(theta_hat, edge_tol)[iu]
    return _mcc_from_labels(truth, guess)


def _mcc_from_labels(truth: np.ndarray, guess: np.ndarray) -> SupportScore:
    tp = int(np.sum(truth & guess))
    fp = int(np.sum(~truth & guess))
    tn = int(np.sum(~truth & ~guess))
    fn = int(np.sum(truth & ~guess))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return SupportScore(0.0, tp, fp, tn, fn)
    return SupportScore((tp * tn - fp * fn) / math.sqrt(denom), tp, fp, tn, fn)


# ---- Reports ----
@dataclass
class MetricReport:
    entropy_loss: float
    norm_frobenius: float
    norm_one: float
    norm_infinity: float
    norm_spectral: float
    log_det: float
    log_cond: float
    quadratic_loss: float
    mcc: float = math.nan
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    prial: float = field(default=math.nan)

    def as_dict(self, prefix: str = "") -> dict:
        return {f"{prefix}{k}": v for k, v in asdict(self).items()}


def index_report(true, hat) -> MetricReport:
    """Loss and norm indices of ``hat`` against ``true`` (no support scoring)."""
    lam = relative_eigenvalues(true, hat)
    norms = matrix_norms(true, hat)
    return MetricReport(
        entropy_loss=float(np.sum(lam - np.log(lam)) - lam.size),
        norm_frobenius=norms.frobenius,
        norm_one=norms.one,
        norm_infinity=norms.infinity,
        norm_spectral=norms.spectral,
        log_det=log_det_index(lam),
        log_cond=log_cond_index(relative_matrix(true, hat)),
        quadratic_loss=norms.frobenius**2,
    )


def score_precision(theta_true, theta_hat, edge_tol: float = EDGE_TOL) -> MetricReport:
    report = index_report(theta_true, theta_hat)
    support = mcc(theta_true, theta_hat, edge_tol)
    report.mcc = support.mcc
    report.tp, report.fp, report.tn, report.fn = support.tp, support.fp, support.tn, support.fn
    return report


METRIC_FIELDS = [
    "entropy_loss", "prial", "norm_frobenius", "norm_one", "norm_infinity", "norm_spectral",
    "log_det", "log_cond", "quadratic_loss", "mcc", "tp", "fp", "tn", "fn",
]
