"""Positive-definiteness repair for pairwise covariance matrices.

Three routes, selected by ``PsdMethod``:

* NPD: clip the spectrum of the pairwise matrix at ``delta`` (Frobenius
  nearest PD matrix with eigenvalues >= delta). PD inputs come back as is.
* OGK: orthogonalised Gnanadesikan-Kettenring; eigenvalues replaced by
  robust variances along the principal directions, optionally iterated.
* OGK_REWEIGHTED: OGK followed by a hard-rejection Mahalanobis screen and
  the classical covariance of the surviving rows.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.stats import chi2

from errors import DegenerateDirection, EigenFailure, InvalidInput, TooFewSurvivors
from pairwise_cov import as_data_matrix, pairwise_cov_matrix
from robust_scale import ScaleKind, resolve_scale

LOGGER = logging.getLogger(__name__)


class PsdTag(str, enum.Enum):
    NPD = "npd"
    OGK = "ogk"
    OGK_REWEIGHTED = "ogk_reweighted"


@dataclass(frozen=True)
class PsdMethod:
    tag: PsdTag = PsdTag.NPD
    delta: float = 1e-6
    ogk_iterations: int = 2
    reweight_quantile: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "tag", PsdTag(self.tag))
        if self.delta <= 0:
            raise InvalidInput(f"delta must be positive, got {self.delta}")
        if self.ogk_iterations not in (1, 2):
            raise InvalidInput(f"ogk_iterations must be 1 or 2, got {self.ogk_iterations}")
        if not 0.0 < self.reweight_quantile < 1.0:
            raise InvalidInput(f"reweight_quantile must lie in (0, 1), got {self.reweight_quantile}")


@dataclass(frozen=True)
class PDMatrix:
    matrix: np.ndarray
    min_eigenvalue: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _check_symmetric(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains NaN or Inf")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise InvalidInput("matrix is not symmetric")
    return A


def _eigh(A: np.ndarray):
    try:
        return linalg.eigh(A)
    except linalg.LinAlgError as exc:
        raise EigenFailure(f"symmetric eigensolver failed: {exc}") from exc


def nearest_pd(A, delta: float = 1e-6) -> PDMatrix:
    A = _check_symmetric(A)
    if delta <= 0:
        raise InvalidInput(f"delta must be positive, got {delta}")
    lam, E = _eigh(A)
    if lam[0] >= delta:
        return PDMatrix(A.copy(), float(lam[0]))

    W = (E * np.maximum(lam, delta)) @ E.T
    W = (W + W.T) / 2.0
    # reconstruction round-off can leave the floor a few ulps short
    eye = np.eye(A.shape[0])
    spacing = 16 * A.shape[0] * np.spacing(np.linalg.norm(W))
    for _ in range(5):
        low = float(linalg.eigvalsh(W)[0])
        if low >= delta:
            break
        W = W + eye * (delta - low + spacing)
    return PDMatrix(W, float(linalg.eigvalsh(W)[0]))


# ---- OGK ----
def _ogk_components(X: np.ndarray, kind: ScaleKind, iterations: int):
    """Return (T, Z) with X = Z T' and Z the final orthogonal coordinates."""
    s = resolve_scale(kind)
    T = np.eye(X.shape[1])
    Z = X
    for _ in range(iterations):
        d = np.array([s(Z[:, j]) for j in range(Z.shape[1])])
        if np.any(d == 0.0):
            raise DegenerateDirection(f"zero robust scale in column(s) {np.flatnonzero(d == 0.0).tolist()}")
        Y = Z / d
        U = pairwise_cov_matrix(Y, kind)
        np.fill_diagonal(U, 1.0)
        _, E = _eigh(U)
        Z = Y @ E
        T = T @ (d[:, None] * E)
    return T, Z


def _ogk_fit(X, kind: ScaleKind, iterations: int):
    X = as_data_matrix(X)
    n, p = X.shape
    if n <= p:
        LOGGER.warning("OGK on n=%d <= p=%d; estimate may be unstable", n, p)
    s = resolve_scale(kind)
    T, Z = _ogk_components(X, kind, iterations)
    gamma = np.array([s(Z[:, j]) for j in range(p)]) ** 2
    if np.any(gamma == 0.0):
        raise DegenerateDirection(f"zero robust scale along direction(s) {np.flatnonzero(gamma == 0.0).tolist()}")
    sigma = (T * gamma) @ T.T
    sigma = (sigma + sigma.T) / 2.0
    location = T @ np.median(Z, axis=0)
    return sigma, location


def ogk(X, kind: ScaleKind, iterations: int = 2) -> PDMatrix:
    if iterations not in (1, 2):
        raise InvalidInput(f"iterations must be 1 or 2, got {iterations}")
    sigma, _ = _ogk_fit(X, kind, iterations)
    return PDMatrix(sigma, float(linalg.eigvalsh(sigma)[0]))


def reweight_mask(X, kind: ScaleKind, quantile: float = 0.9, iterations: int = 2) -> np.ndarray:
    """Rows whose OGK Mahalanobis distance passes the scaled chi-square cutoff."""
    X = as_data_matrix(X)
    p = X.shape[1]
    sigma, location = _ogk_fit(X, kind, iterations)
    centred = X - location
    try:
        c = linalg.cho_factor(sigma)
    except linalg.LinAlgError as exc:
        raise DegenerateDirection(f"OGK estimate is not PD: {exc}") from exc
    d2 = np.einsum("ij,ij->i", centred, linalg.cho_solve(c, centred.T).T)

    cutoff = chi2.ppf(quantile, p) * np.median(d2) / chi2.ppf(0.5, p)
    return d2 <= cutoff


def ogk_reweighted(X, kind: ScaleKind, quantile: float = 0.9, iterations: int = 2) -> PDMatrix:
    """Classical covariance of the rows that pass a scaled chi-square screen."""
    X = as_data_matrix(X)
    n, p = X.shape
    keep = reweight_mask(X, kind, quantile, iterations)
    LOGGER.debug("reweighting kept %d of %d rows", int(keep.sum()), n)
    if keep.sum() < p + 1:
        raise TooFewSurvivors(f"only {int(keep.sum())} rows survive, need at least {p + 1}")
    cov = np.cov(X[keep], rowvar=False, ddof=1)
    return PDMatrix(cov, float(linalg.eigvalsh(cov)[0]))


def repair(X, kind: ScaleKind, method: PsdMethod) -> PDMatrix:
    if method.tag is PsdTag.NPD:
        return nearest_pd(pairwise_cov_matrix(X, kind), method.delta)
    if method.tag is PsdTag.OGK:
        return ogk(X, kind, method.ogk_iterations)
    return ogk_reweighted(X, kind, method.reweight_quantile, method.ogk_iterations)
