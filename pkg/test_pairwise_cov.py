import numpy as np
import pytest

from errors import EmptyOrTooShort, LengthMismatch, NonFinite
from pairwise_cov import classical_cov, gk_cov_pair, pairwise_cov_matrix
from robust_scale import ScaleKind, ScaleTag, qn

QN = ScaleKind(ScaleTag.QN)
KINDS = [ScaleKind(t) for t in ScaleTag]


def sample_sd(v):
    return float(np.std(v, ddof=1))


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.label)
def test_perfect_dependence(kind):
    x = np.random.default_rng(0).standard_normal(60)
    s = qn(x) if kind.tag is ScaleTag.QN else None
    assert gk_cov_pair(x, x, kind) == pytest.approx(pairwise_cov_matrix(np.column_stack([x, x]), kind)[0, 0], rel=1e-12)
    assert gk_cov_pair(x, -x, kind) == pytest.approx(-gk_cov_pair(x, x, kind), rel=1e-12)
    if s is not None:
        assert gk_cov_pair(x, x, kind) == pytest.approx(s**2, rel=1e-12)


def test_classical_scale_reproduces_sample_covariance():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.standard_normal(50)
        y = 0.4 * x + rng.standard_normal(50)
        expected = np.cov(x, y, ddof=1)[0, 1]
        assert gk_cov_pair(x, y, sample_sd) == pytest.approx(expected, rel=1e-10)


def test_independent_columns_large_n():
    X = np.random.default_rng(2).standard_normal((40_000, 3))
    S = pairwise_cov_matrix(X, ScaleKind(ScaleTag.MAD))
    off = S[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) < 0.05)
    assert np.all(np.abs(np.diag(S) - 1.0) < 0.05)


def test_two_by_two_matches_pair_calls():
    X = np.random.default_rng(3).standard_normal((40, 2))
    S = pairwise_cov_matrix(X, QN)
    assert S[0, 1] == gk_cov_pair(X[:, 0], X[:, 1], QN)
    assert S[0, 0] == pytest.approx(qn(X[:, 0]) ** 2, rel=1e-14)


def test_duplicate_column_and_exact_symmetry():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((50, 4))
    X[:, 3] = X[:, 1]
    S = pairwise_cov_matrix(X, QN)
    assert np.array_equal(S, S.T)
    assert S[1, 3] == pytest.approx(S[1, 1], rel=1e-12)


def test_column_scaling_equivariance():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((60, 4))
    S = pairwise_cov_matrix(X, QN)
    Xs = X.copy()
    Xs[:, 2] *= 3.0
    Ss = pairwise_cov_matrix(Xs, QN)
    expected = S.copy()
    expected[2, :] *= 3.0
    expected[:, 2] *= 3.0
    np.testing.assert_allclose(Ss, expected, rtol=1e-10, atol=1e-12)


def test_constant_column_gives_zero_covariance():
    X = np.random.default_rng(6).standard_normal((30, 3))
    X[:, 0] = 2.0
    S = pairwise_cov_matrix(X, QN)
    assert S[0, 0] == 0.0
    assert S[0, 1] == 0.0 and S[0, 2] == 0.0


def test_robust_entries_resist_cellwise_outliers():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((100, 3))
    X[:, 1] = 0.5 * X[:, 0] + np.sqrt(0.75) * X[:, 1]
    Xc = X.copy()
    Xc[rng.choice(100, 10, replace=False), 0] = 100.0

    robust = pairwise_cov_matrix(X, QN)
    robust_c = pairwise_cov_matrix(Xc, QN)
    assert np.all(np.abs(robust_c[0, :] - robust[0, :]) < 1.0)
    assert abs(classical_cov(Xc)[0, 0] - classical_cov(X)[0, 0]) > 5.0


def test_validation_errors():
    with pytest.raises(LengthMismatch):
        gk_cov_pair([1.0, 2.0, 3.0], [1.0, 2.0], QN)
    with pytest.raises(NonFinite):
        pairwise_cov_matrix([[1.0, np.inf], [2.0, 3.0], [0.0, 1.0]], QN)
    with pytest.raises(EmptyOrTooShort):
        pairwise_cov_matrix(np.ones((5, 1)), QN)
