import itertools

import numpy as np
import pytest

from errors import EmptyOrTooShort, InvalidInput, NonFinite
from robust_scale import (
    CONSISTENCY,
    ScaleKind,
    ScaleTag,
    calibrate_constant,
    iqr,
    mad,
    pn,
    pn_trimmed,
    qn,
    scale_estimate,
    tau_scale,
)

ESTIMATORS = [mad, iqr, qn, tau_scale, pn, pn_trimmed]


def brute_force_qn(x):
    x = list(x)
    diffs = sorted(abs(a - b) for a, b in itertools.combinations(x, 2))
    h = len(x) // 2 + 1
    k = h * (h - 1) // 2
    return 2.2219 * diffs[k - 1]


def test_mad_hand_values():
    assert mad([5, 5, 5, 5]) == 0.0
    assert mad([1, 2, 3, 4, 5]) == pytest.approx(1.4826, abs=1e-4)


def test_qn_hand_value():
    assert qn([1, 2, 4, 8]) == pytest.approx(6.6657, rel=1e-12)


def test_qn_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        x = rng.standard_normal(n)
        assert qn(x) == brute_force_qn(x)


def test_pn_degenerate_pair():
    assert pn([0, 2]) == 0.0


@pytest.mark.parametrize("est", ESTIMATORS)
def test_constant_sample_is_zero(est):
    assert est([3.5] * 12) == 0.0


@pytest.mark.parametrize("est", ESTIMATORS)
def test_translation_invariance(est):
    x = np.random.default_rng(1).standard_normal(40)
    base = est(x)
    for b in (-7.0, 0.25, 1e3):
        assert est(x + b) == pytest.approx(base, rel=1e-9)


@pytest.mark.parametrize("est", ESTIMATORS)
def test_scale_equivariance(est):
    x = np.random.default_rng(2).standard_normal(40)
    base = est(x)
    for a in (-3.0, 0.5, 10.0):
        assert est(a * x) == pytest.approx(abs(a) * base, rel=1e-12)


@pytest.mark.parametrize("est", ESTIMATORS)
def test_permutation_invariance(est):
    rng = np.random.default_rng(3)
    x = rng.standard_normal(31)
    assert est(rng.permutation(x)) == pytest.approx(est(x), rel=1e-12)


def test_iqr_affine_equivariance():
    x = np.random.default_rng(4).standard_normal(57)
    assert iqr(-2.5 * x + 4.0) == pytest.approx(2.5 * iqr(x), rel=1e-12)


def test_pn_trimmed_without_flags_equals_pn():
    x = np.random.default_rng(5).standard_normal(30)
    assert pn_trimmed(x, d=50.0) == pn(x)


def test_pn_trimmed_drops_gross_value():
    # 100 is flagged, every other point lies within 3 MAD of the median
    x = [0.1, -0.1, 0.05, 0.0, 100.0]
    assert pn_trimmed(x, d=3.0) == pytest.approx(pn(x[:4]), rel=1e-12)


def test_pn_trimmed_falls_back_when_too_few_survive():
    # with a tiny d only the median itself survives
    x = [-5.0, 0.0, 5.0, 9.0, -9.0]
    assert pn_trimmed(x, d=1e-9) == pn(x)


def test_pn_trimmed_constant_majority():
    x = [0.0, 0.0, 0.0, 5.0, -5.0, 9.0]
    assert scale_estimate(x, ScaleKind(ScaleTag.PN_TRIMMED, trim_d=1e-9)) == 0.0


@pytest.mark.parametrize("est", [mad, iqr, tau_scale])
def test_gaussian_consistency_large_n(est):
    x = np.random.default_rng(11).standard_normal(100_000)
    assert est(x) == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("est", [qn, pn, pn_trimmed])
def test_gaussian_consistency_pairwise(est):
    # pair enumeration is O(n^2) in memory, so average moderate samples instead
    rng = np.random.default_rng(12)
    values = [est(rng.standard_normal(1000)) for _ in range(20)]
    assert np.mean(values) == pytest.approx(1.0, abs=0.02)


def test_tau_constant_is_close_to_one():
    assert 1.0 < CONSISTENCY.tau < 1.01


def test_input_validation():
    with pytest.raises(EmptyOrTooShort):
        mad([1.0])
    with pytest.raises(NonFinite):
        qn([1.0, np.nan, 2.0])
    with pytest.raises(InvalidInput):
        ScaleKind(ScaleTag.TAU, tau_c1=2.0, tau_c2=3.0)
    with pytest.raises(InvalidInput):
        ScaleKind(ScaleTag.PN_TRIMMED, trim_d=0.0)


def test_calibrate_mad_and_qn():
    assert calibrate_constant(ScaleKind(ScaleTag.MAD), 1000, 100, seed=1) == pytest.approx(1.4826, abs=0.02)
    assert calibrate_constant(ScaleKind(ScaleTag.QN), 1000, 100, seed=1) == pytest.approx(2.2219, abs=0.05)


def test_calibrated_constant_is_self_consistent():
    kind = ScaleKind(ScaleTag.IQR)
    c = calibrate_constant(kind, 2000, 100, seed=3)
    rng = np.random.default_rng(99)
    fresh = [c * scale_estimate(rng.standard_normal(2000), kind) / CONSISTENCY.iqr for _ in range(50)]
    assert np.mean(fresh) == pytest.approx(1.0, abs=0.02)


def test_calibrate_is_deterministic_and_validates():
    kind = ScaleKind(ScaleTag.PN)
    assert calibrate_constant(kind, 1000, 100, seed=4) == calibrate_constant(kind, 1000, 100, seed=4)
    with pytest.raises(InvalidInput):
        calibrate_constant(kind, 100, 100, seed=4)
