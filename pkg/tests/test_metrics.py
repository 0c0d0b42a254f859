"""Tests for discrimination, calibration, and decision-analytic metrics.

The concordance statistic is checked against an explicit all-pairs count,
net benefit against a direct per-threshold confusion-matrix loop, and the
calibration slope against samples generated with a known logit distortion.
"""

import numpy as np
import pytest
from scipy.special import expit, logit

from misssize import (
    c_statistic,
    calibration,
    decision_loss_curve,
    degradation,
    net_benefit_curve,
)
from misssize.errors import ConfigError, DegenerateDataError
from misssize.metrics import DEFAULT_THRESHOLDS


def _pairs_cstat(y, probs):
    """Quadratic reference: mean over event/non-event pairs, ties count half."""
    ev = probs[y == 1]
    ne = probs[y == 0]
    wins = (ev[:, None] > ne[None, :]).sum()
    ties = (ev[:, None] == ne[None, :]).sum()
    return (wins + 0.5 * ties) / (ev.size * ne.size)


def _loop_nb(y, probs, thresholds):
    n = y.size
    out = np.empty(thresholds.size)
    for i, t in enumerate(thresholds):
        pos = probs >= t
        tp = int((pos & (y == 1)).sum())
        fp = int((pos & (y == 0)).sum())
        out[i] = tp / n - (fp / n) * (t / (1.0 - t))
    return out


_oracle_seeds = list(range(50))


@pytest.mark.parametrize("seed", _oracle_seeds)
def test_cstat_matches_all_pairs_count(seed):
    rng = np.random.default_rng(seed)
    n = 200
    probs = rng.random(n)
    if seed % 2:  # heavy ties on odd seeds
        probs = np.round(probs, 1)
    y = (rng.random(n) < probs).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    assert c_statistic(y, probs) == pytest.approx(_pairs_cstat(y, probs),
                                                  abs=1e-12)


@pytest.mark.parametrize("factor,expected", [(0.5, 2.0), (2.0, 0.5)])
def test_calibration_slope_inverts_logit_scaling(factor, expected):
    # predictions with logits shrunk by `factor` need slope 1/factor
    rng = np.random.default_rng(31)
    n = 200_000
    lp = rng.normal(-1.0, 1.2, size=n)
    y = (rng.random(n) < expit(lp)).astype(float)
    res = calibration(y, expit(factor * lp))
    assert res.slope == pytest.approx(expected, abs=0.03)
    assert res.n_eval == n


def test_calibration_of_true_probabilities_is_ideal():
    rng = np.random.default_rng(8)
    n = 200_000
    probs = expit(rng.normal(-0.8, 1.0, size=n))
    y = (rng.random(n) < probs).astype(float)
    res = calibration(y, probs)
    assert res.slope == pytest.approx(1.0, abs=0.02)
    assert res.intercept == pytest.approx(0.0, abs=0.02)
    assert res.oe_ratio == pytest.approx(1.0, abs=0.02)


def test_oe_ratio_is_exact_arithmetic():
    y = np.array([1, 0, 1, 1, 0, 0, 1, 0], dtype=float)
    probs = np.array([0.4, 0.2, 0.1, 0.5, 0.3, 0.6, 0.15, 0.25])
    res = calibration(y, probs)
    assert res.oe_ratio == pytest.approx(y.mean() / probs.mean(), abs=1e-12)


def test_calibration_intercept_tracks_logit_shift():
    rng = np.random.default_rng(13)
    n = 150_000
    lp = rng.normal(-1.0, 1.0, size=n)
    y = (rng.random(n) < expit(lp)).astype(float)
    res = calibration(y, expit(lp - 0.7))  # predictions too low by 0.7
    assert res.intercept == pytest.approx(0.7, abs=0.03)


def test_constant_predictions_raise_with_partial_result():
    y = np.array([0, 1, 0, 1, 1, 0], dtype=float)
    probs = np.full(6, 0.5)
    with pytest.raises(DegenerateDataError) as exc:
        calibration(y, probs)
    partial = exc.value.partial
    assert np.isnan(partial.slope)
    assert partial.oe_ratio == pytest.approx(1.0)
    assert np.isfinite(partial.intercept)


def test_single_class_outcomes_rejected():
    probs = np.linspace(0.1, 0.9, 10)
    with pytest.raises(DegenerateDataError):
        calibration(np.ones(10), probs)
    with pytest.raises(DegenerateDataError):
        c_statistic(np.zeros(10), probs)
    # net benefit stays defined: its terms are plain classification counts
    curve = net_benefit_curve(np.ones(10, dtype=int), probs, np.array([0.5]))
    assert np.isfinite(curve.nb).all()


_nb_seeds = list(range(200, 230))


@pytest.mark.parametrize("seed", _nb_seeds)
def test_net_benefit_matches_confusion_matrix_loop(seed):
    rng = np.random.default_rng(seed)
    n = 300
    probs = np.round(rng.random(n), 2)  # many values sit exactly on thresholds
    y = (rng.random(n) < 0.3).astype(int)
    if y.min() == y.max():
        y[:2] = [0, 1]
    curve = net_benefit_curve(y, probs)
    assert np.allclose(curve.nb, _loop_nb(y, probs, DEFAULT_THRESHOLDS),
                       atol=1e-15)


def test_net_benefit_tie_at_threshold_counts_positive():
    y = np.array([1, 0, 1, 0])
    probs = np.array([0.30, 0.30, 0.80, 0.10])
    curve = net_benefit_curve(y, probs, np.array([0.30]))
    # both 0.30 rows classified positive: tp=2, fp=1
    want = 2 / 4 - (1 / 4) * (0.3 / 0.7)
    assert curve.nb[0] == pytest.approx(want, abs=1e-15)


def test_treat_all_crosses_zero_at_prevalence():
    y = np.array([1, 1, 0, 0, 0, 0, 0, 0, 0, 0])  # prevalence 0.2
    probs = np.linspace(0.05, 0.95, 10)
    curve = net_benefit_curve(y, probs, np.array([0.1, 0.2, 0.5]))
    assert abs(curve.nb_treat_all[1]) < 1e-15
    assert curve.nb_treat_all[0] > 0 > curve.nb_treat_all[2]
    assert (curve.nb_treat_none == 0).all()


def test_perfect_predictions_attain_ceiling():
    y = np.array([1, 1, 0, 0, 0])
    curve = net_benefit_curve(y, y.astype(float) * 0.98 + 0.01,
                              np.array([0.5]))
    assert curve.nb[0] == pytest.approx(y.mean(), abs=1e-15)


def test_loss_curve_is_reference_minus_model():
    rng = np.random.default_rng(77)
    n = 500
    probs = expit(rng.normal(-1, 1, n))
    y = (rng.random(n) < probs).astype(int)
    same = decision_loss_curve(y, probs, probs)
    assert (same.loss == 0).all()
    noisy = expit(logit(probs) + rng.normal(0, 2, n))
    worse = decision_loss_curve(y, probs, noisy)
    ref = net_benefit_curve(y, probs)
    mod = net_benefit_curve(y, noisy)
    assert np.allclose(worse.loss, ref.nb - mod.nb, atol=1e-15)
    assert worse.loss.mean() > 0  # distorted model loses net benefit overall


def test_true_probabilities_maximize_net_benefit():
    # no perturbed model can beat the generating probabilities at a
    # clinically relevant threshold (up to Monte-Carlo noise)
    rng = np.random.default_rng(5)
    n = 500_000
    lp = rng.normal(-1.4, 1.0, size=n)
    probs = expit(lp)
    y = (rng.random(n) < probs).astype(int)
    t = np.array([0.1, 0.2, 0.3])
    nb_true = net_benefit_curve(y, probs, t).nb
    for seed in range(5):
        prng = np.random.default_rng(seed)
        slope = prng.uniform(0.5, 1.6)
        shift = prng.normal(0, 0.5)
        nb_pert = net_benefit_curve(y, expit(slope * lp + shift), t).nb
        assert (nb_true >= nb_pert - 0.002).all()


def test_threshold_validation():
    y = np.array([0, 1, 0, 1])
    p = np.array([0.2, 0.8, 0.4, 0.6])
    for bad in (np.array([0.0, 0.5]), np.array([0.5, 1.0]), np.array([])):
        with pytest.raises(ConfigError):
            net_benefit_curve(y, p, bad)


def test_degradation_arithmetic_and_kind_guard():
    assert degradation(0.80, 0.73) == pytest.approx(0.07)
    assert degradation(0.70, 0.75) == pytest.approx(-0.05)
    with pytest.raises(ConfigError):
        degradation(0.8, 0.7, kind_ref="cstat", kind_model="slope")
