"""Tests for the three model families, pooling, and prediction.

The maximum-likelihood oracle is the score equation itself: at a reported
optimum the gradient of the log-likelihood must vanish to tight tolerance.
The lasso oracle is its KKT system.  Coefficient-recovery checks use large
simulated samples with known generating models.
"""

import numpy as np
import pytest
from scipy.special import expit, logit

from misssize import (
    FittedModel,
    fit_backward_aic,
    fit_lasso_cv,
    fit_logistic_mle,
    pool_models,
    predict,
    predict_averaged,
)
from misssize.errors import ConfigError, DegenerateDataError, FitError
from misssize.modeling import _lasso_kkt, _lasso_path


def _sim(n, beta, beta0, seed, rho=0.0):
    rng = np.random.default_rng(seed)
    p = len(beta)
    if rho:
        cov = np.full((p, p), rho) + (1 - rho) * np.eye(p)
        X = rng.multivariate_normal(np.zeros(p), cov, size=n)
    else:
        X = rng.normal(size=(n, p))
    probs = expit(beta0 + X @ np.asarray(beta))
    y = (rng.random(n) < probs).astype(float)
    return X, y


_score_seeds = list(range(20))


@pytest.mark.parametrize("seed", _score_seeds)
def test_mle_score_vanishes_at_optimum(seed):
    X, y = _sim(500, [0.8, -0.5, 0.3, 0.0], -0.4, seed)
    m = fit_logistic_mle(X, y)
    assert m.converged
    A = np.column_stack([np.ones(len(y)), X])
    p_hat = expit(m.intercept + X @ m.coef)
    assert np.abs(A.T @ (y - p_hat)).max() <= 1e-6
    assert m.cov is not None
    assert m.cov.shape == (5, 5)


def test_mle_recovers_generating_coefficients():
    beta = [0.5, 0.2, 0.3, 0.1, 0.5]
    X, y = _sim(200_000, beta, -1.2, seed=77)
    m = fit_logistic_mle(X, y)
    assert np.abs(m.coef - beta).max() < 0.05
    assert abs(m.intercept - (-1.2)) < 0.05


def test_mle_null_signal_yields_marginal_intercept():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(5000, 2))
    y = (rng.random(5000) < 0.3).astype(float)
    m = fit_logistic_mle(X, y)
    assert np.abs(m.coef).max() < 0.1
    assert abs(m.intercept - logit(y.mean())) < 0.1


def test_separation_flagged_not_converged():
    x = np.linspace(-2, 2, 80)[:, None]
    y = (x[:, 0] > 0).astype(float)
    m = fit_logistic_mle(x, y)
    assert m.separation
    assert not m.converged
    assert m.cov is None


def test_degenerate_inputs_raise():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 2))
    with pytest.raises(DegenerateDataError):
        fit_logistic_mle(X, np.ones(50))
    with pytest.raises(FitError):
        fit_logistic_mle(rng.normal(size=(4, 5)), np.array([0, 1, 0, 1.0]))
    # duplicated column: singular information matrix
    Xd = np.column_stack([X[:, 0], X[:, 0]])
    y = (rng.random(50) < 0.5).astype(float)
    with pytest.raises(FitError):
        fit_logistic_mle(Xd, y)


def test_backward_aic_keeps_signal_drops_most_noise():
    beta = [1.0, 0.8, 0.0, 0.0, 0.0, 0.0]
    X, y = _sim(2000, beta, -0.5, seed=15)
    m = fit_backward_aic(X, y)
    assert m.selected[0] and m.selected[1]
    assert m.selected[2:].sum() <= 2
    # dropped variables carry exactly zero coefficients
    assert (m.coef[~m.selected] == 0).all()
    assert m.meta["aic"] == pytest.approx(m.deviance + 2 * (m.selected.sum() + 1))


def test_backward_aic_full_retention_when_all_matter():
    beta = [1.0, -1.0, 0.8]
    X, y = _sim(4000, beta, 0.0, seed=25)
    m = fit_backward_aic(X, y)
    assert m.selected.all()
    full = fit_logistic_mle(X, y)
    assert np.allclose(m.coef, full.coef, atol=1e-8)


_kkt_seeds = list(range(100, 120))


@pytest.mark.parametrize("seed", _kkt_seeds)
def test_lasso_kkt_conditions_hold(seed):
    X, y = _sim(400, [0.9, -0.6, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0], -0.3,
                seed, rho=0.3)
    m = fit_lasso_cv(X, y, rng=np.random.default_rng(seed))
    mu, sd = X.mean(axis=0), X.std(axis=0)
    Xs = (X - mu) / np.where(sd > 0, sd, 1.0)
    viol = _lasso_kkt(Xs, y, m.meta["b0_std"], m.meta["beta_std"], m.lam)
    assert viol <= 1e-6


def test_lasso_lambda_max_gives_empty_model():
    X, y = _sim(300, [0.7, 0.4, 0.0], -0.2, seed=41)
    mu, sd = X.mean(axis=0), X.std(axis=0)
    Xs = (X - mu) / sd
    ybar = y.mean()
    lam_max = np.abs(Xs.T @ (y - ybar)).max() / len(y)
    _, betas, _ = _lasso_path(Xs, y, np.array([lam_max * 1.0001]))
    assert (betas[0] == 0).all()


def test_lasso_weak_penalty_approaches_mle():
    X, y = _sim(1500, [0.8, -0.5, 0.3], -0.4, seed=52)
    mu, sd = X.mean(axis=0), X.std(axis=0)
    Xs = (X - mu) / sd
    mle = fit_logistic_mle(Xs, y)
    lam_max = np.abs(Xs.T @ (y - y.mean())).max() / len(y)
    b0s, betas, ok = _lasso_path(Xs, y, np.geomspace(lam_max, 1e-7 * lam_max, 40))
    assert ok[-1]
    assert np.abs(betas[-1] - mle.coef).max() < 1e-3
    assert abs(b0s[-1] - mle.intercept) < 1e-3


def test_lasso_cv_flat_region_prefers_stronger_penalty():
    # outcome independent of X: every lambda in the all-zero prefix gives an
    # identical intercept-only fit, and the tie must resolve to the largest
    rng = np.random.default_rng(1)
    X = rng.normal(size=(150, 6))
    y = (rng.random(150) < 0.4).astype(float)
    m = fit_lasso_cv(X, y, rng=np.random.default_rng(1001))
    assert (m.coef == 0).all()
    assert m.lam == m.meta["lambda_max"]


def test_lasso_deterministic_under_seed():
    X, y = _sim(350, [0.6, 0.0, -0.4, 0.0], 0.1, seed=71)
    m1 = fit_lasso_cv(X, y, rng=np.random.default_rng(8))
    m2 = fit_lasso_cv(X, y, rng=np.random.default_rng(8))
    assert m1.lam == m2.lam
    assert np.array_equal(m1.coef, m2.coef)


def test_predict_clips_extreme_probabilities():
    m = FittedModel(family="mle", intercept=500.0, coef=np.array([1.0]),
                    selected=np.array([True]), converged=True, iterations=1,
                    deviance=0.0)
    hi = predict(m, np.array([[100.0]]))
    lo = predict(m, np.array([[-2000.0]]))
    assert hi[0] == 1.0 - 1e-10
    assert lo[0] == 1e-10


def test_predict_validates_columns():
    m = FittedModel(family="mle", intercept=0.0, coef=np.array([1.0, 2.0]),
                    selected=np.ones(2, bool), converged=True, iterations=1,
                    deviance=0.0)
    with pytest.raises(ConfigError):
        predict(m, np.zeros((5, 3)))


def _toy_model(intercept, coef, family="mle"):
    coef = np.asarray(coef, dtype=float)
    return FittedModel(family=family, intercept=intercept, coef=coef,
                       selected=coef != 0, converged=True, iterations=3,
                       deviance=1.0)


def test_pooling_averages_coefficients():
    a = _toy_model(-1.0, [0.2, 0.4])
    b = _toy_model(-0.5, [0.6, 0.0])
    pooled = pool_models([a, b])
    assert pooled.intercept == pytest.approx(-0.75)
    assert np.allclose(pooled.coef, [0.4, 0.2])
    assert pooled.meta["pooled_m"] == 2
    assert pool_models([a]) is a


def test_pooling_rejects_mixed_families():
    a = _toy_model(0.0, [0.1])
    b = _toy_model(0.0, [0.1], family="lasso")
    with pytest.raises(ConfigError):
        pool_models([a, b])
    with pytest.raises(ConfigError):
        pool_models([])


def test_aic_pooling_votes_then_refits():
    beta = [1.2, 0.9, 0.0]
    models, xs, ys = [], [], []
    for seed in (1, 2, 3):
        X, y = _sim(1500, beta, -0.3, seed=seed)
        models.append(fit_backward_aic(X, y))
        xs.append(X)
        ys.append(y)
    with pytest.raises(ConfigError):
        pool_models(models)  # needs the data for refits
    pooled = pool_models(models, xs=xs, ys=ys)
    votes = np.mean([m.selected for m in models], axis=0)
    assert np.array_equal(pooled.selected, votes > 0.5)
    assert (pooled.coef[~pooled.selected] == 0).all()
    assert pooled.selected[0] and pooled.selected[1]


def test_predict_averaged_is_mean_of_member_predictions():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 2))
    a = _toy_model(-0.2, [0.5, -0.3])
    b = _toy_model(0.1, [0.0, 0.8])
    avg = predict_averaged([a, b], X)
    assert np.allclose(avg, (predict(a, X) + predict(b, X)) / 2)
    per = predict_averaged([a, b], [X, X])
    assert np.array_equal(avg, per)
    with pytest.raises(ConfigError):
        predict_averaged([a, b], [X])
