"""Evaluation metrics for probability predictions on a binary outcome:
calibration (slope, intercept, O:E), discrimination (C-statistic), and
decision-analytic curves (net benefit, loss vs a reference model).

Everything here is deterministic and RNG-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit
from scipy.stats import rankdata

from .errors import ConfigError, DegenerateDataError

PROB_CLIP = 1e-10

DEFAULT_THRESHOLDS = np.arange(1, 100) / 100.0


@dataclass
class CalibrationResult:
    slope: float
    intercept: float
    oe_ratio: float
    n_eval: int


@dataclass
class NetBenefitCurve:
    thresholds: np.ndarray
    nb: np.ndarray
    nb_treat_all: np.ndarray
    nb_treat_none: np.ndarray


@dataclass
class LossCurve:
    thresholds: np.ndarray
    loss: np.ndarray


def _check_binary(y: np.ndarray):
    if y.min() == y.max():
        raise DegenerateDataError("need both outcome classes")


def _offset_intercept(y: np.ndarray, lp: np.ndarray) -> float:
    """MLE intercept of y ~ offset(lp): one-parameter Newton."""
    a = 0.0
    for _ in range(50):
        p = expit(a + lp)
        step = float((y - p).sum() / max((p * (1 - p)).sum(), 1e-300))
        a += step
        if abs(step) < 1e-12:
            break
    return a


def _slope_fit(y: np.ndarray, lp: np.ndarray):
    """Two-parameter logistic MLE of y on the logit predictions."""
    beta = np.zeros(2)
    A = np.column_stack([np.ones(y.size), lp])

    def dev(b):
        p = np.clip(expit(A @ b), PROB_CLIP, 1 - PROB_CLIP)
        return -2.0 * float(y @ np.log(p) + (1 - y) @ np.log1p(-p))

    d = dev(beta)
    for _ in range(60):
        p = expit(A @ beta)
        w = p * (1 - p)
        score = A.T @ (y - p)
        H = (A * w[:, None]).T @ A
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            raise DegenerateDataError("calibration slope fit is singular")
        new = beta + step
        nd = dev(new)
        halvings = 0
        while nd > d + 1e-12 and halvings < 30:
            step *= 0.5
            new = beta + step
            nd = dev(new)
            halvings += 1
        beta, d = new, nd
        if np.max(np.abs(step)) < 1e-12:
            break
    return float(beta[1]), float(beta[0])


def calibration(y: np.ndarray, probs: np.ndarray) -> CalibrationResult:
    y = np.asarray(y, dtype=float)
    probs = np.clip(np.asarray(probs, dtype=float), PROB_CLIP, 1 - PROB_CLIP)
    _check_binary(y)
    lp = logit(probs)
    oe = float(y.mean() / probs.mean())
    intercept = _offset_intercept(y, lp)
    if lp.max() - lp.min() < 1e-12:
        err = DegenerateDataError("constant predictions; slope undefined")
        err.partial = CalibrationResult(slope=float("nan"), intercept=intercept,
                                        oe_ratio=oe, n_eval=y.size)
        raise err
    slope, _ = _slope_fit(y, lp)
    return CalibrationResult(slope=slope, intercept=intercept, oe_ratio=oe,
                             n_eval=y.size)


def c_statistic(y: np.ndarray, probs: np.ndarray) -> float:
    y = np.asarray(y)
    probs = np.asarray(probs, dtype=float)
    _check_binary(y)
    events = y == y.max()
    n1 = int(events.sum())
    n0 = y.size - n1
    ranks = rankdata(probs)  # average rank on ties -> each tied pair counts 0.5
    u = ranks[events].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def _check_thresholds(t: np.ndarray):
    if t.size == 0 or t.min() <= 0.0 or t.max() >= 1.0:
        raise ConfigError("thresholds must lie strictly inside (0, 1)")


def net_benefit_curve(y: np.ndarray, probs: np.ndarray,
                      thresholds: np.ndarray = DEFAULT_THRESHOLDS) -> NetBenefitCurve:
    y = np.asarray(y)
    probs = np.asarray(probs, dtype=float)
    t = np.asarray(thresholds, dtype=float)
    _check_thresholds(t)
    n = y.size
    ev = np.sort(probs[y == 1])
    ne = np.sort(probs[y == 0])
    # classify positive iff prob >= t
    tp = ev.size - np.searchsorted(ev, t, side="left")
    fp = ne.size - np.searchsorted(ne, t, side="left")
    odds = t / (1.0 - t)
    nb = tp / n - (fp / n) * odds
    phi = float(np.mean(y))
    nb_all = phi - (1.0 - phi) * odds
    return NetBenefitCurve(thresholds=t, nb=nb, nb_treat_all=nb_all,
                           nb_treat_none=np.zeros_like(t))


def decision_loss_curve(y: np.ndarray, probs_ref: np.ndarray,
                        probs_model: np.ndarray,
                        thresholds: np.ndarray = DEFAULT_THRESHOLDS) -> LossCurve:
    ref = net_benefit_curve(y, probs_ref, thresholds)
    mod = net_benefit_curve(y, probs_model, thresholds)
    return LossCurve(thresholds=ref.thresholds, loss=ref.nb - mod.nb)


def degradation(metric_ref: float, metric_model: float,
                kind_ref: str = "", kind_model: str = "") -> float:
    if kind_ref != kind_model:
        raise ConfigError(f"metric kinds differ: {kind_ref!r} vs {kind_model!r}")
    return metric_ref - metric_model
