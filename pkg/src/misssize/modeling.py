"""Candidate model families: plain MLE logistic regression, backwards-AIC
selection, and cross-validated LASSO, plus pooling across imputations.

All fits work on a numeric design matrix and a binary outcome vector and
return the same FittedModel record so downstream evaluation code never
branches on family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr
from scipy.special import expit

from .errors import ConfigError, DegenerateDataError, FitError

MLE = "mle"
AIC_BACKWARD = "aic-backward"
LASSO = "lasso"
FAMILIES = (MLE, AIC_BACKWARD, LASSO)

PROB_CLIP = 1e-10
SEPARATION_ABS_COEF = 20.0


@dataclass
class FittedModel:
    family: str
    intercept: float
    coef: np.ndarray
    selected: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    lam: float | None = None
    separation: bool = False
    cov: np.ndarray | None = None  # inverse observed information (mle/aic)
    meta: dict = field(default_factory=dict)


def _clip(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)


def _deviance(y: np.ndarray, p: np.ndarray) -> float:
    p = _clip(p)
    return -2.0 * float(y @ np.log(p) + (1.0 - y) @ np.log1p(-p))


def _check_outcome(y: np.ndarray):
    if y.min() == y.max():
        raise DegenerateDataError("outcome has a single class; no model is fittable")


def _rank_deficient_columns(A: np.ndarray) -> list:
    _, R, piv = qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    thr = d.max() * max(A.shape) * np.finfo(float).eps if d.size else 0.0
    rank = int((d > thr).sum())
    return sorted(int(c) for c in piv[rank:])


def _irls(A: np.ndarray, y: np.ndarray, max_iter: int = 50,
          dev_tol: float = 1e-8, score_tol: float = 1e-8):
    """Newton-Raphson with step halving on the deviance.

    Returns (beta, deviance, iterations, converged, cov).  Convergence
    demands a small raw score vector, not just a deviance plateau, so the
    gradient check downstream is meaningful.
    """
    n, k = A.shape
    beta = np.zeros(k)
    p = np.full(n, 0.5)
    dev = _deviance(y, p)
    it = 0
    cov = None
    for it in range(1, max_iter + 1):
        w = p * (1.0 - p)
        score = A.T @ (y - p)
        H = (A * w[:, None]).T @ A
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            bad = _rank_deficient_columns(A * np.sqrt(w)[:, None])
            raise FitError(
                f"singular weighted design; offending design columns {bad} "
                "(0 is the intercept)"
            )
        step = np.linalg.solve(L.T, np.linalg.solve(L, score))
        new_beta = beta + step
        new_p = expit(A @ new_beta)
        new_dev = _deviance(y, new_p)
        halvings = 0
        while new_dev > dev + 1e-12 and halvings < 30:
            step *= 0.5
            new_beta = beta + step
            new_p = expit(A @ new_beta)
            new_dev = _deviance(y, new_p)
            halvings += 1
        delta_dev = dev - new_dev
        beta, p, dev = new_beta, new_p, new_dev
        if np.max(np.abs(A.T @ (y - p))) <= score_tol:
            break
        if delta_dev < dev_tol and halvings >= 30:
            break  # stalled (typically separation)
    max_score = float(np.max(np.abs(A.T @ (y - p))))
    converged = max_score <= 1e-6
    if converged:
        w = p * (1.0 - p)
        H = (A * w[:, None]).T @ A
        cov = np.linalg.inv(H)
    return beta, dev, it, converged, cov


def fit_logistic_mle(X: np.ndarray, y: np.ndarray) -> FittedModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p + 1:
        raise FitError(f"need n > p + 1; got n={n}, p={p}")
    _check_outcome(y)
    A = np.column_stack([np.ones(n), X])
    beta, dev, it, converged, cov = _irls(A, y)
    separation = bool(np.any(np.abs(beta) > SEPARATION_ABS_COEF))
    if separation:
        converged = False
        cov = None  # inverse information is meaningless on a separated fit
    return FittedModel(family=MLE, intercept=float(beta[0]), coef=beta[1:],
                       selected=np.ones(p, dtype=bool), converged=converged,
                       iterations=it, deviance=dev, separation=separation,
                       cov=cov)


def fit_backward_aic(X: np.ndarray, y: np.ndarray) -> FittedModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p + 1:
        raise FitError(f"need n > p + 1; got n={n}, p={p}")
    _check_outcome(y)

    def fit_subset(cols):
        A = np.column_stack([np.ones(n)] + [X[:, j] for j in cols])
        beta, dev, it, conv, cov = _irls(A, y)
        aic = dev + 2.0 * (len(cols) + 1)
        return beta, dev, it, conv, cov, aic

    active = list(range(p))
    beta, dev, it, conv, cov, aic = fit_subset(active)
    while active:
        best_j, best_fit, best_aic = None, None, aic
        for j in active:
            cols = [c for c in active if c != j]
            cand = fit_subset(cols)
            if cand[5] < best_aic:
                best_j, best_fit, best_aic = j, cand, cand[5]
        if best_j is None:
            break
        active.remove(best_j)
        beta, dev, it, conv, cov, aic = best_fit

    coef = np.zeros(p)
    selected = np.zeros(p, dtype=bool)
    for slot, j in enumerate(active):
        coef[j] = beta[slot + 1]
        selected[j] = True
    separation = bool(np.abs(beta).max() > SEPARATION_ABS_COEF)
    return FittedModel(family=AIC_BACKWARD, intercept=float(beta[0]), coef=coef,
                       selected=selected, converged=conv and not separation,
                       iterations=it, deviance=dev, separation=separation,
                       cov=cov, meta={"aic": aic})


def _soft(v: float, t: float) -> float:
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


def _lasso_kkt(Xs, y, b0, beta, lam) -> float:
    p_hat = expit(b0 + Xs @ beta)
    g = Xs.T @ (y - p_hat) / y.size
    nz = beta != 0
    r = np.abs(np.maximum(np.abs(g[~nz]) - lam, 0.0))
    r_nz = np.abs(g[nz] - lam * np.sign(beta[nz]))
    worst = 0.0
    if r.size:
        worst = max(worst, float(r.max()))
    if r_nz.size:
        worst = max(worst, float(r_nz.max()))
    return worst


def _lasso_path(Xs: np.ndarray, y: np.ndarray, lams: np.ndarray,
                kkt_tol: float = 1e-7, max_outer: int = 100):
    """Penalized logistic fits along a descending lambda path.

    Proximal Newton: at each outer step the weighted least-squares
    subproblem is solved by coordinate descent on its Gram form, then the
    true KKT residual decides termination.  Warm starts across lambdas.
    """
    n, p = Xs.shape
    b0 = float(np.log(y.mean() / (1.0 - y.mean())))
    beta = np.zeros(p)
    out_b0 = np.empty(lams.size)
    out_beta = np.empty((lams.size, p))
    ok = np.ones(lams.size, dtype=bool)
    for li, lam in enumerate(lams):
        for _ in range(max_outer):
            eta = b0 + Xs @ beta
            pr = expit(eta)
            w = np.clip(pr * (1.0 - pr), 1e-5, None)
            z = eta + (y - pr) / w
            sw = float(w.sum())
            swz = float(w @ z)
            bvec = Xs.T @ w
            cvec = Xs.T @ (w * z)
            G = (Xs * w[:, None]).T @ Xs
            Gb = G @ beta
            for _sweep in range(200):
                delta = 0.0
                b0_new = (swz - float(bvec @ beta)) / sw
                delta = max(delta, abs(b0_new - b0))
                b0 = b0_new
                for j in range(p):
                    old = beta[j]
                    num = (cvec[j] - b0 * bvec[j] - Gb[j] + G[j, j] * old) / n
                    new = _soft(num, lam) / (G[j, j] / n)
                    if new != old:
                        Gb += G[:, j] * (new - old)
                        beta[j] = new
                        delta = max(delta, abs(new - old))
                if delta < 1e-10:
                    break
            if _lasso_kkt(Xs, y, b0, beta, lam) <= kkt_tol:
                break
        else:
            ok[li] = False
        out_b0[li] = b0
        out_beta[li] = beta
    return out_b0, out_beta, ok


def _stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator):
    fold_id = np.empty(y.size, dtype=np.int64)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        fold_id[idx] = np.arange(idx.size) % folds
    return fold_id


def fit_lasso_cv(X: np.ndarray, y: np.ndarray, folds: int = 10,
                 rng: np.random.Generator | None = None,
                 n_lambdas: int = 100) -> FittedModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    _check_outcome(y)
    if rng is None:
        rng = np.random.default_rng(0)

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - mu) / sd

    ybar = y.mean()
    lam_max = float(np.abs(Xs.T @ (y - ybar)).max()) / n
    if lam_max <= 0:
        raise FitError("all centered predictors are orthogonal to the outcome")
    lams = np.geomspace(lam_max, 1e-4 * lam_max, n_lambdas)

    fold_id = _stratified_folds(y, folds, rng)
    cv_dev = np.zeros(lams.size)
    for f in range(folds):
        tr = fold_id != f
        te = ~tr
        b0s, betas, _ = _lasso_path(Xs[tr], y[tr], lams)
        probs = _clip(expit(b0s[None, :] + Xs[te] @ betas.T))
        yt = y[te][:, None]
        cv_dev += -2.0 * (yt * np.log(probs) + (1 - yt) * np.log1p(-probs)).sum(axis=0)

    best = int(np.argmin(cv_dev))  # ties resolve to the larger lambda
    lam = float(lams[best])
    b0s, betas, ok = _lasso_path(Xs, y, lams[:best + 1])
    b0_std, beta_std = float(b0s[-1]), betas[-1]

    coef = beta_std / sd
    intercept = b0_std - float((beta_std * mu / sd).sum())
    probs = _clip(expit(b0_std + Xs @ beta_std))
    dev = _deviance(y, probs)
    separation = bool(max(abs(intercept), np.abs(coef).max() if p else 0.0)
                      > SEPARATION_ABS_COEF)
    return FittedModel(family=LASSO, intercept=intercept, coef=coef,
                       selected=coef != 0, converged=bool(ok[-1]) and not separation,
                       iterations=lams.size, deviance=dev, lam=lam,
                       separation=separation,
                       meta={"lambda_max": lam_max, "cv_deviance": float(cv_dev[best]),
                             "beta_std": beta_std, "b0_std": b0_std})


def pool_models(models: list, xs: list | None = None,
                ys: list | None = None) -> FittedModel:
    """Combine per-completion fits into one deployable model.

    Coefficients are averaged element-wise (the Rubin's-rules point
    estimate).  Backwards-AIC first takes a majority vote on the selected
    set, refits each completion with that fixed set, then averages; this
    needs the per-completion data.
    """
    if not models:
        raise ConfigError("nothing to pool")
    fam = models[0].family
    p = models[0].coef.size
    if any(m.family != fam or m.coef.size != p for m in models):
        raise ConfigError("pooling requires a single family and column layout")
    if len(models) == 1:
        return models[0]

    if fam == AIC_BACKWARD:
        if xs is None or ys is None:
            raise ConfigError("aic-backward pooling refits per completion; "
                              "pass xs and ys")
        votes = np.mean([m.selected for m in models], axis=0)
        sel = votes > 0.5
        cols = np.flatnonzero(sel)
        refits = []
        for Xk, yk in zip(xs, ys):
            sub = fit_logistic_mle(Xk[:, cols], yk) if cols.size else \
                fit_logistic_mle(np.zeros((len(yk), 0)), yk)
            refits.append(sub)
        coef = np.zeros(p)
        coef[cols] = np.mean([m.coef for m in refits], axis=0)
        return FittedModel(
            family=fam, intercept=float(np.mean([m.intercept for m in refits])),
            coef=coef, selected=sel,
            converged=all(m.converged for m in refits),
            iterations=max(m.iterations for m in refits),
            deviance=float(np.mean([m.deviance for m in refits])),
            separation=any(m.separation for m in refits),
            meta={"pooled_m": len(models), "votes": votes})

    coef = np.mean([m.coef for m in models], axis=0)
    lam = None
    if fam == LASSO:
        lam = float(np.mean([m.lam for m in models]))
    return FittedModel(
        family=fam, intercept=float(np.mean([m.intercept for m in models])),
        coef=coef, selected=coef != 0,
        converged=all(m.converged for m in models),
        iterations=max(m.iterations for m in models),
        deviance=float(np.mean([m.deviance for m in models])),
        lam=lam, separation=any(m.separation for m in models),
        meta={"pooled_m": len(models)})


def predict(model: FittedModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.coef.size:
        raise ConfigError(
            f"design has {X.shape[1] if X.ndim == 2 else 'wrong'} columns; "
            f"model expects {model.coef.size}")
    return _clip(expit(model.intercept + X @ model.coef))


def predict_averaged(models: list, Xs) -> np.ndarray:
    """Prediction-averaging combination: mean per-completion probability.

    ``Xs`` may be one matrix shared by every model or one matrix per model.
    """
    if isinstance(Xs, np.ndarray):
        Xs = [Xs] * len(models)
    if len(Xs) != len(models):
        raise ConfigError("need one design per model")
    return np.mean([predict(m, X) for m, X in zip(models, Xs)], axis=0)
