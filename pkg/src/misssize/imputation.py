"""Missing-data handling: complete-case filtering and four imputers.

Every imputer is fit once on development data and reapplied unchanged to
any later dataset: apply never re-estimates anything.  The chained
methods condition each incomplete variable on all the others; mice
additionally conditions on the outcome at development time and carries
outcome-free application models for outcome-less deployment data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datagen import DataSet
from .errors import ConfigError, DegenerateDataError
from .forest import Forest, fit_bagged_forest, predict_forest

COMPLETE_CASE = "complete-case"
MEAN = "mean"
SINGLE_REGRESSION = "single-regression"
RANDOM_FOREST = "random-forest"
MICE = "mice"

METHODS = (COMPLETE_CASE, MEAN, SINGLE_REGRESSION, RANDOM_FOREST, MICE)
IMPUTER_METHODS = (MEAN, SINGLE_REGRESSION, RANDOM_FOREST, MICE)

MICE_M = 20
CYCLES = 5
MAX_FOREST_ITER = 10
RIDGE_FALLBACK = 1e-6


@dataclass
class LinearDraw:
    """One (possibly posterior-drawn) linear model for a single variable."""
    beta: np.ndarray      # [intercept, other predictors ascending, (y)]
    sigma2: float = 0.0   # residual variance; 0 for deterministic methods


@dataclass
class FittedImputer:
    method: str
    n_columns: int
    means: np.ndarray
    modeled_vars: list      # column indices with a fit-time model
    m: int = 1
    cycles: int = CYCLES
    include_outcome: bool = False
    linear: list = field(default_factory=list)    # per imputation: {j: LinearDraw}
    forests: dict = field(default_factory=dict)   # {j: Forest}
    application: list = field(default_factory=list)  # outcome-free {j: LinearDraw}
    warnings: list = field(default_factory=list)


@dataclass
class CompletedData:
    method: str
    datasets: list  # m DataSets, masks all true

    @property
    def m(self) -> int:
        return len(self.datasets)


def complete_case_filter(data: DataSet) -> DataSet:
    keep = data.mask.all(axis=1)
    n_keep = int(keep.sum())
    if n_keep == 0:
        raise DegenerateDataError("no complete rows remain after filtering")
    meta = dict(data.meta)
    meta["retained_fraction"] = n_keep / data.n
    tp = data.true_prob[keep] if data.true_prob is not None else None
    return DataSet(X=data.X[keep], mask=data.mask[keep], y=data.y[keep],
                   true_prob=tp, meta=meta)


def _others(j: int, p: int) -> np.ndarray:
    return np.array([k for k in range(p) if k != j])


def _design(Xc: np.ndarray, rows: np.ndarray, j: int, y=None) -> np.ndarray:
    cols = [np.ones(rows.size), Xc[np.ix_(rows, _others(j, Xc.shape[1]))]]
    W = np.column_stack(cols)
    if y is not None:
        W = np.column_stack([W, y[rows]])
    return W


def _ols(W: np.ndarray, v: np.ndarray, warnings: list, tag: str):
    """Least squares with a ridge fallback on singular normal equations."""
    A = W.T @ W
    b = W.T @ v
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        warnings.append(f"ridge fallback: {tag}")
        A = A + RIDGE_FALLBACK * np.eye(A.shape[0])
        L = np.linalg.cholesky(A)
    beta = np.linalg.solve(L.T, np.linalg.solve(L, b))
    return beta, L


def _norm_draw(W: np.ndarray, v: np.ndarray, rng: np.random.Generator,
               warnings: list, tag: str) -> LinearDraw:
    """Bayesian linear regression draw (the chained-equations `norm` step):
    sigma2 from its scaled inverse chi-square approximation, beta from
    N(beta_hat, sigma2 (W'W)^-1)."""
    beta_hat, L = _ols(W, v, warnings, tag)
    resid = v - W @ beta_hat
    df = max(W.shape[0] - W.shape[1], 1)
    sigma2 = float(resid @ resid) / rng.chisquare(df)
    u = rng.standard_normal(beta_hat.size)
    beta = beta_hat + np.sqrt(sigma2) * np.linalg.solve(L.T, u)
    return LinearDraw(beta=beta, sigma2=sigma2)


def _check_fit_data(data: DataSet):
    n_complete = int(data.mask.all(axis=1).sum())
    if n_complete < 20 and data.n < 50:
        raise DegenerateDataError(
            f"need >= 20 complete rows or >= 50 rows to fit an imputer; "
            f"got {n_complete} complete of {data.n}"
        )


def _observed_means(data: DataSet) -> np.ndarray:
    means = np.empty(data.p)
    for j in range(data.p):
        obs = data.mask[:, j]
        if not obs.any():
            raise DegenerateDataError(f"column {j} has no observed values")
        means[j] = data.X[obs, j].mean()
    return means


def _init_completed(data: DataSet, means: np.ndarray) -> np.ndarray:
    Xc = data.X.copy()
    miss = ~data.mask
    Xc[miss] = np.broadcast_to(means, Xc.shape)[miss]
    return Xc


def fit_imputer(method: str, data: DataSet, rng: np.random.Generator) -> FittedImputer:
    if method == COMPLETE_CASE:
        raise ConfigError("complete-case is a filter, not an imputer; "
                          "use complete_case_filter")
    if method not in IMPUTER_METHODS:
        raise ConfigError(f"unknown imputation method {method!r}")
    _check_fit_data(data)

    means = _observed_means(data)
    modeled = [j for j in range(data.p) if not data.mask[:, j].all()]
    imp = FittedImputer(method=method, n_columns=data.p, means=means,
                        modeled_vars=modeled)
    if method == MICE:
        imp.m = MICE_M
        imp.include_outcome = True

    if method == MEAN or not modeled:
        return imp

    if method == SINGLE_REGRESSION:
        _fit_single_regression(imp, data)
    elif method == RANDOM_FOREST:
        _fit_random_forest(imp, data, rng)
    else:
        _fit_mice(imp, data, rng)
    return imp


def _fit_single_regression(imp: FittedImputer, data: DataSet):
    Xc = _init_completed(data, imp.means)
    models = {}
    for _ in range(imp.cycles):
        models = {}
        for j in imp.modeled_vars:
            obs = np.flatnonzero(data.mask[:, j])
            mis = np.flatnonzero(~data.mask[:, j])
            W = _design(Xc, obs, j)
            beta, _ = _ols(W, data.X[obs, j], imp.warnings, f"single-regression x{j}")
            models[j] = LinearDraw(beta=beta)
            Xc[mis, j] = _design(Xc, mis, j) @ beta
    imp.linear = [models]


def _fit_random_forest(imp: FittedImputer, data: DataSet, rng: np.random.Generator):
    Xc = _init_completed(data, imp.means)
    p = data.p
    prev_delta = np.inf
    best = None
    for _ in range(MAX_FOREST_ITER):
        forests = {}
        delta = 0.0
        for j in imp.modeled_vars:
            obs = np.flatnonzero(data.mask[:, j])
            mis = np.flatnonzero(~data.mask[:, j])
            oth = _others(j, p)
            f = fit_bagged_forest(Xc[np.ix_(obs, oth)], data.X[obs, j], rng)
            new = predict_forest(f, Xc[np.ix_(mis, oth)])
            delta += float(((new - Xc[mis, j]) ** 2).sum())
            Xc[mis, j] = new
            forests[j] = f
        if delta > prev_delta:
            break
        best, prev_delta = forests, delta
    imp.forests = best


def _fit_mice(imp: FittedImputer, data: DataSet, rng: np.random.Generator):
    y = data.y.astype(float)
    for chain_rng in rng.spawn(imp.m):
        Xc = _init_completed(data, imp.means)
        models = {}
        for _ in range(imp.cycles):
            models = {}
            for j in imp.modeled_vars:
                obs = np.flatnonzero(data.mask[:, j])
                mis = np.flatnonzero(~data.mask[:, j])
                W = _design(Xc, obs, j, y=y)
                d = _norm_draw(W, data.X[obs, j], chain_rng, imp.warnings,
                               f"mice x{j}")
                models[j] = d
                pred = _design(Xc, mis, j, y=y) @ d.beta
                Xc[mis, j] = pred + np.sqrt(d.sigma2) * chain_rng.standard_normal(mis.size)
        imp.linear.append(models)
        # outcome-free models refit on this chain's completed data, for
        # deployment settings where y is unavailable at prediction time
        app = {}
        all_rows = np.arange(data.n)
        for j in imp.modeled_vars:
            W = _design(Xc, all_rows, j)
            app[j] = _norm_draw(W, Xc[:, j], chain_rng, imp.warnings,
                                f"mice application x{j}")
        imp.application.append(app)


def _apply_one(imp: FittedImputer, data: DataSet, models: dict,
               use_outcome: bool, rng):
    """One completion pass: chained predictions from fit-time models.

    Returns (completed matrix, columns that fell back to fit-time means).
    """
    Xc = _init_completed(data, imp.means)
    if imp.method == MEAN:
        return Xc, []
    y = data.y.astype(float) if use_outcome else None
    unmodeled = [j for j in range(data.p)
                 if not data.mask[:, j].all() and j not in models]
    stochastic = imp.method == MICE
    for _ in range(imp.cycles):
        for j in imp.modeled_vars:
            mis = np.flatnonzero(~data.mask[:, j])
            if mis.size == 0:
                continue
            if imp.method == RANDOM_FOREST:
                oth = _others(j, data.p)
                Xc[mis, j] = predict_forest(models[j], Xc[np.ix_(mis, oth)])
            else:
                d = models[j]
                pred = _design(Xc, mis, j, y=y) @ d.beta
                if stochastic:
                    pred = pred + np.sqrt(d.sigma2) * rng.standard_normal(mis.size)
                Xc[mis, j] = pred
    return Xc, unmodeled


def apply_imputer(imp: FittedImputer, data: DataSet, use_outcome: bool,
                  rng: np.random.Generator) -> CompletedData:
    if data.p != imp.n_columns:
        raise ConfigError("column layout differs from fit time")
    if imp.method == MICE:
        model_sets = imp.linear if use_outcome else imp.application
        if not model_sets:  # nothing was incomplete at fit time
            model_sets = [{}] * imp.m
        streams = rng.spawn(imp.m)
    elif imp.method == SINGLE_REGRESSION:
        model_sets = imp.linear or [{}]
        streams = [rng]
    elif imp.method == RANDOM_FOREST:
        model_sets = [imp.forests or {}]
        streams = [rng]
    else:
        model_sets = [{}]
        streams = [rng]

    out = []
    for k, (models, st) in enumerate(zip(model_sets, streams)):
        Xc, unmodeled = _apply_one(
            imp, data, models, use_outcome and imp.include_outcome, st)
        meta = dict(data.meta)
        meta["imputation_method"] = imp.method
        meta["imputation_index"] = k
        if unmodeled:
            meta["mean_fallback_columns"] = unmodeled
        out.append(DataSet(X=Xc, mask=np.ones_like(data.mask), y=data.y,
                           true_prob=data.true_prob, meta=meta))
    return CompletedData(method=imp.method, datasets=out)
