"""Multivariate amputation: induce MCAR/MAR/MNAR missingness.

A fully observed dataset is split uniformly at random across missingness
patterns; within each pattern group a standardized weighted sum score
drives a logistic amputation probability whose offset is solved so the
group-level expected proportion of amputed individuals matches the
target.  The targeted proportion is person-level: the fraction of rows
left with at least one missing predictor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .datagen import DataSet
from .errors import ConfigError

MCAR = "MCAR"
MAR = "MAR"
MNAR = "MNAR"

SINGLE_VARIABLE = "single-variable"
ALL_SUBSETS = "all-subsets"

_MAX_ALL_SUBSETS_P = 12


@dataclass
class MissingnessSpec:
    mechanism: str = MAR
    pi_miss: float = 0.0
    pattern_set: str = SINGLE_VARIABLE
    weights: list | None = None  # optional explicit per-pattern weights

    def __post_init__(self):
        if self.mechanism not in (MCAR, MAR, MNAR):
            raise ConfigError(f"unknown missingness mechanism {self.mechanism!r}")
        if not 0.0 <= self.pi_miss < 1.0:
            raise ConfigError("pi_miss must lie in [0, 1)")
        if self.pattern_set not in (SINGLE_VARIABLE, ALL_SUBSETS):
            raise ConfigError(f"unknown pattern set {self.pattern_set!r}")


@dataclass
class AmputationPlan:
    patterns: np.ndarray  # (k, p) bool, True = variable missing in pattern
    weights: np.ndarray   # (k, p) float score weights
    mechanism: str = MAR

    def __post_init__(self):
        self.patterns = np.asarray(self.patterns, dtype=bool)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.patterns.shape != self.weights.shape:
            raise ConfigError("patterns and weights must share a shape")
        if self.patterns.ndim != 2 or self.patterns.shape[0] < 1:
            raise ConfigError("need at least one pattern")
        for k, pat in enumerate(self.patterns):
            if pat.all():
                raise ConfigError(f"pattern {k} misses every variable")
            if not pat.any():
                raise ConfigError(f"pattern {k} misses no variable")

    @property
    def n_patterns(self) -> int:
        return self.patterns.shape[0]


def _all_subset_patterns(p: int) -> np.ndarray:
    codes = np.arange(1, 2 ** p - 1)  # proper, nonempty subsets
    bits = (codes[:, None] >> np.arange(p)[None, :]) & 1
    return bits.astype(bool)


def plan_amputation(spec: MissingnessSpec, p: int) -> AmputationPlan:
    """Build patterns and score weights for the requested mechanism.

    single-variable mode gives one pattern per predictor (pattern k misses
    only X_k).  MAR weights load equally on the observed-in-pattern
    variables only; MNAR additionally loads on the missing ones; MCAR uses
    a zero score (purely random amputation).
    """
    if p < 1:
        raise ConfigError("need at least one variable")
    if spec.mechanism == MAR and p < 2:
        raise ConfigError("MAR needs at least one observed predictor to drive missingness")

    if spec.pattern_set == SINGLE_VARIABLE:
        patterns = np.eye(p, dtype=bool)
    else:
        if p > _MAX_ALL_SUBSETS_P:
            raise ConfigError(
                f"all-subsets with p={p} would enumerate {2**p - 2} patterns; "
                "supply explicit patterns instead"
            )
        patterns = _all_subset_patterns(p)

    if spec.weights is not None:
        weights = np.asarray(spec.weights, dtype=float)
        if weights.shape != patterns.shape:
            raise ConfigError("explicit weights must be one vector per pattern")
    elif spec.mechanism == MCAR:
        weights = np.zeros(patterns.shape)
    elif spec.mechanism == MAR:
        weights = (~patterns).astype(float)
    else:  # MNAR: every variable contributes, including the missing ones
        weights = np.ones(patterns.shape)

    if spec.mechanism == MAR and np.any(weights[patterns] != 0.0):
        raise ConfigError("MAR weights must be zero on missing-in-pattern variables")
    if spec.mechanism == MNAR:
        loads_missing = (weights * patterns).any(axis=1)
        if not loads_missing.all():
            raise ConfigError("MNAR weights must load on a missing-in-pattern variable")

    return AmputationPlan(patterns=patterns, weights=weights, mechanism=spec.mechanism)


def _solve_offset(z: np.ndarray, pi_miss: float) -> float:
    """Offset a with mean(expit(a + z)) = pi_miss, by bisection."""
    lo, hi = -40.0, 40.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if float(expit(mid + z).mean()) < pi_miss:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def ampute(data: DataSet, plan: AmputationPlan, pi_miss: float,
           rng: np.random.Generator) -> DataSet:
    """Return a copy of ``data`` with masked (NaN) cells per the plan.

    Rows are assigned uniformly to patterns; each group's amputation
    probability is expit(a + z) with z the standardized weighted score
    (zero under MCAR) and a solved so the group mean equals ``pi_miss``.
    Outcomes and true probabilities are never touched.
    """
    if not data.fully_observed():
        raise ConfigError("amputation expects a fully observed dataset")
    if not 0.0 <= pi_miss < 1.0:
        raise ConfigError("pi_miss must lie in [0, 1)")
    if pi_miss == 0.0:
        return DataSet(X=data.X.copy(), mask=data.mask.copy(), y=data.y,
                       true_prob=data.true_prob, meta=dict(data.meta))

    n = data.n
    assignment = rng.integers(0, plan.n_patterns, size=n)
    mask = np.ones_like(data.mask)
    X = data.X.copy()
    mcar_fallbacks = []

    for k in range(plan.n_patterns):
        rows = np.flatnonzero(assignment == k)
        if rows.size == 0:
            continue
        w = plan.weights[k]
        if np.any(w != 0.0):
            score = data.X[rows] @ w
            sd = float(score.std())
            if sd < 1e-12:
                z = np.zeros(rows.size)
                mcar_fallbacks.append(k)
            else:
                z = (score - float(score.mean())) / sd
        else:
            z = np.zeros(rows.size)
        a = _solve_offset(z, pi_miss)
        hit = rng.random(rows.size) < expit(a + z)
        amputed = rows[hit]
        cols = np.flatnonzero(plan.patterns[k])
        for j in cols:
            mask[amputed, j] = False
            X[amputed, j] = np.nan

    meta = dict(data.meta)
    if mcar_fallbacks:
        meta["mcar_fallback_patterns"] = mcar_fallbacks
    return DataSet(X=X, mask=mask, y=data.y, true_prob=data.true_prob, meta=meta)
