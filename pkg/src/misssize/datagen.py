"""Synthetic population generation for a binary-outcome logistic model.

Two generation modes are supported:

* ``block-pairs-mvn`` -- predictors drawn from a multivariate normal with a
  block-diagonal covariance: consecutive pairs share a common correlation
  ``rho``, different pairs are independent.
* ``independent-summaries`` -- each variable drawn independently from a
  stated univariate summary (normal mean/variance, or categorical
  proportions dummy-coded against the first listed level).

Outcomes are Bernoulli draws from ``expit(beta0 + X . beta)``.  The
intercept can be calibrated to hit a target prevalence on a dedicated
Monte-Carlo sample, keeping generated populations independent of the
calibration step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import CalibrationError, ConfigError

BLOCK_PAIRS = "block-pairs-mvn"
SUMMARIES = "independent-summaries"


@dataclass
class ContinuousSummary:
    mean: float
    variance: float

    def n_columns(self) -> int:
        return 1


@dataclass
class CategoricalSummary:
    levels: list
    proportions: list

    def n_columns(self) -> int:
        # dummy coding, first level is the reference
        return len(self.levels) - 1


@dataclass
class PredictorSpec:
    """Distributional description of the predictor variables."""

    p: int
    rho: float = 0.0
    mode: str = BLOCK_PAIRS
    summaries: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in (BLOCK_PAIRS, SUMMARIES):
            raise ConfigError(f"unknown predictor mode {self.mode!r}")
        if self.mode == BLOCK_PAIRS:
            if self.p < 1:
                raise ConfigError("need at least one predictor")
            if not -1.0 < self.rho < 1.0:
                raise ConfigError(
                    f"rho={self.rho} leaves the pair covariance not positive definite"
                )
        else:
            if len(self.summaries) != self.p:
                raise ConfigError(
                    f"expected {self.p} variable summaries, got {len(self.summaries)}"
                )
            for i, s in enumerate(self.summaries):
                if isinstance(s, ContinuousSummary):
                    if s.variance < 0:
                        raise ConfigError(f"variable {i}: negative variance")
                elif isinstance(s, CategoricalSummary):
                    if len(s.levels) != len(s.proportions) or len(s.levels) < 2:
                        raise ConfigError(f"variable {i}: levels/proportions mismatch")
                    if abs(sum(s.proportions) - 1.0) > 1e-9:
                        raise ConfigError(f"variable {i}: proportions must sum to 1")
                    if min(s.proportions) < 0:
                        raise ConfigError(f"variable {i}: negative proportion")
                else:
                    raise ConfigError(f"variable {i}: missing summary")

    def n_design_columns(self) -> int:
        if self.mode == BLOCK_PAIRS:
            return self.p
        return sum(s.n_columns() for s in self.summaries)


@dataclass
class OutcomeSpec:
    """True logistic model: coefficients, intercept, target prevalence."""

    beta: np.ndarray
    beta0: float | None = None
    target_prevalence: float = 0.2

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if not 0.0 < self.target_prevalence < 1.0:
            raise ConfigError("target_prevalence must lie in (0, 1)")


@dataclass
class DataSet:
    """Predictor matrix with an observed-cell mask and binary outcomes.

    ``X`` holds NaN wherever ``mask`` is False; values are immutable by
    convention once constructed.  ``true_prob`` carries the generating
    probabilities when the data are synthetic.
    """

    X: np.ndarray
    mask: np.ndarray
    y: np.ndarray
    true_prob: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def fully_observed(self) -> bool:
        return bool(self.mask.all())


def block_pairs_sigma(p: int, rho: float) -> np.ndarray:
    """Covariance with unit variances and 2x2 blocks [[1, rho], [rho, 1]].

    An odd trailing variable is left independent.
    """
    sigma = np.eye(p)
    for k in range(0, p - 1, 2):
        sigma[k, k + 1] = sigma[k + 1, k] = rho
    return sigma


def _draw_mvn_design(pred: PredictorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    sigma = block_pairs_sigma(pred.p, pred.rho)
    chol = np.linalg.cholesky(sigma)
    z = rng.standard_normal((n, pred.p))
    return z @ chol.T


def _draw_summaries_design(pred: PredictorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    cols = []
    for s in pred.summaries:
        if isinstance(s, ContinuousSummary):
            cols.append(s.mean + np.sqrt(s.variance) * rng.standard_normal(n))
        else:
            cum = np.cumsum(s.proportions)
            cum[-1] = 1.0  # guard against rounding drift
            idx = np.searchsorted(cum, rng.random(n), side="right")
            for level in range(1, len(s.levels)):
                cols.append((idx == level).astype(float))
    return np.column_stack(cols)


def design_matrix(pred: PredictorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw an n-row design matrix (dummy-coded) for either mode."""
    if pred.mode == BLOCK_PAIRS:
        return _draw_mvn_design(pred, n, rng)
    return _draw_summaries_design(pred, n, rng)


def _check_beta(pred: PredictorSpec, out: OutcomeSpec):
    k = pred.n_design_columns()
    if out.beta.shape != (k,):
        raise ConfigError(
            f"beta has length {out.beta.shape[0] if out.beta.ndim == 1 else out.beta.shape},"
            f" expected {k} design columns"
        )


def _finish_dataset(X: np.ndarray, out: OutcomeSpec, rng: np.random.Generator) -> DataSet:
    eta = out.beta0 + X @ out.beta
    prob = expit(eta)
    y = (rng.random(X.shape[0]) < prob).astype(np.int8)
    mask = np.ones(X.shape, dtype=bool)
    return DataSet(X=X, mask=mask, y=y, true_prob=prob)


def generate_population(pred: PredictorSpec, out: OutcomeSpec, n: int,
                        rng: np.random.Generator) -> DataSet:
    """Generate a fully observed population under the block-pairs MVN model.

    Requires ``out.beta0`` to be set (see :func:`calibrate_intercept`).
    Deterministic given the generator state: predictors are drawn first,
    then one uniform per row for the outcome.
    """
    if pred.mode != BLOCK_PAIRS:
        raise ConfigError("generate_population expects block-pairs-mvn mode; "
                          "use generate_from_summaries for summary-based specs")
    if out.beta0 is None:
        raise ConfigError("beta0 is unset; run calibrate_intercept first")
    if n < 1:
        raise ConfigError("n must be >= 1")
    _check_beta(pred, out)
    return _finish_dataset(_draw_mvn_design(pred, n, rng), out, rng)


def generate_from_summaries(pred: PredictorSpec, out: OutcomeSpec, n: int,
                            rng: np.random.Generator) -> DataSet:
    """Generate a population from independent univariate summaries."""
    if pred.mode != SUMMARIES:
        raise ConfigError("generate_from_summaries expects independent-summaries mode")
    if out.beta0 is None:
        raise ConfigError("beta0 is unset; run calibrate_intercept first")
    if n < 1:
        raise ConfigError("n must be >= 1")
    _check_beta(pred, out)
    return _finish_dataset(_draw_summaries_design(pred, n, rng), out, rng)


def generate(pred: PredictorSpec, out: OutcomeSpec, n: int,
             rng: np.random.Generator) -> DataSet:
    """Mode-dispatching convenience wrapper used by the engine."""
    if pred.mode == BLOCK_PAIRS:
        return generate_population(pred, out, n, rng)
    return generate_from_summaries(pred, out, n, rng)


def calibrate_intercept(pred: PredictorSpec, out: OutcomeSpec,
                        rng: np.random.Generator, n_cal: int = 1_000_000,
                        tol: float = 1e-4) -> float:
    """Solve the intercept so mean predicted probability hits the target.

    Bisection over beta0 in [-30, 30] against a dedicated calibration
    sample of ``n_cal`` linear predictors (drawn here, in chunks, so the
    eventual populations stay independent of the calibration step).
    """
    phi = out.target_prevalence
    if not 0.001 < phi < 0.999:
        raise ConfigError("target prevalence must lie in (0.001, 0.999)")
    _check_beta(pred, out)
    if n_cal < 1_000_000:
        raise ConfigError("calibration sample must be at least 1e6")

    eta = np.empty(n_cal)
    chunk = 200_000
    for start in range(0, n_cal, chunk):
        stop = min(start + chunk, n_cal)
        eta[start:stop] = design_matrix(pred, stop - start, rng) @ out.beta

    def prevalence(b0):
        return float(np.mean(expit(b0 + eta)))

    lo, hi = -30.0, 30.0
    if not (prevalence(lo) <= phi <= prevalence(hi)):
        raise CalibrationError(
            f"prevalence {phi} unreachable for beta0 in [-30, 30]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = prevalence(mid)
        if abs(f - phi) <= tol:
            return mid
        if f < phi:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return 0.5 * (lo + hi)


def calibrated(pred: PredictorSpec, out: OutcomeSpec, rng: np.random.Generator,
               **kwargs) -> OutcomeSpec:
    """Return a copy of ``out`` with beta0 filled in (if not already set)."""
    if out.beta0 is not None:
        return out
    return replace(out, beta0=calibrate_intercept(pred, out, rng, **kwargs))
