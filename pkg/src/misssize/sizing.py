"""Closed-form minimum sample size criteria for binary-outcome models.

Implements the three development-sample criteria (shrinkage-targeted
overfitting control, small optimism in apparent fit, and precise
overall-risk estimation), the Cox-Snell R-squared conversions from a
Nagelkerke R-squared or an anticipated C-statistic, the delta grid of
candidate development sizes, and the 1/(1 - pi_miss) missingness
inflation rule of thumb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, SizingError
from . import seeding

# Criteria arithmetic applies the Cox-Snell R^2 rounded to 3 decimals.
# This reproduces the published reference grid (897 / 1122 / 1346 / 1570 /
# 1794 at delta = 1..2) exactly; full precision lands one unit higher.
_R2_DECIMALS = 3


@dataclass
class SizingInputs:
    p_params: int
    phi: float
    s_target: float = 0.9
    r2_nagelkerke: float | None = None
    c_statistic: float | None = None
    delta_opt: float = 0.05
    intercept_margin: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.phi < 1.0:
            raise ConfigError("phi must lie in (0, 1)")
        if not 0.0 < self.s_target < 1.0:
            raise ConfigError("target shrinkage must lie in (0, 1)")
        if self.p_params < 1:
            raise ConfigError("need at least one candidate parameter")
        if (self.r2_nagelkerke is None) == (self.c_statistic is None):
            raise ConfigError(
                "provide exactly one of r2_nagelkerke or c_statistic"
            )
        if self.r2_nagelkerke is not None and not 0.0 < self.r2_nagelkerke <= 1.0:
            raise ConfigError("Nagelkerke R^2 must lie in (0, 1]")
        if self.c_statistic is not None and not 0.5 < self.c_statistic < 1.0:
            raise ConfigError("c-statistic must lie in (0.5, 1)")


@dataclass
class SizingResult:
    r2_cs: float          # Cox-Snell R^2 as used by the criteria
    r2_cs_max: float
    n_criterion1: int
    n_criterion2: int
    n_criterion3: int
    n_min: int
    epp: float            # implied events per parameter at n_min


def _ceil(x: float) -> int:
    # guard against float representation pushing exact integers upward
    return int(math.ceil(x - 1e-9))


def cs_rsq_from_nagelkerke(r2_n: float, phi: float) -> tuple[float, float]:
    """Convert a Nagelkerke R^2 to Cox-Snell, returning (r2_cs, r2_cs_max).

    r2_cs_max is the maximum attainable Cox-Snell value at prevalence phi.
    """
    if not 0.0 <= r2_n <= 1.0:
        raise ConfigError("Nagelkerke R^2 must lie in [0, 1]")
    if not 0.0 < phi < 1.0:
        raise ConfigError("phi must lie in (0, 1)")
    ln_lik_null = phi * math.log(phi) + (1.0 - phi) * math.log(1.0 - phi)
    r2_cs_max = 1.0 - math.exp(2.0 * ln_lik_null)
    return r2_n * r2_cs_max, r2_cs_max


def expected_c_statistic(probs: np.ndarray) -> float:
    """Expected C-statistic of the true model over outcome draws.

    Each unit contributes event mass ``p`` and non-event mass ``1 - p``;
    the pairwise exceedance probability then reduces to a sort plus a
    cumulative sum.
    """
    order = np.argsort(probs, kind="mergesort")
    p = probs[order]
    q = 1.0 - p
    below = np.concatenate(([0.0], np.cumsum(q)[:-1]))  # non-event mass strictly below
    total_events = p.sum()
    total_nonevents = q.sum()
    return float(np.sum(p * below) / (total_events * total_nonevents))


def cs_rsq_from_cstat(c: float, phi: float, rng: np.random.Generator | None = None,
                      n_sim: int = 1_000_000) -> float:
    """Cox-Snell R^2 implied by an anticipated C-statistic at prevalence phi.

    Assumes a normally distributed linear predictor; its mean and variance
    are solved -- mean by Newton per candidate variance, variance by
    bisection -- so the Monte-Carlo sample reproduces ``phi`` and ``c``.
    The returned value is the likelihood-ratio R^2 of the true model on
    that sample.  A fixed internal stream keeps results reproducible.
    """
    if not 0.5 < c < 1.0:
        raise ConfigError("c-statistic must lie in (0.5, 1)")
    if not 0.0 < phi < 1.0:
        raise ConfigError("phi must lie in (0, 1)")
    if n_sim < 1_000_000:
        raise ConfigError("simulation sample must be at least 1e6")
    if rng is None:
        rng = seeding.stream("sizing", "cstat-solve")
    z = rng.standard_normal(n_sim)

    def solve_mu(sigma):
        mu = math.log(phi / (1.0 - phi))
        for _ in range(60):
            v = expit(mu + sigma * z)
            f = float(v.mean()) - phi
            if abs(f) < 1e-10:
                break
            mu -= f / max(float((v * (1.0 - v)).mean()), 1e-12)
        return mu

    def c_at(sigma):
        probs = expit(solve_mu(sigma) + sigma * z)
        return probs, expected_c_statistic(probs)

    lo, hi = 1e-9, 20.0
    probs_hi, c_hi = c_at(hi)
    if c_hi < c:
        raise SizingError(f"c-statistic {c} unreachable (max simulated {c_hi:.4f})")
    probs = None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        probs, c_mid = c_at(mid)
        if abs(c_mid - c) < 2e-5:
            break
        if c_mid < c:
            lo = mid
        else:
            hi = mid
    else:
        raise SizingError("variance solve did not converge for the given c-statistic")

    # expected log-likelihoods over outcome draws, given the LP sample
    phi_hat = float(probs.mean())
    ll_model = float(np.sum(probs * np.log(probs) + (1 - probs) * np.log1p(-probs)))
    ll_null = float(np.sum(probs * math.log(phi_hat) + (1 - probs) * math.log(1 - phi_hat)))
    return 1.0 - math.exp(2.0 * (ll_null - ll_model) / n_sim)


def riley_binary_min_n(inputs: SizingInputs) -> SizingResult:
    """Minimum development sample size: the max of the three criteria."""
    if inputs.r2_nagelkerke is not None:
        r2_raw, r2_max = cs_rsq_from_nagelkerke(inputs.r2_nagelkerke, inputs.phi)
    else:
        r2_raw = cs_rsq_from_cstat(inputs.c_statistic, inputs.phi)
        _, r2_max = cs_rsq_from_nagelkerke(1.0, inputs.phi)
    r2 = round(r2_raw, _R2_DECIMALS)

    if r2 <= 0.0:
        raise SizingError("anticipated R^2 must be positive")
    s = inputs.s_target
    if r2 >= s:
        raise SizingError(
            f"criterion 1 undefined: R^2_CS={r2} must be below the shrinkage target {s}"
        )

    p = inputs.p_params
    n1 = _ceil(p / ((s - 1.0) * math.log(1.0 - r2 / s)))
    s2 = r2 / (r2 + inputs.delta_opt * r2_max)
    n2 = _ceil(p / ((s2 - 1.0) * math.log(1.0 - r2 / s2)))
    phi = inputs.phi
    n3 = _ceil((1.96 / inputs.intercept_margin) ** 2 * phi * (1.0 - phi))
    n_min = max(n1, n2, n3)
    return SizingResult(
        r2_cs=r2,
        r2_cs_max=r2_max,
        n_criterion1=n1,
        n_criterion2=n2,
        n_criterion3=n3,
        n_min=n_min,
        epp=n_min * phi / p,
    )


def delta_grid(n_min: int, deltas) -> list[int]:
    """Candidate development sizes: round(delta * n_min), dedup, ascending."""
    deltas = list(deltas)
    if not deltas:
        raise ConfigError("delta list must not be empty")
    if any(d < 1.0 for d in deltas):
        raise ConfigError("delta multipliers must be >= 1")
    sizes = {int(math.floor(d * n_min + 0.5)) for d in deltas}
    return sorted(sizes)


def inflate_for_missingness(n: int, pi_miss: float) -> int:
    """Rule-of-thumb inflation: ceil(n / (1 - pi_miss))."""
    if n < 1:
        raise ConfigError("sample size must be positive")
    if not 0.0 <= pi_miss < 1.0:
        raise ConfigError("pi_miss must lie in [0, 1)")
    return _ceil(n / (1.0 - pi_miss))
