"""Scenario orchestration: repeat pipelines, posterior summaries, and the
grow-the-sample search loop.

One repeat draws a target population and a development sample, induces
missingness, and pushes every requested (method, family) combination
through completion, fitting, pooling, and evaluation against the truth.
Seed streams are derived from index tuples, never from scheduling, so any
worker count reproduces the same numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import imputation, modeling
from .amputation import MissingnessSpec, ampute, plan_amputation
from .datagen import DataSet, OutcomeSpec, PredictorSpec, calibrate_intercept, generate
from .errors import ConfigError, MissSizeError
from .metrics import (DEFAULT_THRESHOLDS, calibration, c_statistic,
                      decision_loss_curve, net_benefit_curve)
from .seeding import stream
from .sizing import SizingInputs, riley_binary_min_n

IDEAL = "ideal"
PRAGMATIC = "pragmatic"
EVAL_MODES = (IDEAL, PRAGMATIC)

FULLY_OBSERVED = "fully-observed"
REFERENCE = "reference"

DEFAULT_SLOPE_BAND = (0.9, 1.1)

SCALAR_METRICS = ("slope", "intercept", "oe_ratio", "cstat",
                  "cstat_degradation", "ref_cstat", "ref_slope")


@dataclass
class ScenarioConfig:
    name: str
    pred: PredictorSpec
    out: OutcomeSpec
    sizing: SizingInputs
    n_target: int = 500_000
    deltas: tuple = (1.0, 1.25, 1.5, 1.75, 2.0)
    miss_dev: MissingnessSpec = field(default_factory=MissingnessSpec)
    miss_target: MissingnessSpec | None = None
    methods: tuple = imputation.METHODS
    families: tuple = (modeling.MLE,)
    repeats: int = 100
    base_seed: int = 0
    eval_modes: tuple = (IDEAL,)
    include_fully_observed: bool = True
    target_mode: str = "per-repeat"  # or "shared"
    use_outcome_for_target_imputation: bool = True
    slope_band: tuple = DEFAULT_SLOPE_BAND

    def __post_init__(self):
        self.deltas = tuple(float(d) for d in self.deltas)
        self.methods = tuple(self.methods)
        self.families = tuple(self.families)
        self.eval_modes = tuple(self.eval_modes)
        if self.repeats < 2:
            raise ConfigError("repeats must be >= 2 (assurance needs >= 2 draws)")
        if PRAGMATIC in self.eval_modes and self.miss_target is None:
            raise ConfigError("pragmatic evaluation requires target missingness")
        for m in self.eval_modes:
            if m not in EVAL_MODES:
                raise ConfigError(f"unknown eval mode {m!r}")
        for m in self.methods:
            if m not in imputation.METHODS + (FULLY_OBSERVED,):
                raise ConfigError(f"unknown method {m!r}")
        for f in self.families:
            if f not in modeling.FAMILIES:
                raise ConfigError(f"unknown family {f!r}")
        if self.target_mode not in ("per-repeat", "shared"):
            raise ConfigError(f"unknown target mode {self.target_mode!r}")
        if self.n_target < 2:
            raise ConfigError("n_target must be at least 2")

    def all_methods(self) -> tuple:
        ms = tuple(self.methods)
        if self.include_fully_observed and FULLY_OBSERVED not in ms:
            ms = (FULLY_OBSERVED,) + ms
        return ms


@dataclass
class MetricRecord:
    method: str
    family: str
    eval_mode: str
    slope: float = math.nan
    intercept: float = math.nan
    oe_ratio: float = math.nan
    cstat: float = math.nan
    ref_cstat: float = math.nan
    ref_slope: float = math.nan
    cstat_degradation: float = math.nan
    loss: np.ndarray | None = None
    nb_model: np.ndarray | None = None
    nb_ref: np.ndarray | None = None
    nb_all: np.ndarray | None = None
    converged: bool = True
    separation: bool = False
    degenerate: bool = False
    failed: bool = False
    failure_stage: str = ""
    failure_reason: str = ""

    def flags(self) -> str:
        out = []
        if self.failed:
            out.append(f"failed:{self.failure_stage}")
        if not self.converged:
            out.append("not-converged")
        if self.separation:
            out.append("separation")
        if self.degenerate:
            out.append("degenerate-predictions")
        return ";".join(out)


@dataclass
class RepeatResult:
    scenario: str
    delta: float
    repeat_idx: int
    n_dev: int
    records: list = field(default_factory=list)


@dataclass
class CellSummary:
    scenario: str
    delta: float
    method: str
    family: str
    eval_mode: str
    n_success: int = 0
    n_failed: int = 0
    medians: dict = field(default_factory=dict)
    percentiles: dict = field(default_factory=dict)
    assurance: float = math.nan
    failure_rate: float = 0.0
    thresholds: np.ndarray | None = None
    evpi: np.ndarray | None = None
    nb_model: np.ndarray | None = None
    nb_ref: np.ndarray | None = None
    nb_all: np.ndarray | None = None


_NMIN_CACHE: dict = {}


def minimum_n(sizing: SizingInputs) -> int:
    key = (sizing.p_params, sizing.phi, sizing.s_target, sizing.r2_nagelkerke,
           sizing.c_statistic, sizing.delta_opt, sizing.intercept_margin)
    if key not in _NMIN_CACHE:
        _NMIN_CACHE[key] = riley_binary_min_n(sizing).n_min
    return _NMIN_CACHE[key]


def scaled_n(n_min: int, delta: float) -> int:
    return int(math.floor(delta * n_min + 0.5))


def prepare(cfg: ScenarioConfig) -> ScenarioConfig:
    """Fill in the calibrated intercept once so repeats don't redo it."""
    if cfg.out.beta0 is not None:
        return cfg
    rng = stream(cfg.base_seed, cfg.name, "calibrate-intercept")
    beta0 = calibrate_intercept(cfg.pred, cfg.out, rng)
    return replace(cfg, out=replace(cfg.out, beta0=beta0))


@dataclass
class _RefPack:
    slope: float
    cstat: float
    nb: np.ndarray
    nb_all: np.ndarray
    intercept: float = math.nan
    oe_ratio: float = math.nan


def _make_ref_pack(y: np.ndarray, probs_ref: np.ndarray) -> _RefPack:
    cal = calibration(y, probs_ref)
    nb = net_benefit_curve(y, probs_ref)
    return _RefPack(slope=cal.slope, cstat=c_statistic(y, probs_ref),
                    nb=nb.nb, nb_all=nb.nb_treat_all,
                    intercept=cal.intercept, oe_ratio=cal.oe_ratio)


def _reference_record(mode: str, pack: _RefPack) -> MetricRecord:
    return MetricRecord(method=REFERENCE, family="none", eval_mode=mode,
                        slope=pack.slope, intercept=pack.intercept,
                        oe_ratio=pack.oe_ratio, cstat=pack.cstat,
                        ref_cstat=pack.cstat, ref_slope=pack.slope,
                        cstat_degradation=0.0,
                        loss=np.zeros_like(pack.nb), nb_model=pack.nb.copy(),
                        nb_ref=pack.nb.copy(), nb_all=pack.nb_all.copy())


def _evaluate(method: str, family: str, mode: str, y: np.ndarray,
              probs_model: np.ndarray, ref: _RefPack) -> MetricRecord:
    rec = MetricRecord(method=method, family=family, eval_mode=mode)
    try:
        cal = calibration(y, probs_model)
    except MissSizeError as err:
        partial = getattr(err, "partial", None)
        if partial is None:
            raise
        rec.degenerate = True
        rec.slope = partial.slope
        rec.intercept = partial.intercept
        rec.oe_ratio = partial.oe_ratio
    else:
        rec.slope = cal.slope
        rec.intercept = cal.intercept
        rec.oe_ratio = cal.oe_ratio
    rec.ref_slope = ref.slope
    rec.cstat = c_statistic(y, probs_model)
    rec.ref_cstat = ref.cstat
    rec.cstat_degradation = rec.ref_cstat - rec.cstat
    nb_m = net_benefit_curve(y, probs_model)
    rec.nb_model = nb_m.nb
    rec.nb_ref = ref.nb
    rec.nb_all = ref.nb_all
    rec.loss = ref.nb - nb_m.nb
    return rec


def _failure(method, family, mode, stage, err) -> MetricRecord:
    return MetricRecord(method=method, family=family, eval_mode=mode,
                        converged=False, failed=True, failure_stage=stage,
                        failure_reason=str(err))


def _fit_family(family: str, completions: list, rng_maker) -> modeling.FittedModel:
    # identical completions (nothing was missing) pool to the single fit
    if len(completions) > 1 and all(
            np.array_equal(d.X, completions[0].X) for d in completions[1:]):
        completions = completions[:1]
    xs = [d.X for d in completions]
    ys = [d.y.astype(float) for d in completions]
    models = []
    for k, (Xk, yk) in enumerate(zip(xs, ys)):
        if family == modeling.MLE:
            models.append(modeling.fit_logistic_mle(Xk, yk))
        elif family == modeling.AIC_BACKWARD:
            models.append(modeling.fit_backward_aic(Xk, yk))
        else:
            models.append(modeling.fit_lasso_cv(Xk, yk, rng=rng_maker(k)))
    return modeling.pool_models(models, xs=xs, ys=ys)


def run_repeat(cfg: ScenarioConfig, delta: float, repeat_idx: int) -> RepeatResult:
    if delta not in cfg.deltas:
        raise ConfigError(f"delta {delta} is not in the configured grid")
    di = cfg.deltas.index(delta)
    ri = repeat_idx
    sd = cfg.base_seed
    name = cfg.name
    cfg = prepare(cfg)

    n_min = minimum_n(cfg.sizing)
    n_dev = scaled_n(n_min, delta)
    result = RepeatResult(scenario=name, delta=delta, repeat_idx=ri, n_dev=n_dev)

    target_rep = 0 if cfg.target_mode == "shared" else ri
    target = generate(cfg.pred, cfg.out, cfg.n_target,
                      stream(sd, name, di, target_rep, "target"))
    dev_full = generate(cfg.pred, cfg.out, n_dev, stream(sd, name, di, ri, "dev"))

    p = cfg.pred.n_design_columns()
    if cfg.miss_dev.pi_miss > 0:
        plan_dev = plan_amputation(cfg.miss_dev, p)
        dev_amp = ampute(dev_full, plan_dev, cfg.miss_dev.pi_miss,
                         stream(sd, name, di, ri, "ampute-dev"))
    else:
        dev_amp = dev_full

    target_amp = None
    if PRAGMATIC in cfg.eval_modes and cfg.miss_target is not None:
        plan_t = plan_amputation(cfg.miss_target, p)
        target_amp = ampute(target, plan_t, cfg.miss_target.pi_miss,
                            stream(sd, name, di, ri, "ampute-target"))

    y_t = target.y.astype(float)
    truth = target.true_prob
    ref_full = _make_ref_pack(y_t, truth)
    ref_cc = None  # reference on the complete-row target subset, on demand

    for mode in cfg.eval_modes:
        result.records.append(_reference_record(mode, ref_full))

    for method in cfg.all_methods():
        try:
            imp = None
            if method == FULLY_OBSERVED:
                completions = [dev_full]
            elif method == imputation.COMPLETE_CASE:
                completions = [imputation.complete_case_filter(dev_amp)]
            else:
                imp = imputation.fit_imputer(
                    method, dev_amp, stream(sd, name, di, ri, "impute-fit", method))
                completions = imputation.apply_imputer(
                    imp, dev_amp, use_outcome=True,
                    rng=stream(sd, name, di, ri, "impute-apply-dev", method)).datasets
        except MissSizeError as err:
            for family in cfg.families:
                for mode in cfg.eval_modes:
                    result.records.append(
                        _failure(method, family, mode, "completion", err))
            continue

        target_completions = None
        for family in cfg.families:
            try:
                pooled = _fit_family(
                    family, completions,
                    lambda k: stream(sd, name, di, ri, "cv", family, k))
            except MissSizeError as err:
                for mode in cfg.eval_modes:
                    result.records.append(_failure(method, family, mode, "fit", err))
                continue

            for mode in cfg.eval_modes:
                try:
                    if mode == IDEAL:
                        probs = modeling.predict(pooled, target.X)
                        rec = _evaluate(method, family, mode, y_t, probs, ref_full)
                    else:
                        if method == FULLY_OBSERVED:
                            continue  # no deployment recipe for missing inputs
                        if method == imputation.COMPLETE_CASE:
                            keep = target_amp.mask.all(axis=1)
                            if not keep.any():
                                raise ConfigError("no complete target rows")
                            if ref_cc is None:
                                ref_cc = _make_ref_pack(y_t[keep], truth[keep])
                            probs = modeling.predict(pooled, target_amp.X[keep])
                            rec = _evaluate(method, family, mode,
                                            y_t[keep], probs, ref_cc)
                        else:
                            if target_completions is None:
                                target_completions = imputation.apply_imputer(
                                    imp, target_amp,
                                    use_outcome=cfg.use_outcome_for_target_imputation,
                                    rng=stream(sd, name, di, ri,
                                               "impute-apply-target", method),
                                ).datasets
                            probs = np.mean(
                                [modeling.predict(pooled, d.X)
                                 for d in target_completions], axis=0)
                            rec = _evaluate(method, family, mode, y_t, probs,
                                            ref_full)
                    rec.converged = pooled.converged
                    rec.separation = pooled.separation
                    result.records.append(rec)
                except MissSizeError as err:
                    result.records.append(
                        _failure(method, family, mode, "evaluate", err))
    return result


def _run_task(args):
    cfg, delta, ridx = args
    return run_repeat(cfg, delta, ridx)


def run_delta(cfg: ScenarioConfig, delta: float, workers: int = 1) -> list:
    cfg = prepare(cfg)
    tasks = [(cfg, delta, r) for r in range(cfg.repeats)]
    if workers <= 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    results.sort(key=lambda r: (r.scenario, r.delta, r.repeat_idx))
    return results


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> list:
    cfg = prepare(cfg)
    tasks = [(cfg, d, r) for d in cfg.deltas for r in range(cfg.repeats)]
    if workers <= 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, tasks))
    results.sort(key=lambda r: (r.scenario, r.delta, r.repeat_idx))
    return results


def summarize(repeats: list, slope_band: tuple = DEFAULT_SLOPE_BAND) -> dict:
    """Aggregate repeat records into per-cell posterior summaries."""
    cells: dict = {}
    for rr in repeats:
        for rec in rr.records:
            key = (rr.scenario, rr.delta, rec.method, rec.family, rec.eval_mode)
            cells.setdefault(key, []).append(rec)

    out = {}
    lo, hi = slope_band
    for key, recs in sorted(cells.items()):
        scen, delta, method, family, mode = key
        good = [r for r in recs if not r.failed]
        cs = CellSummary(scenario=scen, delta=delta, method=method,
                         family=family, eval_mode=mode,
                         n_success=len(good), n_failed=len(recs) - len(good))
        cs.failure_rate = cs.n_failed / len(recs)
        if not good:
            out[key] = cs
            continue
        for metric in SCALAR_METRICS:
            vals = np.array([getattr(r, metric) for r in good], dtype=float)
            with np.errstate(all="ignore"):
                cs.medians[metric] = float(np.nanmedian(vals)) \
                    if not np.all(np.isnan(vals)) else math.nan
                pct = {}
                for q in (2.5, 25.0, 75.0, 97.5):
                    pct[q] = float(np.nanpercentile(vals, q)) \
                        if not np.all(np.isnan(vals)) else math.nan
            cs.percentiles[metric] = pct
        slopes = np.array([r.slope for r in good], dtype=float)
        in_band = (slopes >= lo) & (slopes <= hi)  # NaN never lands in-band
        cs.assurance = float(in_band.sum()) / len(good)
        with_curves = [r for r in good if r.loss is not None]
        if with_curves:
            cs.thresholds = DEFAULT_THRESHOLDS.copy()
            cs.evpi = np.mean([r.loss for r in with_curves], axis=0)
            cs.nb_model = np.mean([r.nb_model for r in with_curves], axis=0)
            cs.nb_ref = np.mean([r.nb_ref for r in with_curves], axis=0)
            cs.nb_all = np.mean([r.nb_all for r in with_curves], axis=0)
        out[key] = cs
    return out


@dataclass
class SearchTargets:
    median_slope_min: float | None = None
    assurance_min: float | None = None
    max_evpi: float | None = None
    evpi_thresholds: tuple = (0.1, 0.2, 0.3)

    def __post_init__(self):
        if (self.median_slope_min is None and self.assurance_min is None
                and self.max_evpi is None):
            raise ConfigError("specify at least one search target")


def _targets_met(cs: CellSummary, t: SearchTargets):
    """Returns (met: bool, shortfall: float)."""
    short = 0.0
    if t.median_slope_min is not None:
        v = cs.medians.get("slope", math.nan)
        if not (v >= t.median_slope_min):
            short += (t.median_slope_min - v) if math.isfinite(v) else math.inf
    if t.assurance_min is not None:
        v = cs.assurance
        if not (v >= t.assurance_min):
            short += (t.assurance_min - v) if math.isfinite(v) else math.inf
    if t.max_evpi is not None:
        if cs.evpi is None:
            short += math.inf
        else:
            idx = [int(np.argmin(np.abs(cs.thresholds - th)))
                   for th in t.evpi_thresholds]
            worst = float(np.max(cs.evpi[idx]))
            if not (worst <= t.max_evpi):
                short += worst - t.max_evpi
    return short == 0.0, short


def search_min_n(cfg: ScenarioConfig, targets: SearchTargets,
                 workers: int = 1) -> dict:
    """Walk the delta grid upward; report the first N_dev meeting every
    target per (method, family, eval-mode) cell."""
    if list(cfg.deltas) != sorted(cfg.deltas):
        raise ConfigError("deltas must be ascending for the search loop")
    cfg = prepare(cfg)
    n_min = minimum_n(cfg.sizing)

    found: dict = {}
    closest: dict = {}
    for delta in cfg.deltas:
        results = run_delta(cfg, delta, workers=workers)
        summary = summarize(results, cfg.slope_band)
        pending = False
        for key, cs in summary.items():
            mkey = (cs.method, cs.family, cs.eval_mode)
            if cs.method == REFERENCE or mkey in found:
                continue
            met, short = _targets_met(cs, targets)
            if met:
                found[mkey] = {"achieved": True, "delta": delta,
                               "n_dev": scaled_n(n_min, delta), "summary": cs}
            else:
                pending = True
                prev = closest.get(mkey)
                if prev is None or short < prev[0]:
                    closest[mkey] = (short, delta, cs)
        if not pending:
            break

    out = dict(found)
    for mkey, (short, delta, cs) in closest.items():
        if mkey not in out:
            out[mkey] = {"achieved": False, "delta": delta,
                         "n_dev": None, "shortfall": short, "summary": cs,
                         "note": "not achieved within grid"}
    return out
