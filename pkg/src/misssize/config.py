"""JSON scenario configuration: strict parsing, defaults, grid expansion.

A config file holds either one scenario block or ``{"scenarios": [...]}``.
List-valued design fields (predictor correlation, named coefficient sets,
missingness mechanism, missingness proportion) are expanded into the full
cartesian product of scenario cells.  Unknown fields are hard errors: a
typo should never silently fall back to a default.
"""

from __future__ import annotations

import itertools
import json

from .amputation import MissingnessSpec
from .datagen import (CategoricalSummary, ContinuousSummary, OutcomeSpec,
                      PredictorSpec, BLOCK_PAIRS)
from .engine import ScenarioConfig, SearchTargets
from .errors import ConfigError
from .sizing import SizingInputs

_BLOCK_KEYS = {
    "name", "predictors", "outcome", "sizing", "n_target", "deltas",
    "missingness", "target_missingness", "methods", "families", "repeats",
    "base_seed", "eval_modes", "include_fully_observed", "target_mode",
    "use_outcome_for_target_imputation", "slope_band", "search_targets",
}
_PRED_KEYS = {"p", "rho", "mode", "summaries"}
_OUT_KEYS = {"beta", "beta_sets", "intercept", "target_prevalence"}
_SIZING_KEYS = {"p_params", "phi", "s_target", "r2_nagelkerke",
                "c_statistic", "delta_opt", "intercept_margin"}
_MISS_KEYS = {"mechanism", "pi_miss", "pattern_set", "weights"}
_SUMMARY_KEYS = {"type", "mean", "variance", "levels", "proportions"}
_SEARCH_KEYS = {"median_slope_min", "assurance_min", "max_evpi",
                "evpi_thresholds"}


def _check_keys(d: dict, allowed: set, ctx: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{ctx} must be a JSON object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"unknown field(s) {unknown} in {ctx}")


def _as_list(v):
    return v if isinstance(v, list) else [v]


def _build_summaries(raw: list, ctx: str) -> list:
    out = []
    for i, s in enumerate(raw):
        sctx = f"{ctx}.summaries[{i}]"
        _check_keys(s, _SUMMARY_KEYS, sctx)
        kind = s.get("type")
        if kind == "continuous":
            out.append(ContinuousSummary(mean=float(s["mean"]),
                                         variance=float(s["variance"])))
        elif kind == "categorical":
            out.append(CategoricalSummary(levels=list(s["levels"]),
                                          proportions=[float(x) for x in
                                                       s["proportions"]]))
        else:
            raise ConfigError(f"{sctx}: type must be continuous or categorical")
    return out


def _build_sizing(raw: dict, ctx: str) -> SizingInputs:
    _check_keys(raw, _SIZING_KEYS, ctx)
    kwargs = dict(raw)
    return SizingInputs(**kwargs)


def _build_missingness(raw: dict, ctx: str, mechanism=None, pi=None) -> MissingnessSpec:
    _check_keys(raw, _MISS_KEYS, ctx)
    return MissingnessSpec(
        mechanism=mechanism if mechanism is not None else raw.get("mechanism", "MAR"),
        pi_miss=float(pi if pi is not None else raw.get("pi_miss", 0.0)),
        pattern_set=raw.get("pattern_set", "single-variable"),
        weights=raw.get("weights"),
    )


def build_search_targets(raw: dict) -> SearchTargets:
    _check_keys(raw, _SEARCH_KEYS, "search_targets")
    kwargs = dict(raw)
    if "evpi_thresholds" in kwargs:
        kwargs["evpi_thresholds"] = tuple(float(t) for t in
                                          kwargs["evpi_thresholds"])
    return SearchTargets(**kwargs)


def _expand_block(raw: dict) -> list:
    _check_keys(raw, _BLOCK_KEYS, "scenario")
    for req in ("predictors", "outcome", "sizing"):
        if req not in raw:
            raise ConfigError(f"scenario is missing required section {req!r}")

    name = raw.get("name", "scenario")
    pred_raw = raw["predictors"]
    _check_keys(pred_raw, _PRED_KEYS, "predictors")
    out_raw = raw["outcome"]
    _check_keys(out_raw, _OUT_KEYS, "outcome")
    miss_raw = raw.get("missingness", {})
    _check_keys(miss_raw, _MISS_KEYS, "missingness")

    rhos = _as_list(pred_raw.get("rho", 0.0))
    if "beta_sets" in out_raw:
        if "beta" in out_raw:
            raise ConfigError("outcome: give beta or beta_sets, not both")
        beta_sets = list(out_raw["beta_sets"].items())
    else:
        if "beta" not in out_raw:
            raise ConfigError("outcome: beta (or beta_sets) is required")
        beta_sets = [(None, out_raw["beta"])]
    mechanisms = _as_list(miss_raw.get("mechanism", "MAR"))
    pis = _as_list(miss_raw.get("pi_miss", 0.0))

    sizing = _build_sizing(raw["sizing"], "sizing")

    target_raw = raw.get("target_missingness")
    miss_target = None
    if target_raw is not None:
        miss_target = _build_missingness(target_raw, "target_missingness")

    configs = []
    for (bname, beta), rho, mech, pi in itertools.product(
            beta_sets, rhos, mechanisms, pis):
        parts = [name]
        if bname is not None:
            parts.append(str(bname))
        if len(rhos) > 1:
            parts.append(f"rho{rho:g}")
        if len(mechanisms) > 1:
            parts.append(mech)
        if len(pis) > 1:
            parts.append(f"pi{pi:g}")
        cell_name = "__".join(parts)

        mode = pred_raw.get("mode", BLOCK_PAIRS)
        summaries = _build_summaries(pred_raw.get("summaries", []), "predictors")
        pred = PredictorSpec(p=int(pred_raw["p"]), rho=float(rho), mode=mode,
                             summaries=summaries)
        out = OutcomeSpec(beta=beta,
                          beta0=out_raw.get("intercept"),
                          target_prevalence=float(
                              out_raw.get("target_prevalence", 0.2)))
        if out.beta.shape != (pred.n_design_columns(),):
            raise ConfigError(
                f"scenario {cell_name}: beta has {out.beta.size} entries but "
                f"the predictors span {pred.n_design_columns()} design columns")
        miss_dev = _build_missingness(miss_raw, "missingness",
                                      mechanism=mech, pi=pi)

        kwargs = dict(
            name=cell_name, pred=pred, out=out, sizing=sizing,
            miss_dev=miss_dev, miss_target=miss_target,
        )
        for key, cast in (("n_target", int), ("deltas", tuple),
                          ("methods", tuple), ("families", tuple),
                          ("repeats", int), ("base_seed", int),
                          ("eval_modes", tuple),
                          ("include_fully_observed", bool),
                          ("target_mode", str),
                          ("use_outcome_for_target_imputation", bool),
                          ("slope_band", tuple)):
            if key in raw:
                kwargs[key] = cast(raw[key])
        configs.append(ScenarioConfig(**kwargs))
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError("expanded scenario names collide; give blocks "
                          "distinct names")
    return configs


def build_scenarios(raw: dict) -> list:
    if "scenarios" in raw:
        extra = sorted(set(raw) - {"scenarios", "search_targets"})
        if extra:
            raise ConfigError(f"unknown top-level field(s) {extra}")
        blocks = raw["scenarios"]
        if not isinstance(blocks, list) or not blocks:
            raise ConfigError("scenarios must be a non-empty list")
    else:
        blocks = [raw]
    configs = []
    for block in blocks:
        configs.extend(_expand_block(block))
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names collide across blocks")
    return configs


def load_config(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path} is not valid JSON: {err}")
    return build_scenarios(raw)
