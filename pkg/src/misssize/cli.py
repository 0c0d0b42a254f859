"""Batch command-line front end.

Subcommands: ``sizing`` (closed-form criteria only), ``simulate`` (run the
scenario grid and emit CSVs), ``search`` (grow-the-sample loop), and
``inflate`` (the 1/(1 - pi_miss) rule of thumb).  Exit codes: 0 success,
1 validation error, 2 runtime failure; errors are also written to stderr
as a JSON list so wrappers can parse them.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import build_scenarios, build_search_targets, load_config
from .engine import SCALAR_METRICS, CellSummary, run_scenario, search_min_n, summarize
from .errors import ConfigError, MissSizeError
from .sizing import delta_grid, inflate_for_missingness, riley_binary_min_n

WORKERS_ENV = "MISSSIZE_WORKERS"


def _json_default(x):
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return None if not math.isfinite(float(x)) else float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x)!r}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        return ""
    return f"{x:.6g}"


def _atomic_write(path: str, write_fn):
    """Write via a temp file in the same directory, then rename."""
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: list, rows: list):
    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    _atomic_write(path, write)


def emit_results(results: list, summaries: dict, out_dir: str,
                 manifest: dict) -> dict:
    """Write repeats.csv / summary.csv / evpi.csv / manifest.json."""
    os.makedirs(out_dir, exist_ok=True)

    rep_rows = []
    for rr in results:
        for rec in rr.records:
            flag = rec.flags()
            for metric in SCALAR_METRICS:
                rep_rows.append((rr.scenario, rr.delta, rr.repeat_idx,
                                 rec.method, rec.family, rec.eval_mode,
                                 metric, getattr(rec, metric), flag))
    rep_rows.sort(key=lambda r: r[:7])
    rep_path = os.path.join(out_dir, "repeats.csv")
    _write_csv(rep_path,
               ["scenario_id", "delta", "repeat", "method", "family",
                "eval_mode", "metric", "value", "flag"],
               [(s, _fmt(d), r, m, f, e, met, _fmt(v), fl)
                for s, d, r, m, f, e, met, v, fl in rep_rows])

    sum_rows = []
    evpi_rows = []
    for key in sorted(summaries):
        cs: CellSummary = summaries[key]
        for metric in SCALAR_METRICS:
            med = cs.medians.get(metric)
            pct = cs.percentiles.get(metric, {})
            sum_rows.append((cs.scenario, _fmt(cs.delta), cs.method, cs.family,
                             cs.eval_mode, metric, _fmt(med),
                             _fmt(pct.get(2.5)), _fmt(pct.get(25.0)),
                             _fmt(pct.get(75.0)), _fmt(pct.get(97.5)),
                             _fmt(cs.assurance), _fmt(cs.failure_rate)))
        if cs.evpi is not None:
            for i, t in enumerate(cs.thresholds):
                evpi_rows.append((cs.scenario, _fmt(cs.delta), cs.method,
                                  cs.family, cs.eval_mode, _fmt(t),
                                  _fmt(cs.evpi[i]), _fmt(cs.nb_ref[i]),
                                  _fmt(cs.nb_model[i]), _fmt(cs.nb_all[i])))
    sum_path = os.path.join(out_dir, "summary.csv")
    _write_csv(sum_path,
               ["scenario_id", "delta", "method", "family", "eval_mode",
                "metric", "median", "p2.5", "p25", "p75", "p97.5",
                "assurance", "failure_rate"], sum_rows)
    evpi_path = os.path.join(out_dir, "evpi.csv")
    _write_csv(evpi_path,
               ["scenario_id", "delta", "method", "family", "eval_mode",
                "threshold", "evpi", "nb_ref", "nb_model", "nb_all"],
               evpi_rows)

    manifest = dict(manifest)
    manifest["output_paths"] = {
        "repeats": os.path.basename(rep_path),
        "summary": os.path.basename(sum_path),
        "evpi": os.path.basename(evpi_path),
    }
    man_path = os.path.join(out_dir, "manifest.json")
    _atomic_write(man_path, lambda fh: json.dump(manifest, fh, indent=2,
                                                 sort_keys=True))
    return {"repeats": rep_path, "summary": sum_path, "evpi": evpi_path,
            "manifest": man_path}


def _config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _resolve_workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}")
    return 1


def _load_raw(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path} is not valid JSON: {err}")


def _apply_overrides(cfgs: list, args) -> list:
    out = []
    for cfg in cfgs:
        changes = {}
        if args.seed is not None:
            changes["base_seed"] = args.seed
        if args.repeats is not None:
            changes["repeats"] = args.repeats
        out.append(dataclasses.replace(cfg, **changes) if changes else cfg)
    return out


def _errors_out(errors: list):
    print(json.dumps({"errors": errors}), file=sys.stderr)


def _cmd_sizing(args) -> int:
    raw = _load_raw(args.config)
    block = raw["scenarios"][0] if "scenarios" in raw else raw
    if "sizing" not in block:
        raise ConfigError("config has no sizing section")
    from .config import _build_sizing  # shared strict parser
    inputs = _build_sizing(block["sizing"], "sizing")
    res = riley_binary_min_n(inputs)
    deltas = block.get("deltas", [1, 1.25, 1.5, 1.75, 2])
    grid = delta_grid(res.n_min, deltas)
    payload = {
        "n_min": res.n_min,
        "criteria": {"shrinkage": res.n_criterion1,
                     "optimism": res.n_criterion2,
                     "intercept_precision": res.n_criterion3},
        "r2_cs": res.r2_cs, "r2_cs_max": res.r2_cs_max,
        "events_per_parameter": res.epp,
        "delta_grid": {_fmt(d): n for d, n in zip(deltas, grid)},
    }
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write(os.path.join(args.out, "sizing.json"),
                      lambda fh: fh.write(text + "\n"))
    return 0


def _cmd_simulate(args) -> int:
    raw = _load_raw(args.config)
    cfgs = _apply_overrides(build_scenarios(raw), args)
    workers = _resolve_workers(args)
    started = datetime.now(timezone.utc).isoformat()

    all_results = []
    summaries = {}
    errors = []
    for cfg in cfgs:
        try:
            results = run_scenario(cfg, workers=workers)
        except MissSizeError as err:
            errors.append({"scenario": cfg.name, "error": str(err)})
            continue
        all_results.extend(results)
        summaries.update(summarize(results, cfg.slope_band))

    manifest = {
        "tool_version": __version__,
        "config": raw,
        "config_sha256": _config_hash(raw),
        "base_seeds": {c.name: c.base_seed for c in cfgs},
        "workers": workers,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "errors": errors,
    }
    emit_results(all_results, summaries, args.out, manifest)
    if errors:
        _errors_out(errors)
        return 2
    return 0


def _cmd_search(args) -> int:
    raw = _load_raw(args.config)
    cfgs = _apply_overrides(build_scenarios(raw), args)
    workers = _resolve_workers(args)

    block = raw["scenarios"][0] if "scenarios" in raw else raw
    targets_raw = raw.get("search_targets") or block.get("search_targets")
    if targets_raw is None:
        raise ConfigError("search needs a search_targets section")
    targets = build_search_targets(targets_raw)

    started = datetime.now(timezone.utc).isoformat()
    report = {}
    errors = []
    for cfg in cfgs:
        try:
            rec = search_min_n(cfg, targets, workers=workers)
        except MissSizeError as err:
            errors.append({"scenario": cfg.name, "error": str(err)})
            continue
        report[cfg.name] = {
            f"{m}/{f}/{e}": {
                "achieved": v["achieved"],
                "delta": v["delta"],
                "n_dev": v["n_dev"],
                "median_slope": v["summary"].medians.get("slope"),
                "assurance": v["summary"].assurance,
            }
            for (m, f, e), v in sorted(rec.items())
        }

    os.makedirs(args.out, exist_ok=True)
    payload = {
        "tool_version": __version__,
        "config_sha256": _config_hash(raw),
        "targets": dataclasses.asdict(targets),
        "results": report,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "errors": errors,
    }
    _atomic_write(os.path.join(args.out, "search.json"),
                  lambda fh: json.dump(payload, fh, indent=2, sort_keys=True,
                                       default=_json_default))
    print(json.dumps(report, indent=2, default=_json_default))
    if errors:
        _errors_out(errors)
        return 2
    return 0


def _cmd_inflate(args) -> int:
    n = inflate_for_missingness(args.n, args.pi)
    print(json.dumps({"n": args.n, "pi_miss": args.pi, "n_inflated": n}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="misssize",
        description="Simulation-based sample-size analysis for prediction "
                    "models developed with missing predictor data.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="JSON scenario config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help=f"parallel workers (default: ${WORKERS_ENV} or 1)")
        p.add_argument("--seed", type=int, default=None,
                       help="override base_seed in every scenario")
        p.add_argument("--repeats", type=int, default=None,
                       help="override repeats in every scenario")

    p_siz = sub.add_parser("sizing", help="closed-form minimum sample size")
    common(p_siz)

    p_sim = sub.add_parser("simulate", help="run the scenario grid")
    common(p_sim)

    p_sea = sub.add_parser("search", help="grow N_dev until targets are met")
    common(p_sea)

    p_inf = sub.add_parser("inflate", help="inflate n for expected missingness")
    p_inf.add_argument("--n", type=int, required=True)
    p_inf.add_argument("--pi", type=float, required=True)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "sizing":
            return _cmd_sizing(args)
        if args.command == "inflate":
            return _cmd_inflate(args)
        if args.command in ("simulate", "search") and not args.out:
            raise ConfigError(f"{args.command} requires --out")
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_search(args)
    except ConfigError as err:
        _errors_out([{"error": str(err)}])
        return 1
    except MissSizeError as err:
        _errors_out([{"error": str(err)}])
        return 2


if __name__ == "__main__":
    sys.exit(main())
