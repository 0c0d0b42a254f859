"""Tests for the command-line front end: output schema, determinism,
worker resolution, exit codes, and the closed-form subcommands."""

import csv
import hashlib
import json
import subprocess
import sys

import pytest

from misssize.cli import main

_CFG = {
    "name": "cli",
    "predictors": {"p": 3, "rho": 0.5},
    "outcome": {"beta": [0.4, 0.2, 0.1], "intercept": -1.0},
    "sizing": {"p_params": 3, "phi": 0.3, "r2_nagelkerke": 0.15},
    "n_target": 5000,
    "deltas": [1.0],
    "missingness": {"mechanism": "MAR", "pi_miss": 0.3},
    "methods": ["complete-case", "mean"],
    "families": ["mle"],
    "repeats": 3,
    "base_seed": 11,
    "search_targets": {"median_slope_min": 0.0},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(_CFG))
    return str(p)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_simulate_csv_schema_and_manifest(cfg_path, tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out", str(out)]) == 0

    header, rows = _read_csv(out / "repeats.csv")
    assert header == ["scenario_id", "delta", "repeat", "method", "family",
                      "eval_mode", "metric", "value", "flag"]
    # (reference + fully-observed + 2 methods) x 3 repeats x 7 metrics
    assert len(rows) == 4 * 3 * 7
    assert rows == sorted(rows, key=lambda r: r[:7])
    assert {r[3] for r in rows} == {"reference", "fully-observed",
                                    "complete-case", "mean"}

    sheader, srows = _read_csv(out / "summary.csv")
    assert sheader[:6] == ["scenario_id", "delta", "method", "family",
                           "eval_mode", "metric"]
    assert len(srows) == 4 * 7  # 4 cells x 7 metrics
    for r in srows:
        assert r[11] != "" and r[12] != ""  # assurance, failure_rate

    eheader, erows = _read_csv(out / "evpi.csv")
    assert eheader[5:] == ["threshold", "evpi", "nb_ref", "nb_model", "nb_all"]
    assert len(erows) == 4 * 99  # full threshold grid per cell

    man = json.loads((out / "manifest.json").read_text())
    assert man["tool_version"]
    assert man["workers"] == 1
    assert man["errors"] == []
    assert man["base_seeds"] == {"cli": 11}
    assert man["output_paths"] == {"repeats": "repeats.csv",
                                   "summary": "summary.csv",
                                   "evpi": "evpi.csv"}
    blob = json.dumps(_CFG, sort_keys=True, separators=(",", ":"))
    assert man["config_sha256"] == hashlib.sha256(blob.encode()).hexdigest()


def test_simulate_byte_identical_across_runs_and_workers(cfg_path, tmp_path):
    outs = [tmp_path / f"o{i}" for i in range(3)]
    assert main(["simulate", "--config", cfg_path, "--out", str(outs[0]),
                 "--workers", "1"]) == 0
    assert main(["simulate", "--config", cfg_path, "--out", str(outs[1]),
                 "--workers", "1"]) == 0
    assert main(["simulate", "--config", cfg_path, "--out", str(outs[2]),
                 "--workers", "2"]) == 0
    for name in ("repeats.csv", "summary.csv", "evpi.csv"):
        base = (outs[0] / name).read_bytes()
        assert (outs[1] / name).read_bytes() == base
        assert (outs[2] / name).read_bytes() == base


def test_overrides_and_env_workers(cfg_path, tmp_path, monkeypatch):
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out", str(out),
                 "--seed", "5", "--repeats", "2"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["base_seeds"] == {"cli": 5}
    _, rows = _read_csv(out / "repeats.csv")
    assert {r[2] for r in rows} == {"0", "1"}

    monkeypatch.setenv("MISSSIZE_WORKERS", "2")
    out2 = tmp_path / "env"
    assert main(["simulate", "--config", cfg_path, "--out", str(out2)]) == 0
    assert json.loads((out2 / "manifest.json").read_text())["workers"] == 2

    # explicit flag beats the environment
    out3 = tmp_path / "flag"
    assert main(["simulate", "--config", cfg_path, "--out", str(out3),
                 "--workers", "1"]) == 0
    assert json.loads((out3 / "manifest.json").read_text())["workers"] == 1

    monkeypatch.setenv("MISSSIZE_WORKERS", "lots")
    assert main(["simulate", "--config", cfg_path,
                 "--out", str(tmp_path / "bad")]) == 1


def test_exit_codes_and_stderr_json(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert "not found" in err["errors"][0]["error"]

    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(_CFG))
    assert main(["simulate", "--config", str(cfg)]) == 1  # --out required
    assert main(["search", "--config", str(cfg)]) == 1

    bad = dict(_CFG, predictors={"p": 3, "rho": 2.0})
    cfg.write_text(json.dumps(bad))
    assert main(["simulate", "--config", str(cfg),
                 "--out", str(tmp_path / "o2")]) == 1


def test_runtime_failure_exits_two(tmp_path, capsys):
    # a 2-row evaluation target draws a single outcome class and the
    # scenario dies at runtime; the error lands in stderr and the manifest
    broken = dict(_CFG, n_target=2, repeats=2,
                  outcome={"beta": [0.3, 0.2, 0.1], "intercept": -4.0},
                  methods=["mean"], base_seed=0)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(broken))
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["errors"][0]["scenario"] == "cli"
    man = json.loads((out / "manifest.json").read_text())
    assert man["errors"] == err["errors"]


def test_sizing_command_reports_reference_case(tmp_path, capsys):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps({
        "name": "ref",
        "predictors": {"p": 10, "rho": 0.5},
        "outcome": {"beta": [0.1] * 10, "target_prevalence": 0.2},
        "sizing": {"p_params": 10, "phi": 0.2, "r2_nagelkerke": 0.15},
        "deltas": [1, 1.25, 1.5, 1.75, 2],
    }))
    out = tmp_path / "out"
    assert main(["sizing", "--config", str(cfg), "--out", str(out)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n_min"] == 897
    assert payload["criteria"]["shrinkage"] == 897
    assert list(payload["delta_grid"].values()) == [897, 1121, 1346, 1570, 1794]
    on_disk = json.loads((out / "sizing.json").read_text())
    assert on_disk == payload


def test_inflate_command(capsys):
    assert main(["inflate", "--n", "897", "--pi", "0.25"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"n": 897, "pi_miss": 0.25, "n_inflated": 1196}
    assert main(["inflate", "--n", "100", "--pi", "1.0"]) == 1


def test_search_command_writes_report(cfg_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["search", "--config", cfg_path, "--out", str(out)]) == 0
    report = json.loads(capsys.readouterr().out)
    cells = report["cli"]
    assert cells  # one entry per (method, family, eval mode)
    for key, entry in cells.items():
        assert entry["achieved"] is True
        assert entry["delta"] == 1.0
        assert entry["n_dev"] >= 1
    disk = json.loads((out / "search.json").read_text())
    assert disk["results"]["cli"] == cells
    assert disk["targets"]["median_slope_min"] == 0.0
    assert disk["errors"] == []


def test_console_entry_point_installed(cfg_path, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "misssize.cli", "inflate", "--n", "100",
         "--pi", "0.5"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n_inflated"] == 200
