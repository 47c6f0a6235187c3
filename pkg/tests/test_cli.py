import json
from pathlib import Path

import pytest

from chaoslab.cli import (
    builtin_experiments,
    config_hash,
    list_builtin_experiments,
    load_config,
    main,
    ConfigError,
)

TINY_CONVERGE = {
    "schema_version": 1,
    "kind": "converge",
    "description": "tiny smoke study",
    "seed": 7,
    "params": {
        "kernel": {
            "kind": "fourier",
            "terms": [{"k": [0, 1], "cos": [0.0, 0.0], "sin": [0.5, 0.0]}],
        },
        "initial": {"name": "uniform-plus-mode", "amplitude": 0.5},
        "sigma": 0.1,
        "t_final": 0.02,
        "dt": 0.01,
        "n_values": [8, 12, 16],
        "m_realizations": 6,
        "bins": 8,
        "pde_n": 16,
        "calibration_replicates": 2,
    },
    "assertions": {"ckp": True},
}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_list_builtins():
    names = list_builtin_experiments()
    assert len(names) >= 5
    for expected in (
        "vortex-converge",
        "smooth-converge",
        "combinatorics-sweep",
        "mei-meii-partition",
        "cancellation-audit",
    ):
        assert expected in names
    assert all(desc for desc in names.values())


def test_builtin_configs_validate():
    for name, (_, path) in builtin_experiments().items():
        load_config(path)


def test_config_hash_stable_under_key_reordering():
    a = {"kind": "pde", "params": {"x": 1, "y": 2}}
    b = {"params": {"y": 2, "x": 1}, "kind": "pde"}
    assert config_hash(a) == config_hash(b)


def test_malformed_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    missing = tmp_path / "nope.json"
    assert main(["run", str(missing)]) == 2
    unknown = write_config(tmp_path, {"kind": "mystery"}, "unknown.json")
    assert main(["run", str(unknown)]) == 2
    invalid = write_config(
        tmp_path,
        {"kind": "converge", "params": {"kernel": {"kind": "zero", "dim": 2},
                                        "initial": {"name": "uniform"},
                                        "sigma": -1, "t_final": 1, "dt": 0.1,
                                        "n_values": [8, 12, 16],
                                        "m_realizations": 2}},
        "invalid.json",
    )
    assert main(["run", str(invalid)]) == 2


def test_tiny_converge_run_and_determinism(tmp_path):
    cfg_path = write_config(tmp_path, TINY_CONVERGE)
    out1, out2 = tmp_path / "run1", tmp_path / "run2"
    assert main(["run", str(cfg_path), "--output-dir", str(out1)]) == 0
    assert main(["run", str(cfg_path), "--output-dir", str(out2)]) == 0
    for name in ("entropy_reports.csv", "rate_fit.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    header = (out1 / "entropy_reports.csv").read_text().splitlines()[0]
    assert header == "N,M,k,t,H_k,L1,ckp_rhs,estimator,bins,seed"
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["assertions"] == {"ckp_all_pass": True}
    on_disk = sorted(p.name for p in out1.iterdir() if p.name != "manifest.json")
    assert sorted(manifest["outputs"]) == on_disk


def test_seed_override_changes_artifacts(tmp_path):
    cfg_path = write_config(tmp_path, TINY_CONVERGE)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(cfg_path), "--output-dir", str(out1)]) == 0
    assert main(["run", str(cfg_path), "--output-dir", str(out2),
                 "--seed-override", "123"]) == 0
    assert (out1 / "entropy_reports.csv").read_bytes() != (
        out2 / "entropy_reports.csv"
    ).read_bytes()
    assert json.loads((out2 / "manifest.json").read_text())["seeds"] == [123]


def test_failed_assertion_exits_1(tmp_path):
    cfg = dict(TINY_CONVERGE)
    cfg["assertions"] = {"slope_range": [0.9, 1.0]}
    cfg_path = write_config(tmp_path, cfg, "failing.json")
    out = tmp_path / "failing-out"
    assert main(["run", str(cfg_path), "--output-dir", str(out)]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["assertions"]["slope_in_range"] is False


def test_simulate_kind_snapshots(tmp_path):
    cfg = {
        "kind": "simulate",
        "seed": 3,
        "params": {
            "kernel": {"kind": "zero", "dim": 2},
            "sigma": 0.2,
            "dt": 0.01,
            "t_final": 0.05,
            "n_particles": 10,
            "m_realizations": 3,
            "output_times": [0.0, 0.05],
        },
    }
    cfg_path = write_config(tmp_path, cfg, "sim.json")
    out = tmp_path / "sim-out"
    assert main(["run", str(cfg_path), "--output-dir", str(out)]) == 0
    snaps = sorted(out.glob("snapshot_t*.csv"))
    assert len(snaps) == 2
    lines = snaps[0].read_text().splitlines()
    assert lines[0] == "realization,particle,x1,x2"
    assert len(lines) == 1 + 3 * 10


def test_pde_taylor_green_builtin(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["run", "pde-taylor-green"]) == 0
    out = tmp_path / "chaoslab-out-pde-taylor-green"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["assertions"]["decay_matches"] is True
    assert manifest["assertions"]["mass_conserved"] is True
    assert (out / "diagnostics.csv").exists()


def test_change_of_law_builtin(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["run", "change-of-law-audit"]) == 0
    out = tmp_path / "chaoslab-out-change-of-law-audit"
    payload = json.loads((out / "change_of_law.json").read_text())
    assert payload["failures"] == 0


def test_combinatorics_builtin(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["run", "combinatorics-sweep"]) == 0
    out = tmp_path / "chaoslab-out-combinatorics-sweep"
    lines = (out / "bound_reports.jsonl").read_text().splitlines()
    assert len(lines) > 2000
    first = json.loads(lines[0])
    assert {"quantity", "bound", "params", "verdict", "method"} <= set(first)


def test_partition_kind_small_budget(tmp_path):
    cfg = {
        "kind": "partition",
        "seed": 0,
        "params": {"quad_n": [2], "mc_n": [8], "mc_budget": 20000},
    }
    cfg_path = write_config(tmp_path, cfg, "part.json")
    out = tmp_path / "part-out"
    assert main(["run", str(cfg_path), "--output-dir", str(out)]) == 0
    lines = (out / "partition_reports.jsonl").read_text().splitlines()
    assert len(lines) == 4  # 2 variants x (1 quadrature + 1 MC)


def test_cancellation_builtin_small(tmp_path):
    cfg = {
        "kind": "verify-cancellation",
        "seed": 0,
        "params": {"n_particles": 3, "two_k_values": [2], "nodes": 64},
    }
    cfg_path = write_config(tmp_path, cfg, "canc.json")
    out = tmp_path / "canc-out"
    assert main(["run", str(cfg_path), "--output-dir", str(out)]) == 0
    payload = json.loads((out / "cancellation_audit.json").read_text())
    assert all(entry["passed"] for entry in payload)
