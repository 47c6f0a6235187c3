"""chaos-lab: batch driver for simulation, PDE, metric, and verification runs.

    chaos-lab run <config.json> [--threads N] [--seed-override S] [--output-dir D]
    chaos-lab list

Exit status: 0 all embedded assertions pass, 1 an assertion failed,
2 usage or validation error. A RunManifest is written before any compute
and finalized (status, outputs, timings) when the run ends; artifact bodies
contain no timestamps, so reruns with the same config and seed are
byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from . import __version__
from .combinatorics import write_bound_reports
from .experiments import (
    cancellation_audit_study,
    change_of_law_study,
    combinatorics_sweep,
    converge_study,
    entropy_reports_to_csv,
    partition_study,
    rate_fit_to_json,
)
from .fields import GridField
from .kernels import field_from_config, kernel_from_config
from .meanfield import PDEConfig, initial_condition, solve
from .particles import SimConfig, ensemble_to_csv, run_ensemble

KNOWN_KINDS = (
    "converge",
    "simulate",
    "pde",
    "combinatorics",
    "partition",
    "verify-cancellation",
    "change-of-law",
)

USAGE_ERROR = 2
ASSERTION_ERROR = 1


class ConfigError(ValueError):
    pass


def config_hash(cfg):
    """sha256 of the canonical JSON encoding; stable under key reordering."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path}: no such config")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    kind = cfg.get("kind")
    if kind not in KNOWN_KINDS:
        raise ConfigError(f"{path}: unknown experiment kind {kind!r}")
    _validate(cfg, path)
    return cfg


def _require(cfg, path, keys):
    params = cfg.get("params", {})
    for key in keys:
        if key not in params:
            raise ConfigError(f"{path}: params.{key} is required for kind {cfg['kind']!r}")
    return params


def _validate(cfg, path):
    kind = cfg["kind"]
    params = cfg.get("params", {})
    if kind == "converge":
        p = _require(cfg, path, ["kernel", "initial", "sigma", "t_final", "dt",
                                 "n_values", "m_realizations"])
        if p["dt"] <= 0 or p["t_final"] < p["dt"]:
            raise ConfigError(f"{path}: need 0 < dt <= t_final")
        if p["sigma"] < 0:
            raise ConfigError(f"{path}: sigma must be nonnegative")
        ns = p["n_values"]
        if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError(f"{path}: n_values must be >= 3 strictly increasing")
        if p["m_realizations"] < 1:
            raise ConfigError(f"{path}: m_realizations must be >= 1")
        kernel_from_config(p["kernel"])
    elif kind == "simulate":
        p = _require(cfg, path, ["kernel", "sigma", "t_final", "dt",
                                 "n_particles", "m_realizations"])
        if p["dt"] <= 0 or p["t_final"] < p["dt"]:
            raise ConfigError(f"{path}: need 0 < dt <= t_final")
        kernel_from_config(p["kernel"])
    elif kind == "pde":
        p = _require(cfg, path, ["initial", "sigma", "t_final", "dt", "grid_size"])
        if p["dt"] <= 0 or p["t_final"] < p["dt"]:
            raise ConfigError(f"{path}: need 0 < dt <= t_final")
        n = p["grid_size"]
        if n < 2 or n & (n - 1):
            raise ConfigError(f"{path}: grid_size must be a power of two")
    elif kind == "partition":
        p = cfg.get("params", {})
        if any(n > 4 for n in p.get("quad_n", [2, 3, 4])):
            raise ConfigError(f"{path}: quadrature mode supports N <= 4")
    # combinatorics / verify-cancellation / change-of-law have safe defaults


# ---------------------------------------------------------------------------
# manifest


class Manifest:
    def __init__(self, cfg, outdir, seed):
        self.data = {
            "config_hash": config_hash(cfg),
            "toolkit_version": __version__,
            "experiment_kind": cfg["kind"],
            "started_utc": datetime.now(timezone.utc).isoformat(),
            "finished_utc": None,
            "stage_seconds": {},
            "seeds": [seed],
            "outputs": [],
            "status": "incomplete",
            "assertions": {},
        }
        self.outdir = outdir
        self._t0 = {}
        self.write()

    def write(self):
        path = self.outdir / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def start(self, stage):
        self._t0[stage] = time.perf_counter()

    def finish(self, stage):
        self.data["stage_seconds"][stage] = round(
            time.perf_counter() - self._t0[stage], 3
        )

    def add_output(self, path):
        self.data["outputs"].append(path.name)

    def finalize(self, assertions):
        self.data["assertions"] = assertions
        self.data["status"] = "complete"
        self.data["finished_utc"] = datetime.now(timezone.utc).isoformat()
        self.write()


# ---------------------------------------------------------------------------
# runners per kind


def _run_converge(cfg, outdir, seed, threads, manifest):
    p = cfg["params"]
    manifest.start("pipeline")
    result = converge_study(
        kernel_block=p["kernel"],
        initial=p["initial"],
        sigma=p["sigma"],
        t_final=p["t_final"],
        dt=p["dt"],
        n_values=p["n_values"],
        m_realizations=p["m_realizations"],
        bins=p.get("bins", 64),
        pde_n=p.get("pde_n", 128),
        seed=seed,
        threads=threads,
        estimator=p.get("estimator", "histogram"),
        calibration_replicates=p.get("calibration_replicates", 12),
    )
    manifest.finish("pipeline")
    csv_path = outdir / "entropy_reports.csv"
    entropy_reports_to_csv(result.reports, csv_path)
    manifest.add_output(csv_path)
    fit_path = outdir / "rate_fit.json"
    rate_fit_to_json(result, fit_path)
    manifest.add_output(fit_path)

    checks = {}
    asserts = cfg.get("assertions", {})
    if "slope_range" in asserts:
        lo, hi = asserts["slope_range"]
        checks["slope_in_range"] = bool(lo <= result.fit.slope <= hi)
    if asserts.get("monotone_raw"):
        raw = [e for _, e in result.raw_points]
        checks["monotone_raw"] = all(b < a for a, b in zip(raw, raw[1:]))
    if asserts.get("ckp"):
        checks["ckp_all_pass"] = result.ckp_all_pass
    return checks


def _run_simulate(cfg, outdir, seed, threads, manifest):
    p = cfg["params"]
    kernel = kernel_from_config(p["kernel"])
    sim = SimConfig(
        kernel=kernel,
        sigma=p["sigma"],
        dt=p["dt"],
        t_final=p["t_final"],
        n_particles=p["n_particles"],
        seed=seed,
        forcing=field_from_config(p.get("forcing"), kernel.d),
        initial=p.get("initial"),
        output_times=tuple(p.get("output_times", [])),
        reject_flagged=p.get("reject_flagged", False),
    )
    manifest.start("simulate")
    ens = run_ensemble(sim, p["m_realizations"], base_seed=seed, threads=threads)
    manifest.finish("simulate")
    for idx, t in enumerate(ens.times):
        path = outdir / f"snapshot_t{t:.6f}.csv"
        ensemble_to_csv(ens, idx, path)
        manifest.add_output(path)
    summary = outdir / "flagged.json"
    summary.write_text(json.dumps(
        {"flagged_steps_per_realization": ens.flagged.tolist()}, sort_keys=True
    ) + "\n")
    manifest.add_output(summary)
    return {}


def _run_pde(cfg, outdir, seed, threads, manifest):
    p = cfg["params"]
    init = initial_condition(
        p["initial"]["name"], p["grid_size"], p.get("dim", 2),
        amplitude=p["initial"].get("amplitude", 0.5), seed=seed,
    )
    kernel = kernel_from_config(p["kernel"]) if "kernel" in p else None
    pde_cfg = PDEConfig(sigma=p["sigma"], dt=p["dt"], kernel=kernel)
    manifest.start("solve")
    result = solve(init, pde_cfg, p["t_final"], output_times=p.get("output_times"))
    manifest.finish("solve")
    for snap in result.snapshots:
        path = outdir / f"field_t{snap.time:.6f}.bin"
        snap.save(path)
        manifest.add_output(path)
    diag_path = outdir / "diagnostics.csv"
    with open(diag_path, "w") as fh:
        fh.write("time,mass,min,max,l2\n")
        for d in result.diagnostics:
            fh.write(f"{d['time']!r},{d['mass']!r},{d['min']!r},{d['max']!r},{d['l2']!r}\n")
    manifest.add_output(diag_path)

    checks = {}
    asserts = cfg.get("assertions", {})
    if "decay_rate" in asserts:
        import math

        rate = asserts["decay_rate"]  # e.g. 8 pi^2 sigma for Taylor-Green
        tol = asserts.get("decay_rtol", 1e-4)
        first, last = result.snapshots[0], result.snapshots[-1]
        measured = last.values.max() / first.values.max()
        target = math.exp(-rate * (last.time - first.time))
        checks["decay_matches"] = bool(abs(measured - target) <= tol * target)
    if asserts.get("mass_conservation"):
        drift = abs(result.diagnostics[-1]["mass"] - result.diagnostics[0]["mass"])
        checks["mass_conserved"] = bool(drift < 1e-12)
    return checks


def _run_combinatorics(cfg, outdir, seed, threads, manifest):
    p = cfg.get("params", {})
    manifest.start("sweep")
    reports, failures = combinatorics_sweep(**p)
    manifest.finish("sweep")
    path = outdir / "bound_reports.jsonl"
    write_bound_reports(reports, path)
    manifest.add_output(path)
    return {"all_bounds_hold": not failures}


def _run_partition(cfg, outdir, seed, threads, manifest):
    p = dict(cfg.get("params", {}))
    p.setdefault("seed", seed)
    manifest.start("partition")
    reports, failures = partition_study(**p)
    manifest.finish("partition")
    path = outdir / "partition_reports.jsonl"
    write_bound_reports(reports, path)
    manifest.add_output(path)
    return {"all_bounds_hold": not failures}


def _run_cancellation(cfg, outdir, seed, threads, manifest):
    p = cfg.get("params", {})
    manifest.start("audit")
    summaries, failures = cancellation_audit_study(
        n_particles=p.get("n_particles", 3),
        two_k_values=tuple(p.get("two_k_values", (2, 4))),
        nodes=p.get("nodes", 128),
    )
    manifest.finish("audit")
    path = outdir / "cancellation_audit.json"
    payload = [
        {
            "function": name,
            "two_k": s.two_k,
            "pairs_tested": s.pairs_tested,
            "max_outside": s.max_outside,
            "min_witness": s.min_witness,
            "passed": s.passed,
        }
        for name, s in summaries
    ]
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    manifest.add_output(path)
    return {"all_vanish_and_witnessed": not failures}


def _run_change_of_law(cfg, outdir, seed, threads, manifest):
    p = cfg.get("params", {})
    manifest.start("audit")
    summary = change_of_law_study(
        instances=p.get("instances", 10_000),
        space=p.get("space", 8),
        seed=seed,
    )
    manifest.finish("audit")
    path = outdir / "change_of_law.json"
    path.write_text(json.dumps(summary, sort_keys=True) + "\n")
    manifest.add_output(path)
    return {"all_instances_pass": summary["failures"] == 0}


_RUNNERS = {
    "converge": _run_converge,
    "simulate": _run_simulate,
    "pde": _run_pde,
    "combinatorics": _run_combinatorics,
    "partition": _run_partition,
    "verify-cancellation": _run_cancellation,
    "change-of-law": _run_change_of_law,
}


# ---------------------------------------------------------------------------
# built-in experiments


def builtin_experiments():
    """Shipped configs, name -> (description, path)."""
    out = {}
    root = resources.files("chaoslab") / "configs"
    for entry in sorted(root.iterdir()):
        if entry.name.endswith(".json"):
            cfg = json.loads(entry.read_text())
            out[entry.name[:-5]] = (cfg.get("description", ""), entry)
    return out


def list_builtin_experiments():
    return {name: desc for name, (desc, _) in builtin_experiments().items()}


# ---------------------------------------------------------------------------
# entry point


def main(argv=None):
    parser = argparse.ArgumentParser(prog="chaos-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("config", help="path to a config or a built-in name")
    runp.add_argument("--threads", type=int, default=1)
    runp.add_argument("--seed-override", type=int, default=None)
    runp.add_argument("--output-dir", default=None)
    sub.add_parser("list", help="list built-in experiments")
    args = parser.parse_args(argv)

    if args.command == "list":
        for name, desc in list_builtin_experiments().items():
            print(f"{name}: {desc}")
        return 0
    if args.command != "run":
        parser.print_help()
        return USAGE_ERROR

    try:
        builtins = builtin_experiments()
        if args.config in builtins:
            cfg = load_config(builtins[args.config][1])
            default_out = args.config
        else:
            cfg = load_config(args.config)
            default_out = Path(args.config).stem
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR

    seed = args.seed_override if args.seed_override is not None else cfg.get("seed", 0)
    outdir = Path(args.output_dir or f"chaoslab-out-{default_out}")
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(cfg, outdir, seed)
    try:
        checks = _RUNNERS[cfg["kind"]](cfg, outdir, seed, args.threads, manifest)
    except Exception as exc:
        manifest.data["error"] = f"{type(exc).__name__}: {exc}"
        manifest.write()
        raise
    manifest.finalize({k: bool(v) for k, v in checks.items()})
    failed = [k for k, v in checks.items() if not v]
    for k, v in checks.items():
        print(f"{k}: {'pass' if v else 'FAIL'}")
    return ASSERTION_ERROR if failed else 0


if __name__ == "__main__":
    sys.exit(main())
