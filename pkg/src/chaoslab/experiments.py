"""Batch pipelines behind the CLI and the acceptance suite.

The convergence study measures the propagation-of-chaos rate: simulate
ensembles at increasing N, estimate the first marginal, compare in L1
against the PDE reference solved on the same kernel, subtract the
estimator-noise floor measured by resampling the reference itself, and fit
the log-log slope with an ensemble-bootstrap confidence interval.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .combinatorics import (
    BoundReport,
    binom_bound_check,
    count_compositions,
    effective_set,
    j_set_sweep,
    multinomial_sum_identity,
    stirling_factors,
    theorem3_constant,
    THEOREM4_UNIVERSAL_C,
)
from .fields import GridField
from .kernels import field_from_config, kernel_from_config
from .meanfield import PDEConfig, initial_condition, solve
from .metrics import (
    EntropyReport,
    ckp_check,
    ckp_rhs,
    entropy_report,
    estimate_marginal,
    fit_rate,
    l1_distance,
    per_realization_counts,
    relative_entropy,
)
from .particles import SimConfig, run_ensemble
from .partition import (
    cancellation_audit,
    change_of_law_check,
    growth_norm,
    partition_function,
)
from .testfunctions import BUILTIN_TEST_FUNCTIONS

__all__ = [
    "ConvergeResult",
    "converge_study",
    "binned_reference",
    "estimator_noise_floor",
    "combinatorics_sweep",
    "partition_study",
    "cancellation_audit_study",
    "change_of_law_study",
    "entropy_reports_to_csv",
    "rate_fit_to_json",
]

ENTROPY_CSV_COLUMNS = [
    "N", "M", "k", "t", "H_k", "L1", "ckp_rhs", "estimator", "bins", "seed",
]


def binned_reference(field_128, bins):
    """Cell-average a PDE density onto the histogram grid (factor-of-2 nests)."""
    n = field_128.n
    if n % bins:
        raise ValueError("PDE grid must refine the histogram grid")
    f = n // bins
    v = field_128.values
    for axis in range(field_128.d):
        shape = v.shape[:axis] + (bins, f) + v.shape[axis + 1 :]
        v = v.reshape(shape).mean(axis=axis + 1)
    v = v / v.mean()
    return GridField(v, "density", field_128.time)


def _sample_binned(reference, count, rng):
    """i.i.d. draws from a piecewise-constant density: cell then uniform."""
    probs = reference.values.ravel() * reference.cell_volume()
    probs = probs / probs.sum()
    cells = rng.choice(probs.size, size=count, p=probs)
    idx = np.unravel_index(cells, reference.values.shape)
    bins = reference.values.shape[0]
    return (np.stack(idx, axis=-1) + rng.random((count, reference.d))) / bins


def estimator_noise_floor(reference, sample_count, rng, replicates=3):
    """Mean L1 error of the histogram estimator on i.i.d. reference draws."""
    bins = reference.values.shape[0]
    floors = []
    for _ in range(replicates):
        samples = _sample_binned(reference, sample_count, rng)
        est = estimate_marginal(samples, 1, bins=bins)
        floors.append(l1_distance(est.density, reference))
    return float(np.mean(floors))


@dataclass
class ConvergeResult:
    reports: list  # EntropyReport per N
    floors: dict  # N -> estimator noise floor
    corrected: list  # (N, L1 - floor)
    fit: object  # RateFit on the corrected errors
    monotone: bool  # corrected errors strictly decreasing in N
    ckp_all_pass: bool
    flagged: dict  # N -> flagged close-encounter steps
    pde_diagnostics: list
    raw_points: list = field(default_factory=list)

    def to_json(self):
        return {
            "slope": self.fit.slope,
            "ci": [self.fit.ci_low, self.fit.ci_high],
            "points": self.corrected,
            "raw_points": self.raw_points,
            "floors": {str(k): v for k, v in self.floors.items()},
            "monotone": self.monotone,
            "ckp_all_pass": self.ckp_all_pass,
            "flagged": {str(k): int(v) for k, v in self.flagged.items()},
        }


def converge_study(
    kernel_block,
    initial,
    sigma,
    t_final,
    dt,
    n_values,
    m_realizations,
    bins=64,
    pde_n=128,
    pde_dt=None,
    seed=0,
    threads=1,
    estimator="histogram",
    calibration_replicates=3,
    floor_clip=1e-4,
    n_boot=400,
):
    """Full chaos-rate pipeline for one kernel; see module docstring."""
    kernel = kernel_from_config(kernel_block)
    d = kernel.d

    init_field = initial_condition(initial["name"], pde_n, d,
                                   amplitude=initial.get("amplitude", 0.5))
    pde_cfg = PDEConfig(sigma=sigma, dt=pde_dt or dt, kernel=kernel)
    pde = solve(init_field, pde_cfg, t_final)
    reference = binned_reference(pde.final(), bins)

    reports, corrected, floors, flagged = [], [], {}, {}
    replicate_errors = {}
    raw_points = []
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xF,)))
    for n_particles in n_values:
        cfg = SimConfig(
            kernel=kernel,
            sigma=sigma,
            dt=dt,
            t_final=t_final,
            n_particles=n_particles,
            seed=seed,
            initial=initial,
            output_times=(t_final,),
        )
        ens = run_ensemble(cfg, m_realizations, base_seed=seed, threads=threads)
        flagged[n_particles] = int(ens.flagged.sum())
        marginal = estimate_marginal(ens, 1, bins=bins, t=t_final,
                                     estimator=estimator)
        rep = entropy_report(
            marginal, reference, n_particles, t_final,
            n_realizations=m_realizations, seed=seed,
        )
        reports.append(rep)
        floor = estimator_noise_floor(
            reference, m_realizations * n_particles, rng,
            replicates=calibration_replicates,
        )
        floors[n_particles] = floor
        raw_points.append((n_particles, rep.l1))
        corrected.append((n_particles, max(rep.l1 - floor, floor_clip)))

        counts = per_realization_counts(ens, bins, t=t_final)
        cellvol = bins ** (-d)
        boot_rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(0xB, n_particles))
        )
        reps = []
        for _ in range(n_boot):
            take = boot_rng.integers(0, m_realizations, m_realizations)
            dens = counts[take].sum(axis=0)
            dens = dens / (dens.sum() * cellvol)
            l1 = float(np.abs(dens - reference.values).sum() * cellvol)
            reps.append(max(l1 - floor, floor_clip))
        replicate_errors[n_particles] = reps

    fit = fit_rate(corrected, replicate_errors=replicate_errors, seed=seed)
    errs = [e for _, e in corrected]
    monotone = all(errs[i + 1] < errs[i] for i in range(len(errs) - 1))
    return ConvergeResult(
        reports,
        floors,
        corrected,
        fit,
        monotone,
        all(ckp_check(r) for r in reports),
        flagged,
        pde.diagnostics,
        raw_points,
    )


def entropy_reports_to_csv(reports, path, mode="w"):
    new = mode == "w"
    with open(path, mode) as fh:
        if new:
            fh.write(",".join(ENTROPY_CSV_COLUMNS) + "\n")
        for r in reports:
            fh.write(
                f"{r.n_particles},{r.n_realizations},{r.k},{r.t!r},{r.h_k!r},"
                f"{r.l1!r},{r.ckp_rhs!r},{r.estimator},{r.bins},{r.seed}\n"
            )


def rate_fit_to_json(result, path):
    with open(path, "w") as fh:
        json.dump(result.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# verification studies


def combinatorics_sweep(
    q_binom=64, q_comp=20, eq31_q=5, eq31_p=8, qp_q=12, qp_p=8,
    jset_n=8, jset_k=3, stirling_n=50,
):
    """The full exact-count certification; returns (reports, failures)."""
    reports = []
    for n in range(1, stirling_n + 1):
        lam = stirling_factors(n)
        reports.append(
            BoundReport("stirling_lambda", lam, 1.1, {"n": n},
                        1.0 < lam < 1.1, "enumeration")
        )
    for q in range(1, q_binom + 1):
        for p in range(1, q + 1):
            reports.append(binom_bound_check(q, p))
    for q in range(1, q_comp + 1):
        for p in range(1, q + 1):
            enum, formula = count_compositions(q, p)
            reports.append(
                BoundReport("compositions", float(enum), float(formula),
                            {"q": q, "p": p}, enum == formula, "enumeration")
            )
    for q in range(1, eq31_q + 1):
        for p in range(1, eq31_p + 1):
            total, power = multinomial_sum_identity(q, p)
            reports.append(
                BoundReport("multinomial_sum", float(total), float(power),
                            {"q": q, "p": p}, total == power, "enumeration")
            )
    for q in range(1, qp_q + 1):
        for p in range(1, qp_p + 1):
            reports.append(effective_set(q, p))
    for n in range(1, jset_n + 1):
        for k in range(1, jset_k + 1):
            reports.extend(j_set_sweep(n, k))
    failures = [r for r in reports if not r.verdict]
    return reports, failures


def partition_study(
    quad_n=(2, 3, 4),
    mc_n=(16, 64),
    mc_budget=1_000_000,
    mei_amplitude=0.1,
    meii_gamma=0.5,
    seed=0,
):
    """Certify the two exponential-moment bounds on the spec instances."""
    mei = BUILTIN_TEST_FUNCTIONS["mei-default"].scaled(mei_amplitude / 0.1)
    mei.verify_cancellations()
    meii_unit = BUILTIN_TEST_FUNCTIONS["meii-default"]
    eps = math.sqrt(meii_gamma / THEOREM4_UNIVERSAL_C) / growth_norm(meii_unit).value
    meii = meii_unit.scaled(eps)
    meii.verify_cancellations()

    reports = []
    for n in quad_n:
        reports.append(
            partition_function(mei, n, mode="quadrature", variant="squared-sum")
        )
        reports.append(
            partition_function(meii, n, mode="quadrature", variant="double-sum")
        )
    for i, n in enumerate(mc_n):
        reports.append(
            partition_function(mei, n, mode="monte-carlo", variant="squared-sum",
                               budget=mc_budget, seed=seed + 2 * i)
        )
        reports.append(
            partition_function(meii, n, mode="monte-carlo", variant="double-sum",
                               budget=mc_budget, seed=seed + 2 * i + 1)
        )
    failures = [r for r in reports if not r.verdict]
    return reports, failures


def cancellation_audit_study(
    n_particles=3, two_k_values=(2, 4), nodes=128,
    function_names=("audit-cc", "audit-mixed", "audit-two-mode"),
):
    summaries = []
    for name in function_names:
        tf = BUILTIN_TEST_FUNCTIONS[name].verify_cancellations()
        for two_k in two_k_values:
            s = cancellation_audit(tf, n_particles, two_k, nodes=nodes)
            summaries.append((name, s))
    failures = [(n, s) for n, s in summaries if not s.passed]
    return summaries, failures


def change_of_law_study(instances=10_000, space=8, seed=0, tol=1e-12):
    rng = np.random.default_rng(seed)
    worst_gap = -np.inf
    fails = 0
    for _ in range(instances):
        rho = rng.random(space) + 1e-3
        rho /= rho.sum()
        rho_bar = rng.random(space) + 1e-3
        rho_bar /= rho_bar.sum()
        phi = rng.normal(size=space) * rng.uniform(0.1, 3.0)
        eta = rng.uniform(0.05, 10.0)
        n_param = int(rng.integers(1, 64))
        lhs, rhs, ok = change_of_law_check(rho, rho_bar, phi, eta, n_param, tol)
        worst_gap = max(worst_gap, lhs - rhs)
        fails += not ok
    return {"instances": instances, "failures": fails, "worst_gap": worst_gap}
