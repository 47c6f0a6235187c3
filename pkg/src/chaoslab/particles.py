"""Euler-Maruyama integration of the N-particle interacting SDE.

dX_i = F(X_i) dt + (1/N) sum_{j != i} K(X_i - X_j) dt + sqrt(2 sigma) dW_i

Realizations are reproducible: realization m uses the Philox counter-based
generator keyed by SeedSequence(base_seed, spawn_key=(m,)), so ensembles are
byte-identical for any worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _pairwise
from .fields import GridField
from .kernels import BiotSavartKernel, FourierKernel, ZeroKernel, eval_kernel
from .torus import displacement, wrap

__all__ = [
    "ParticleState",
    "SimConfig",
    "Ensemble",
    "Trajectory",
    "NonFiniteDriftError",
    "pairwise_drift",
    "pairwise_drift_reference",
    "step",
    "simulate",
    "run_ensemble",
    "sample_initial_positions",
    "ensemble_to_csv",
]

DRIFT_GUARD = 0.25  # flag steps moving a particle more than a quarter torus


class NonFiniteDriftError(RuntimeError):
    pass


@dataclass
class ParticleState:
    positions: np.ndarray  # (N, d), wrapped into [0,1)^d
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))

    @property
    def n_particles(self):
        return self.positions.shape[0]

    @property
    def d(self):
        return self.positions.shape[1]


@dataclass
class SimConfig:
    kernel: object
    sigma: float
    dt: float
    t_final: float
    n_particles: int
    seed: int = 0
    forcing: object = None  # confinement F, or None
    initial: object = None  # density spec for i.i.d. initial data
    output_times: tuple = ()
    reject_flagged: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


# ---------------------------------------------------------------------------
# drift


def pairwise_drift(positions, kernel, forcing=None):
    """drift_i = F(X_i) + (1/N) sum_j K(X_i - X_j); O(N^2), parallel over i."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if kernel.d != positions.shape[1]:
        raise ValueError("kernel dimension does not match particle dimension")
    if isinstance(kernel, ZeroKernel):
        out = np.zeros_like(positions)
    elif isinstance(kernel, FourierKernel):
        out = _pairwise.drift_fourier(
            positions, kernel.wavevectors, kernel.cos_amps, kernel.sin_amps
        )
    elif isinstance(kernel, BiotSavartKernel):
        out = _pairwise.drift_biot_savart(
            positions, kernel.remainder_table, kernel.alpha, kernel.delta
        )
    else:
        out = pairwise_drift_reference(positions, kernel)
    if forcing is not None:
        out = out + forcing(positions)
    return out


def pairwise_drift_reference(positions, kernel, forcing=None):
    """Vectorized numpy evaluation of the same sum; the cross-check oracle."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    n = positions.shape[0]
    disp = displacement(positions[:, None, :], positions[None, :, :])
    vals = eval_kernel(kernel, disp)  # (N, N, d); diagonal is K(0) = 0
    out = vals.sum(axis=1) / n
    if forcing is not None:
        out = out + forcing(positions)
    return out


# ---------------------------------------------------------------------------
# time stepping


def _advance(positions, cfg, rng):
    """One Euler-Maruyama step on raw arrays; returns (positions, n_flagged)."""
    drift = pairwise_drift(positions, cfg.kernel, cfg.forcing)
    if not np.all(np.isfinite(drift)):
        bad = int(np.argwhere(~np.isfinite(drift).all(axis=1))[0, 0])
        raise NonFiniteDriftError(f"non-finite drift for particle {bad}")
    move = np.linalg.norm(drift, axis=1) * cfg.dt
    flagged = int((move > DRIFT_GUARD).sum())
    new = positions + drift * cfg.dt
    if cfg.sigma > 0.0:
        new = new + np.sqrt(2.0 * cfg.sigma * cfg.dt) * rng.standard_normal(
            positions.shape
        )
    return wrap(new), flagged


def step(state, cfg, rng):
    """Single Euler-Maruyama step; bit-reproducible for a fixed rng stream."""
    positions, _ = _advance(state.positions, cfg, rng)
    return ParticleState(positions, state.time + cfg.dt)


@dataclass
class Trajectory:
    states: list
    flagged_steps: int = 0

    def final(self):
        return self.states[-1]


def simulate(cfg, initial_positions=None, rng=None):
    """Integrate to t_final, snapshotting at cfg.output_times (plus t_final)."""
    if rng is None:
        rng = _realization_rng(cfg.seed, 0)
    if initial_positions is None:
        positions = sample_initial_positions(
            cfg.initial, cfg.n_particles, cfg.kernel.d, rng
        )
    else:
        positions = wrap(np.atleast_2d(np.asarray(initial_positions, dtype=float)))
    n_steps = int(round(cfg.t_final / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_final) > 1e-9 * max(1.0, cfg.t_final):
        raise ValueError("t_final must be a multiple of dt")
    out_steps = sorted(
        {int(round(t / cfg.dt)) for t in cfg.output_times} | {n_steps}
    )
    if out_steps[0] < 0 or out_steps[-1] > n_steps:
        raise ValueError("output times outside [0, t_final]")

    states = []
    flagged_total = 0
    if 0 in out_steps:
        states.append(ParticleState(positions.copy(), 0.0))
    for s in range(1, n_steps + 1):
        positions, flagged = _advance(positions, cfg, rng)
        flagged_total += flagged
        if s in out_steps:
            states.append(ParticleState(positions.copy(), s * cfg.dt))
    return Trajectory(states, flagged_total)


# ---------------------------------------------------------------------------
# ensembles


@dataclass
class Ensemble:
    times: np.ndarray  # (T,)
    positions: np.ndarray  # (M, T, N, d)
    seeds: np.ndarray  # (M,) distinct derived 64-bit seed words
    base_seed: int
    flagged: np.ndarray = field(default=None)  # (M,) guard hits per realization

    @property
    def n_realizations(self):
        return self.positions.shape[0]

    @property
    def n_particles(self):
        return self.positions.shape[2]

    @property
    def d(self):
        return self.positions.shape[3]

    def at_time(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9:
            raise KeyError(f"no snapshot at t = {t}")
        return self.positions[:, idx]


def _realization_rng(base_seed, index):
    seq = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seq))


def _realization_seed(base_seed, index):
    """The derived 64-bit seed word for realization `index`."""
    seq = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return int(seq.generate_state(1, np.uint64)[0])


def _run_one(args):
    cfg, base_seed, index = args
    rng = _realization_rng(base_seed, index)
    traj = simulate(cfg, rng=rng)
    return (
        index,
        np.stack([s.positions for s in traj.states]),
        np.array([s.time for s in traj.states]),
        traj.flagged_steps,
    )


def run_ensemble(cfg, n_realizations, base_seed=None, threads=1):
    """M independent realizations with seeds split from base_seed.

    Embarrassingly parallel; results are merged by realization index, so the
    output is identical for any thread count.
    """
    if n_realizations < 1:
        raise ValueError("need at least one realization")
    if base_seed is None:
        base_seed = cfg.seed
    jobs = [(cfg, base_seed, m) for m in range(n_realizations)]
    results = [None] * n_realizations
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for index, pos, times, flagged in pool.map(_run_one, jobs, chunksize=4):
                results[index] = (pos, times, flagged)
    else:
        for job in jobs:
            index, pos, times, flagged = _run_one(job)
            results[index] = (pos, times, flagged)
    times = results[0][1]
    positions = np.stack([r[0] for r in results])
    flagged = np.array([r[2] for r in results])
    seeds = np.array(
        [_realization_seed(base_seed, m) for m in range(n_realizations)],
        dtype=np.uint64,
    )
    ens = Ensemble(times, positions, seeds, base_seed, flagged)
    if cfg.reject_flagged and flagged.any():
        keep = flagged == 0
        ens = Ensemble(
            times, positions[keep], ens.seeds[keep], base_seed, flagged[keep]
        )
    return ens


# ---------------------------------------------------------------------------
# initial data


def _density_function(spec, d):
    """(pointwise density, sup bound) for a density spec."""
    if spec is None or spec == "uniform" or spec == {"name": "uniform"}:
        return None, 1.0
    if isinstance(spec, GridField):
        if spec.kind != "density":
            raise ValueError("initial field must be a density")
        vals = spec.values
        n = spec.n

        def fn(x):
            idx = tuple(
                np.clip((x[..., j] * n).astype(int), 0, n - 1) for j in range(d)
            )
            return vals[idx]

        return fn, float(vals.max()) * 1.0000001
    if isinstance(spec, tuple):
        fn, bound = spec  # (pointwise density, sup bound)
        return fn, bound
    name = spec["name"]
    amp = float(spec.get("amplitude", 0.5))
    if name == "uniform-plus-mode":
        return (lambda x: 1.0 + amp * np.sin(2 * np.pi * x[..., 0])), 1.0 + amp
    if name == "taylor-green-shifted":
        if d != 2:
            raise ValueError("taylor-green-shifted needs d = 2")
        return (
            lambda x: 1.0
            + amp * np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])
        ), 1.0 + amp
    raise ValueError(f"unknown initial density {name!r}")


def sample_initial_positions(spec, n, d, rng):
    """i.i.d. draws from the configured density by rejection sampling."""
    fn, bound = _density_function(spec, d)
    if fn is None:
        return rng.random((n, d))
    out = np.empty((n, d))
    got = 0
    while got < n:
        batch = max(n - got, 64)
        proposal = rng.random((batch, d))
        accept = rng.random(batch) * bound < fn(proposal)
        take = proposal[accept][: n - got]
        out[got : got + take.shape[0]] = take
        got += take.shape[0]
    return out


def ensemble_to_csv(ens, time_index, path):
    """One CSV per output time: realization, particle, x1..xd."""
    d = ens.d
    header = "realization,particle," + ",".join(f"x{j+1}" for j in range(d))
    pos = ens.positions[:, time_index]
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for m in range(pos.shape[0]):
            for i in range(pos.shape[1]):
                coords = ",".join(repr(c) for c in pos[m, i])
                fh.write(f"{m},{i},{coords}\n")
