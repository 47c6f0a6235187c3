"""Marginal estimation, relative entropy, the CKP inequality, and rate fits.

The k-particle marginal is estimated by pooling exchangeable samples:
k = 1 pools all realizations and particles, k = 2 pools ordered distinct
pairs subsampled to a budget, stratified by realization. Entropies are the
per-coordinate-scaled relative entropies (1/k) KL(p | q); on a common grid
the plug-in value is exactly the KL divergence of the cell distributions,
so Gibbs nonnegativity holds without quadrature error.

The joint-law entropy over all N particles is not estimable at feasible
realization counts; the k-marginal entropies, which it dominates by
sub-additivity, are the observable surrogate reported here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import GridField

__all__ = [
    "MarginalEstimate",
    "EntropyReport",
    "RateFit",
    "SupportMismatchError",
    "estimate_marginal",
    "per_realization_counts",
    "relative_entropy",
    "l1_distance",
    "ckp_rhs",
    "ckp_check",
    "entropy_report",
    "fit_rate",
]

ENTROPY_FLOOR = 1e-12
PAIR_BUDGET = 10_000_000


class SupportMismatchError(ValueError):
    pass


@dataclass
class MarginalEstimate:
    density: GridField  # on (Pi^d)^k, i.e. a (d*k)-dimensional grid
    k: int
    estimator: str
    sample_count: int
    bin_width: float
    bandwidth: float = 0.0


def _pool_samples(ens, k, t=None, budget=PAIR_BUDGET, seed=0):
    pos = ens.at_time(t) if t is not None else ens.positions[:, -1]
    m, n, d = pos.shape
    if k == 1:
        return pos.reshape(m * n, d)
    # ordered distinct pairs, stratified per realization
    rng = np.random.default_rng(seed)
    per = max(1, min(n * (n - 1), budget // m))
    out = np.empty((m * per, 2 * d))
    for r in range(m):
        flat = rng.integers(0, n * (n - 1), size=per)
        i = flat // (n - 1)
        j = flat % (n - 1)
        j = j + (j >= i)  # ordered pairs with j != i
        out[r * per : (r + 1) * per, :d] = pos[r, i]
        out[r * per : (r + 1) * per, d:] = pos[r, j]
    return out


def _histogram_density(samples, bins):
    ndim = samples.shape[1]
    edges = [np.linspace(0.0, 1.0, bins + 1)] * ndim
    counts, _ = np.histogramdd(np.clip(samples, 0.0, np.nextafter(1.0, 0.0)), edges)
    cellvol = bins ** (-ndim)
    return counts / (samples.shape[0] * cellvol)


def _kde_bandwidths(samples, bins):
    s = samples.shape[0]
    ndim = samples.shape[1]
    std = samples.std(axis=0)
    return 1.06 * std * s ** (-1.0 / (ndim + 4))


def _wrapped_gaussian_smooth(values, bandwidths):
    """Exact wrapped-Gaussian convolution via the Fourier multiplier."""
    ndim = values.ndim
    n = values.shape[0]
    vhat = np.fft.fftn(values)
    k = np.fft.fftfreq(n, d=1.0 / n)
    for axis in range(ndim):
        shape = [1] * ndim
        shape[axis] = n
        mult = np.exp(-2.0 * np.pi**2 * bandwidths[axis] ** 2 * k**2)
        vhat *= mult.reshape(shape)
    return np.real(np.fft.ifftn(vhat))


def estimate_marginal(ens, k, bins=64, estimator="histogram", t=None,
                      budget=PAIR_BUDGET, seed=0):
    """Estimate the k-particle marginal density of an ensemble (k = 1 or 2).

    `ens` may also be a plain (S, d) sample array (k = 1 only), which is how
    the estimator-bias calibration runs feed i.i.d. reference samples.
    """
    if k not in (1, 2):
        raise ValueError("only k = 1 and k = 2 marginals are supported")
    if isinstance(ens, np.ndarray):
        if k != 1:
            raise ValueError("raw sample arrays only support k = 1")
        samples = np.atleast_2d(ens)
    else:
        if ens.positions.shape[0] == 0:
            raise ValueError("empty ensemble")
        if k > ens.n_particles:
            raise ValueError("k exceeds particle count")
        samples = _pool_samples(ens, k, t=t, budget=budget, seed=seed)
    density = _histogram_density(samples, bins)
    bandwidth = 0.0
    if estimator == "kde":
        bw = _kde_bandwidths(samples, bins)
        density = _wrapped_gaussian_smooth(density, bw)
        density = np.maximum(density, 0.0)
        density /= density.mean()
        bandwidth = float(np.mean(bw))
    elif estimator != "histogram":
        raise ValueError(f"unknown estimator {estimator!r}")
    fld = GridField(density, "density")
    return MarginalEstimate(
        fld, k, estimator, samples.shape[0], 1.0 / bins, bandwidth
    )


def per_realization_counts(ens, bins, t=None):
    """Histogram counts per realization (k = 1), for ensemble bootstrapping."""
    pos = ens.at_time(t) if t is not None else ens.positions[:, -1]
    m, n, d = pos.shape
    edges = [np.linspace(0.0, 1.0, bins + 1)] * d
    out = np.empty((m,) + (bins,) * d)
    for r in range(m):
        out[r], _ = np.histogramdd(
            np.clip(pos[r], 0.0, np.nextafter(1.0, 0.0)), edges
        )
    return out


# ---------------------------------------------------------------------------
# distances


def relative_entropy(p, q, k=1):
    """(1/k) * sum p log(p/q) * cellvol, with 0 log 0 = 0 and q floored."""
    if p.values.shape != q.values.shape:
        raise ValueError("grid mismatch")
    pv, qv = p.values, q.values
    if np.any((pv > 0.0) & (qv < ENTROPY_FLOOR)):
        raise SupportMismatchError(
            "p carries mass where the reference density is below the floor"
        )
    qv = np.maximum(qv, ENTROPY_FLOOR)
    mask = pv > 0.0
    cellvol = p.cell_volume()
    val = float((pv[mask] * np.log(pv[mask] / qv[mask])).sum() * cellvol) / k
    return val


def l1_distance(p, q):
    if p.values.shape != q.values.shape:
        raise ValueError("grid mismatch")
    return float(np.abs(p.values - q.values).sum() * p.cell_volume())


def ckp_rhs(h_k, k):
    return float(np.sqrt(2.0 * k * max(h_k, 0.0)))


@dataclass
class EntropyReport:
    h_k: float
    l1: float
    ckp_rhs: float
    n_particles: int
    k: int
    t: float
    estimator: str
    bins: int
    n_realizations: int = 0
    seed: int = 0


def entropy_report(marginal, reference, n_particles, t, n_realizations=0, seed=0):
    """Compare an estimated marginal against the tensorized reference."""
    k = marginal.k
    h = relative_entropy(marginal.density, reference, k)
    l1 = l1_distance(marginal.density, reference)
    bins = int(round(1.0 / marginal.bin_width))
    return EntropyReport(
        h, l1, ckp_rhs(h, k), n_particles, k, t, marginal.estimator, bins,
        n_realizations, seed,
    )


def ckp_check(report):
    """Csiszar-Kullback-Pinsker: L1 <= sqrt(2 k H_k), with rounding slack."""
    return report.l1 <= ckp_rhs(report.h_k, report.k) + 1e-10


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class RateFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    points: list


def _lsq_slope(logn, loge):
    a = np.vstack([logn, np.ones_like(logn)]).T
    coef, *_ = np.linalg.lstsq(a, loge, rcond=None)
    return coef[0], coef[1]


def fit_rate(points, replicate_errors=None, n_boot=1000, seed=0):
    """Least-squares slope of log(error) vs log(N) with a bootstrap CI.

    `replicate_errors`, when given, maps each N to bootstrap replicates of
    its error (from ensemble resampling); the CI then resamples those.
    Otherwise a pairs bootstrap over the points is used.
    """
    points = [(int(n), float(e)) for n, e in points]
    if len(points) < 3:
        raise ValueError("need at least 3 points")
    ns = np.array([p[0] for p in points], dtype=float)
    errs = np.array([p[1] for p in points])
    if np.any(np.diff(ns) <= 0):
        raise ValueError("N must be strictly increasing")
    if np.any(errs <= 0):
        raise ValueError("errors must be positive")
    logn, loge = np.log(ns), np.log(errs)
    slope, intercept = _lsq_slope(logn, loge)

    rng = np.random.default_rng(seed)
    slopes = []
    if replicate_errors is not None:
        reps = [np.asarray(replicate_errors[n]) for n, _ in points]
        for _ in range(n_boot):
            e = np.array([r[rng.integers(0, len(r))] for r in reps])
            if np.any(e <= 0):
                continue
            slopes.append(_lsq_slope(logn, np.log(e))[0])
    else:
        idx = np.arange(len(points))
        for _ in range(n_boot):
            take = rng.choice(idx, size=len(idx), replace=True)
            if len(np.unique(ns[take])) < 2:
                continue
            slopes.append(_lsq_slope(logn[take], loge[take])[0])
    if slopes:
        lo, hi = np.percentile(slopes, [2.5, 97.5])
    else:
        lo = hi = slope
    return RateFit(float(slope), float(intercept), float(lo), float(hi), points)
