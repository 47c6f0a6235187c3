"""Interaction kernels on the torus.

Three kinds: the periodized 2D Biot-Savart law (singular local part plus a
smooth tabulated remainder), band-limited Fourier kernels, and the zero
kernel. All kernels follow the self-interaction convention K(0) = 0 and
evaluate on minimal-image displacements.

The Biot-Savart periodization solves curl u = 2*pi*alpha*(omega - mean) via
the torus Green function G with Laplacian(G) = delta_0 - 1, i.e.
G_hat(k) = -1/(4 pi^2 |k|^2), so the local singularity is exactly
alpha * x_perp / |x|^2 with x_perp = (-x2, x1). An Ewald split with a
Gaussian screen of width EWALD_SIGMA separates the exact near field from a
band-limited far field; the far field plus analytic screen corrections are
tabulated on the closed cell [-1/2,1/2]^2 for bilinear lookup.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import GridField
from .torus import DimensionMismatchError

__all__ = [
    "Kernel",
    "ZeroKernel",
    "FourierKernel",
    "FourierField",
    "ZeroField",
    "BiotSavartKernel",
    "eval_kernel",
    "convolve",
    "spectral_divergence",
    "kernel_from_config",
    "field_from_config",
]

EWALD_SIGMA = 0.05
TABLE_VERSION = 1
DEFAULT_ALPHA = 1.0 / (2.0 * np.pi)


def _wavenumbers(n, d):
    """Integer wave-number grids, shape (d,) + (n,)*d."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    return np.stack(np.meshgrid(*([k] * d), indexing="ij"))


def _nyquist_mask(k):
    """True away from self-paired Nyquist modes, where an odd (imaginary)
    multiplier cannot stay Hermitian and must be dropped."""
    n = k.shape[1]
    return np.all(np.abs(k) < n // 2, axis=0)


# ---------------------------------------------------------------------------
# plain vector fields (confinement F and friends) -- no K(0)=0 convention


class ZeroField:
    """F identically zero."""

    def __init__(self, d):
        self.d = d

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    def spectral_coefficients(self, n):
        return np.zeros((self.d,) + (n,) * self.d, dtype=complex)


class FourierField:
    """F(x) = sum_t cos_amp_t * cos(2 pi k_t.x) + sin_amp_t * sin(2 pi k_t.x)."""

    def __init__(self, wavevectors, cos_amps, sin_amps):
        self.wavevectors = np.atleast_2d(np.asarray(wavevectors, dtype=float))
        self.cos_amps = np.atleast_2d(np.asarray(cos_amps, dtype=float))
        self.sin_amps = np.atleast_2d(np.asarray(sin_amps, dtype=float))
        if not (
            self.wavevectors.shape == self.cos_amps.shape == self.sin_amps.shape
        ):
            raise ValueError("wavevectors, cos_amps, sin_amps must share shape (T, d)")
        self.d = self.wavevectors.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        phase = 2.0 * np.pi * (x[..., None, :] * self.wavevectors).sum(-1)
        out = np.cos(phase)[..., None] * self.cos_amps + np.sin(phase)[
            ..., None
        ] * self.sin_amps
        return out.sum(-2)

    def spectral_coefficients(self, n):
        out = np.zeros((self.d,) + (n,) * self.d, dtype=complex)
        for kvec, a, b in zip(self.wavevectors, self.cos_amps, self.sin_amps):
            idx_p = tuple(int(round(c)) % n for c in kvec)
            idx_m = tuple((-int(round(c))) % n for c in kvec)
            for j in range(self.d):
                out[(j,) + idx_p] += 0.5 * a[j] - 0.5j * b[j]
                out[(j,) + idx_m] += 0.5 * a[j] + 0.5j * b[j]
        return out


# ---------------------------------------------------------------------------
# kernels


class Kernel:
    """Base interaction law K with eval on minimal-image displacements."""

    kind = "abstract"
    d = 0
    antisymmetric = False
    divergence_free = False

    def eval(self, r):
        raise NotImplementedError

    def spectral_coefficients(self, n):
        raise NotImplementedError


class ZeroKernel(Kernel):
    kind = "zero"
    antisymmetric = True
    divergence_free = True

    def __init__(self, d):
        self.d = d

    def eval(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def spectral_coefficients(self, n):
        return np.zeros((self.d,) + (n,) * self.d, dtype=complex)


class FourierKernel(Kernel):
    """Band-limited smooth kernel given by a finite trigonometric table."""

    kind = "fourier"

    def __init__(self, wavevectors, cos_amps, sin_amps):
        self._series = FourierField(wavevectors, cos_amps, sin_amps)
        self.d = self._series.d
        self.antisymmetric = bool(np.all(self._series.cos_amps == 0.0))
        kdota = (self._series.wavevectors * self._series.cos_amps).sum(-1)
        kdotb = (self._series.wavevectors * self._series.sin_amps).sum(-1)
        self.divergence_free = bool(
            np.all(np.abs(kdota) < 1e-14) and np.all(np.abs(kdotb) < 1e-14)
        )

    @property
    def wavevectors(self):
        return self._series.wavevectors

    @property
    def cos_amps(self):
        return self._series.cos_amps

    @property
    def sin_amps(self):
        return self._series.sin_amps

    def eval(self, r):
        r = np.asarray(r, dtype=float)
        out = self._series(r)
        zero = np.all(r == 0.0, axis=-1)
        if np.any(zero):
            out = np.where(zero[..., None], 0.0, out)
        return out

    def spectral_coefficients(self, n):
        return self._series.spectral_coefficients(n)


class BiotSavartKernel(Kernel):
    """Periodized 2D Biot-Savart law, optionally blob-regularized.

    eval(r) = alpha * r_perp / (|r|^2 + delta^2) + remainder(r), with the
    remainder bilinearly interpolated from a table on the closed cell.
    """

    kind = "biot-savart"
    antisymmetric = True
    divergence_free = True

    def __init__(self, alpha=DEFAULT_ALPHA, delta=0.0, grid_size=256, cache_dir=None):
        if delta < 0:
            raise ValueError("delta must be >= 0")
        if grid_size < 32 or (grid_size & (grid_size - 1)) != 0:
            raise ValueError("grid_size must be a power of two >= 32")
        self.d = 2
        self.alpha = float(alpha)
        self.delta = float(delta)
        self.grid_size = int(grid_size)
        self.ewald_sigma = EWALD_SIGMA
        table = _load_cached_table(self.alpha, self.grid_size, cache_dir)
        if table is None:
            table = _build_remainder_table(self.alpha, self.grid_size)
            _store_cached_table(self.alpha, self.grid_size, cache_dir, table)
        # remainder on (n+1)^2 closed-cell nodes, component axis last
        self.remainder_table = table

    def spectral_coefficients(self, n):
        k = _wavenumbers(n, 2)
        k2 = k[0] ** 2 + k[1] ** 2
        k2[0, 0] = 1.0
        out = np.empty((2,) + k2.shape, dtype=complex)
        out[0] = 1j * self.alpha * k[1] / k2
        out[1] = -1j * self.alpha * k[0] / k2
        out[:, 0, 0] = 0.0
        return out * _nyquist_mask(k)

    def far_field_grid(self):
        """Band-limited far field sampled on the periodic tabulation grid."""
        n = self.grid_size
        khat = self.spectral_coefficients(n)
        k = _wavenumbers(n, 2)
        screen = np.exp(-2.0 * np.pi**2 * self.ewald_sigma**2 * (k[0] ** 2 + k[1] ** 2))
        return np.real(
            np.stack([np.fft.ifft2(khat[j] * screen) for j in range(2)])
        ) * n**2

    def eval(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape[-1] != 2:
            raise DimensionMismatchError("Biot-Savart kernel is 2-dimensional")
        r2 = r[..., 0] ** 2 + r[..., 1] ** 2
        denom = r2 + self.delta**2
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(denom > 0.0, 1.0 / np.where(denom > 0, denom, 1.0), 0.0)
        local = np.empty_like(r)
        local[..., 0] = -self.alpha * r[..., 1] * inv
        local[..., 1] = self.alpha * r[..., 0] * inv
        out = local + _bilinear_cell(self.remainder_table, r)
        zero = r2 == 0.0
        if np.any(zero):
            out = np.where(zero[..., None], 0.0, out)
        return out


def eval_kernel(kernel, r):
    """K evaluated at a minimal-image displacement; K(0) = 0."""
    return kernel.eval(r)


# ---------------------------------------------------------------------------
# Ewald construction of the Biot-Savart remainder


def _screened_local(x, alpha, sigma):
    """alpha * x_perp/|x|^2 * exp(-|x|^2 / (2 sigma^2)), 0 at the origin."""
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(r2 > 0.0, np.exp(-r2 / (2.0 * sigma**2)) / np.where(r2 > 0, r2, 1.0), 0.0)
    out = np.empty_like(x)
    out[..., 0] = -alpha * x[..., 1] * f
    out[..., 1] = alpha * x[..., 0] * f
    return out


def _local_complement(x, alpha, sigma):
    """alpha * x_perp/|x|^2 * (1 - exp(-|x|^2/(2 sigma^2))); smooth, 0 at 0."""
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(
            r2 > 0.0,
            -np.expm1(-r2 / (2.0 * sigma**2)) / np.where(r2 > 0, r2, 1.0),
            1.0 / (2.0 * sigma**2),
        )
    out = np.empty_like(x)
    out[..., 0] = -alpha * x[..., 1] * f
    out[..., 1] = alpha * x[..., 0] * f
    return out


def _build_remainder_table(alpha, n):
    """K_periodic - alpha x_perp/|x|^2 on closed-cell nodes, shape (n+1, n+1, 2)."""
    sigma = EWALD_SIGMA
    kernel_stub = BiotSavartKernel.__new__(BiotSavartKernel)
    kernel_stub.alpha = alpha
    kernel_stub.grid_size = n
    kernel_stub.ewald_sigma = sigma
    far = kernel_stub.far_field_grid()  # (2, n, n) at points j/n in [0,1)
    # shift so index i corresponds to coordinate -1/2 + i/n, then close the cell
    far = np.roll(far, (n // 2, n // 2), axis=(1, 2))
    closed = np.empty((2, n + 1, n + 1))
    closed[:, :n, :n] = far
    closed[:, n, :n] = far[:, 0, :]
    closed[:, :n, n] = far[:, :, 0]
    closed[:, n, n] = far[:, 0, 0]

    coords = -0.5 + np.arange(n + 1) / n
    x = np.stack(np.meshgrid(coords, coords, indexing="ij"), axis=-1)
    table = np.moveaxis(closed, 0, -1) - _local_complement(x, alpha, sigma)
    # near-field periodic images; ~1e-22 at sigma = 0.05 but exact is free
    for mx in (-1, 0, 1):
        for my in (-1, 0, 1):
            if mx == 0 and my == 0:
                continue
            table += _screened_local(x + np.array([mx, my]), alpha, sigma)
    return table


def _bilinear_cell(table, r):
    """Bilinear lookup on the closed cell [-1/2,1/2]^2; table (n+1, n+1, 2)."""
    n = table.shape[0] - 1
    u = np.clip((np.asarray(r, dtype=float) + 0.5) * n, 0.0, float(n))
    i0 = np.minimum(u.astype(int), n - 1)
    f = u - i0
    ix, iy = i0[..., 0], i0[..., 1]
    fx, fy = f[..., 0:1], f[..., 1:2]
    v00 = table[ix, iy]
    v10 = table[ix + 1, iy]
    v01 = table[ix, iy + 1]
    v11 = table[ix + 1, iy + 1]
    return (
        v00 * (1 - fx) * (1 - fy)
        + v10 * fx * (1 - fy)
        + v01 * (1 - fx) * fy
        + v11 * fx * fy
    )


# ---------------------------------------------------------------------------
# cache


def _cache_path(alpha, n, cache_dir):
    base = cache_dir or os.environ.get("CHAOSLAB_CACHE_DIR")
    if base is None:
        base = Path.home() / ".cache" / "chaoslab"
    base = Path(base)
    return base / f"biot_savart_v{TABLE_VERSION}_alpha{alpha:.12g}_n{n}.npz"


def _load_cached_table(alpha, n, cache_dir):
    path = _cache_path(alpha, n, cache_dir)
    if not path.exists():
        return None
    try:
        with np.load(path) as data:
            if (
                int(data["version"]) != TABLE_VERSION
                or int(data["n"]) != n
                or abs(float(data["alpha"]) - alpha) > 1e-15
                or abs(float(data["ewald_sigma"]) - EWALD_SIGMA) > 1e-15
            ):
                return None
            return data["table"]
    except Exception:
        return None


def _store_cached_table(alpha, n, cache_dir, table):
    path = _cache_path(alpha, n, cache_dir)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            version=TABLE_VERSION,
            n=n,
            alpha=alpha,
            ewald_sigma=EWALD_SIGMA,
            table=table,
        )
    except OSError:
        pass  # cache is best-effort


# ---------------------------------------------------------------------------
# spectral operations


def convolve(kernel, rho):
    """u = K * rho by spectral convolution; returns a vector GridField."""
    if rho.kind != "density":
        raise ValueError("convolve expects a density field")
    if kernel.d != rho.d:
        raise DimensionMismatchError(
            f"kernel dimension {kernel.d} != field dimension {rho.d}"
        )
    if rho.values.min() < -1e-10:
        raise ValueError("convolve: density must be nonnegative")
    if abs(rho.mass() - 1.0) > 1e-8:
        raise ValueError("convolve: density must have unit mass")
    n = rho.n
    rho_hat = np.fft.fftn(rho.values)
    khat = kernel.spectral_coefficients(n)
    comps = [np.real(np.fft.ifftn(khat[j] * rho_hat)) for j in range(kernel.d)]
    return GridField(np.stack(comps), "vector", rho.time)


def spectral_divergence(values):
    """Relative spectral divergence of a sampled periodic vector field.

    max_k |k . f_hat(k)| normalized by max_k |k| |f_hat(k)|.
    """
    values = np.asarray(values, dtype=float)
    d = values.shape[0]
    n = values.shape[1]
    k = _wavenumbers(n, d)
    fhat = np.stack([np.fft.fftn(values[j]) for j in range(d)])
    div = (k * fhat).sum(0)
    scale = np.sqrt((k**2).sum(0)) * np.sqrt((np.abs(fhat) ** 2).sum(0))
    denom = scale.max()
    if denom == 0.0:
        return 0.0
    return float(np.abs(div).max() / denom)


# ---------------------------------------------------------------------------
# config plumbing


def kernel_from_config(block):
    """Build a kernel from an experiment-config block."""
    kind = block["kind"]
    if kind == "zero":
        return ZeroKernel(int(block["dim"]))
    if kind == "biot-savart":
        return BiotSavartKernel(
            alpha=float(block.get("alpha", DEFAULT_ALPHA)),
            delta=float(block.get("delta", 0.0)),
            grid_size=int(block.get("grid_size", 256)),
        )
    if kind == "fourier":
        terms = block["terms"]
        return FourierKernel(
            [t["k"] for t in terms],
            [t["cos"] for t in terms],
            [t["sin"] for t in terms],
        )
    raise ValueError(f"unknown kernel kind {kind!r}")


def field_from_config(block, d):
    if block is None or block.get("kind", "zero") == "zero":
        return ZeroField(d)
    if block["kind"] == "fourier":
        terms = block["terms"]
        return FourierField(
            [t["k"] for t in terms],
            [t["cos"] for t in terms],
            [t["sin"] for t in terms],
        )
    raise ValueError(f"unknown field kind {block['kind']!r}")
