"""Bounded-matrix representation K = div V of the periodized Biot-Savart law.

V is diagonal with the arctan entries
    V11 = -alpha * phi * arctan(x1/x2) + psi1,
    V22 = +alpha * phi * arctan(x2/x1) + psi2,
phi a radial C-infinity bump equal to 1 inside radius 0.15 and supported in
radius 0.45, and psi the tabulated periodizing corrections obtained by a
per-row (resp. per-column) spectral antiderivative.

A strictly diagonal periodic V cannot match K exactly: the x1-line averages
of (div V)_1 vanish identically while those of K_1 do not. The unavoidable
per-line mean mismatch is deposited as a narrow Gaussian (BRANCH_SIGMA)
centered on the branch line, inside the strip the residual check excludes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import BiotSavartKernel, _build_remainder_table, eval_kernel

__all__ = ["PotentialMatrix", "build_biot_savart_potential", "ResidualReport"]

BUMP_INNER = 0.15
BUMP_OUTER = 0.45
BRANCH_SIGMA = 0.01
MIN_GRID = 32


def _smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        g = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f / (f + g)


def _smoothstep_deriv(t):
    t = np.asarray(t, dtype=float)
    inside = (t > 0.0) & (t < 1.0)
    ts = np.where(inside, t, 0.5)
    f = np.exp(-1.0 / ts)
    g = np.exp(-1.0 / (1.0 - ts))
    fp = f / ts**2
    gp = g / (1.0 - ts) ** 2
    d = (fp * g + f * gp) / (f + g) ** 2
    return np.where(inside, d, 0.0)


def _bump(r):
    """phi(|x|): 1 on r <= BUMP_INNER, 0 on r >= BUMP_OUTER."""
    return _smoothstep((BUMP_OUTER - r) / (BUMP_OUTER - BUMP_INNER))


def _bump_radial_deriv(r):
    return -_smoothstep_deriv((BUMP_OUTER - r) / (BUMP_OUTER - BUMP_INNER)) / (
        BUMP_OUTER - BUMP_INNER
    )


def _ratio_arctan(num, den):
    """arctan(num/den) with the one-sided limit +-pi/2 at den = 0; 0 at 0/0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    out = np.arctan(ratio)
    out = np.where(den == 0.0, np.sign(num) * (np.pi / 2.0), out)
    return np.where((num == 0.0) & (den == 0.0), 0.0, out)


def _spectral_antiderivative(rows):
    """Per-row primitive in the last axis; rows must have zero mean each."""
    n = rows.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = np.where(k != 0.0, 1.0 / (2.0j * np.pi * k), 0.0)
    return np.real(np.fft.ifft(np.fft.fft(rows, axis=-1) * mult, axis=-1))


@dataclass
class PotentialMatrix:
    v11: np.ndarray  # (n, n) at nodes (-1/2 + i/n, -1/2 + j/n)
    v22: np.ndarray
    n: int
    alpha: float
    norm_inf: float
    declared_tolerance: float  # relative to max |K| over tested points


def build_biot_savart_potential(grid_size, kernel=None):
    """Tabulate the diagonal V with div V = K away from branch lines.

    Raises ValueError when the grid is too coarse to resolve the bumps.
    """
    n = int(grid_size)
    if n < MIN_GRID:
        raise ValueError(f"grid_size {n} too coarse to resolve the bump (min {MIN_GRID})")
    if n & (n - 1):
        raise ValueError("grid_size must be a power of two")
    if kernel is None:
        kernel = BiotSavartKernel(grid_size=max(n, 256))
    alpha = kernel.alpha

    coords = -0.5 + np.arange(n) / n
    x1 = coords[:, None] * np.ones((1, n))
    x2 = coords[None, :] * np.ones((n, 1))
    r = np.hypot(x1, x2)
    phi = _bump(r)
    dphi_dr = _bump_radial_deriv(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_r = np.where(r > 0.0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
    dphi_1 = dphi_dr * x1 * inv_r
    dphi_2 = dphi_dr * x2 * inv_r

    # smooth remainder R = K - local at the build nodes, exact (no interpolation)
    rem = _build_remainder_table(alpha, n)[:n, :n, :]
    r2 = x1**2 + x2**2
    inv_r2 = np.where(r2 > 0.0, 1.0 / np.where(r2 > 0, r2, 1.0), 0.0)
    local1 = -alpha * x2 * inv_r2
    local2 = alpha * x1 * inv_r2

    atan12 = _ratio_arctan(x1, x2)  # branch line x2 = 0
    atan21 = _ratio_arctan(x2, x1)  # branch line x1 = 0
    w11 = -alpha * phi * atan12
    w22 = alpha * phi * atan21

    # g = K - d(W)/dx, assembled so the singular parts cancel analytically
    one_m_phi = 1.0 - phi
    g1 = rem[..., 0] + one_m_phi * local1 + alpha * dphi_1 * atan12
    g2 = rem[..., 1] + one_m_phi * local2 - alpha * dphi_2 * atan21

    # deposit each line's mean into a Gaussian on the excluded branch strip
    bump_line = np.exp(-(coords**2) / (2.0 * BRANCH_SIGMA**2))
    bump_line = bump_line / bump_line.mean()
    h1 = g1.mean(axis=0)  # mean over x1, one value per x2 row
    g1 = g1 - bump_line[:, None] * h1[None, :]
    h2 = g2.mean(axis=1)
    g2 = g2 - bump_line[None, :] * h2[:, None]

    psi1 = _spectral_antiderivative(np.moveaxis(g1, 0, -1))  # integrate in x1
    psi1 = np.moveaxis(psi1, -1, 0)
    psi2 = _spectral_antiderivative(g2)  # integrate in x2

    v11 = w11 + psi1
    v22 = w22 + psi2
    norm_inf = float(max(np.abs(v11).max(), np.abs(v22).max()))
    tol = 0.01 * (128.0 / min(n, 128)) ** 2
    return PotentialMatrix(v11, v22, n, alpha, norm_inf, tol)


@dataclass
class ResidualReport:
    max_residual: float
    kernel_scale: float  # max |K| over tested points
    tolerance: float  # absolute: declared_tolerance * kernel_scale
    tested_points: int
    passed: bool


def residual_check(pot, kernel, ball_radius=0.05, strip_width=0.05):
    """Centered-FD div V against eval_kernel away from the singular ball
    and the arctan branch lines."""
    n = pot.n
    coords = -0.5 + np.arange(n) / n
    x1 = coords[:, None] * np.ones((1, n))
    x2 = coords[None, :] * np.ones((n, 1))
    div1 = (np.roll(pot.v11, -1, axis=0) - np.roll(pot.v11, 1, axis=0)) * (n / 2.0)
    div2 = (np.roll(pot.v22, -1, axis=1) - np.roll(pot.v22, 1, axis=1)) * (n / 2.0)
    pts = np.stack([x1, x2], axis=-1)
    kvals = eval_kernel(kernel, pts)
    resid = np.hypot(div1 - kvals[..., 0], div2 - kvals[..., 1])
    mask = (
        (np.hypot(x1, x2) > ball_radius)
        & (np.abs(x1) > strip_width)
        & (np.abs(x2) > strip_width)
    )
    scale = float(np.linalg.norm(kvals[mask], axis=-1).max())
    max_resid = float(resid[mask].max())
    tol = pot.declared_tolerance * scale
    return ResidualReport(max_resid, scale, tol, int(mask.sum()), max_resid < tol)
