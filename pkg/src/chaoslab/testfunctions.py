"""Two-point test functions with analytically enforced cancellations.

phi(x, z) is a finite tensor Fourier sum on the 1-torus per side,
    phi(x, z) = sum_t c_t f_t(x) g_t(z),
with every factor a nonconstant cos/sin mode. Against the uniform density
each factor integrates to zero, so both cancellation conditions
  integral phi(x,z) rho(x) dx = 0  (x side)
  integral phi(x,z) rho(z) dz = 0  (z side)
hold exactly, not just numerically. For a non-uniform density the factors
are recentered by their rho-averages, which restores both cancellations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TestFunctionPair", "tensor_test_function", "BUILTIN_TEST_FUNCTIONS"]


def _mode(kind, wave):
    if kind == "cos":
        return lambda x: np.cos(2.0 * np.pi * wave * x)
    if kind == "sin":
        return lambda x: np.sin(2.0 * np.pi * wave * x)
    raise ValueError(f"unknown factor kind {kind!r}")


@dataclass
class TestFunctionPair:
    """phi as a tensor sum plus the reference density it cancels against."""

    coeffs: np.ndarray  # (T,)
    x_factors: list  # T callables
    z_factors: list
    rho: object = None  # None = uniform; else callable density on [0,1)
    x_cancellation: bool = True
    z_cancellation: bool = True
    sup_norm_hint: float = field(default=0.0)

    def phi(self, x, z):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        out = 0.0
        for c, f, g in zip(self.coeffs, self.x_factors, self.z_factors):
            out = out + c * f(x) * g(z)
        return out

    def phi_matrix(self, x_nodes, z_nodes=None):
        if z_nodes is None:
            z_nodes = x_nodes
        return self.phi(x_nodes[:, None], z_nodes[None, :])

    def factor_values(self, x):
        """(T, ...) arrays of f_t(x) and g_t(x) for the fast sample path."""
        fx = np.stack([f(x) for f in self.x_factors])
        gz = np.stack([g(x) for g in self.z_factors])
        return fx, gz

    def rho_values(self, nodes):
        if self.rho is None:
            return np.ones_like(nodes)
        return self.rho(nodes)

    def sup_norm(self, nodes=4096):
        grid = np.arange(nodes) / nodes
        return float(np.abs(self.phi_matrix(grid)).max())

    def sup_over_z(self, x_nodes, z_nodes=2048):
        """s(x) = sup_z |phi(x, z)| on a z-grid."""
        zg = np.arange(z_nodes) / z_nodes
        return np.abs(self.phi(x_nodes[:, None], zg[None, :])).max(axis=1)

    def verify_cancellations(self, nodes=1024, tol=1e-10):
        """Quadrature check of the flagged cancellations; raises on failure."""
        grid = np.arange(nodes) / nodes
        rho = self.rho_values(grid)
        mat = self.phi_matrix(grid)  # (x, z)
        if self.x_cancellation:
            worst = np.abs((rho[:, None] * mat).mean(axis=0)).max()
            if worst > tol:
                raise AssertionError(f"x-side cancellation fails: {worst:.2e}")
        if self.z_cancellation:
            worst = np.abs((mat * rho[None, :]).mean(axis=1)).max()
            if worst > tol:
                raise AssertionError(f"z-side cancellation fails: {worst:.2e}")
        return self

    def scaled(self, factor):
        return TestFunctionPair(
            self.coeffs * factor,
            self.x_factors,
            self.z_factors,
            self.rho,
            self.x_cancellation,
            self.z_cancellation,
        )


def _recenter(fn, rho, nodes=4096):
    grid = np.arange(nodes) / nodes
    avg = float((fn(grid) * rho(grid)).mean())
    return lambda x: fn(x) - avg


def tensor_test_function(terms, rho=None):
    """Build phi = sum c * mode(x) * mode(z) from term triples
    (coeff, (kind, wave), (kind, wave)); waves must be nonzero integers.

    rho may be a callable density on [0,1), a grid of sampled values
    (nearest-cell lookup), or None for uniform; nonconstant modes are
    recentered by their rho-averages so both cancellations hold.
    """
    nodes = 4096
    if isinstance(rho, np.ndarray):
        values = np.asarray(rho, dtype=float)
        nodes = values.size  # recenter on the density's own grid
        rho = lambda x: values[(np.asarray(x) * values.size).astype(int) % values.size]
    coeffs, xs, zs = [], [], []
    for c, (fk, fw), (gk, gw) in terms:
        if fw == 0 or gw == 0:
            raise ValueError("constant modes would break the cancellations")
        f, g = _mode(fk, fw), _mode(gk, gw)
        if rho is not None:
            f, g = _recenter(f, rho, nodes), _recenter(g, rho, nodes)
        coeffs.append(c)
        xs.append(f)
        zs.append(g)
    return TestFunctionPair(np.asarray(coeffs, dtype=float), xs, zs, rho)


def _builtin(name):
    if name == "mei-default":
        # 0.1 cos(2 pi (z - x)) = 0.1 (cos cos + sin sin)
        return tensor_test_function(
            [
                (0.1, ("cos", 1), ("cos", 1)),
                (0.1, ("sin", 1), ("sin", 1)),
            ]
        )
    if name == "meii-default":
        # cos(2 pi x) cos(2 pi z) + sin(2 pi x) sin(4 pi z), unit amplitude
        return tensor_test_function(
            [
                (1.0, ("cos", 1), ("cos", 1)),
                (1.0, ("sin", 1), ("sin", 2)),
            ]
        )
    if name == "audit-cc":
        return tensor_test_function([(1.0, ("cos", 1), ("cos", 1))])
    if name == "audit-mixed":
        return tensor_test_function(
            [
                (1.0, ("cos", 1), ("cos", 1)),
                (1.0, ("sin", 1), ("sin", 2)),
            ]
        )
    if name == "audit-two-mode":
        return tensor_test_function(
            [
                (1.0, ("cos", 1), ("cos", 2)),
                (0.5, ("sin", 2), ("sin", 1)),
                (0.25, ("cos", 2), ("cos", 2)),
            ]
        )
    raise KeyError(name)


class _Builtins:
    names = ("mei-default", "meii-default", "audit-cc", "audit-mixed", "audit-two-mode")

    def __getitem__(self, name):
        return _builtin(name)

    def __iter__(self):
        return iter(self.names)


BUILTIN_TEST_FUNCTIONS = _Builtins()
