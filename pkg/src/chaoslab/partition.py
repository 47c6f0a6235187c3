"""Exponential-moment partition functions, their certified bounds, the
change-of-law inequality, and the cancellation audit.

Two variants of the partition function over the tensorized law rho^(x)N:

  squared-sum (law of large numbers at exponential scale):
      E exp( (1/N) (sum_j psi(x_1, x_j))^2 )            <= theorem3_constant
  double-sum (large-deviation estimate):
      E exp( (1/N) sum_{i,j} phi(x_i, x_j) )            <= 2/(1 - gamma)

Quadrature mode evaluates the N-dimensional integral on tensor trapezoid
nodes (spectrally exact for the smooth periodic integrands, d = 1, N <= 4);
Monte Carlo draws from rho^(x)N and exploits the tensor structure of phi so
one sample costs O(N * terms).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .combinatorics import (
    BoundReport,
    THEOREM4_UNIVERSAL_C,
    in_j_set,
    is_reduced,
    m_n_of,
    theorem3_constant,
    theorem4_constant,
)

__all__ = [
    "growth_norm",
    "GrowthNorm",
    "partition_function",
    "change_of_law_check",
    "verify_cancellation",
    "CancellationResult",
    "ExponentOverflowError",
]

MAX_EXPONENT = 700.0
QUADRATURE_NODES = {1: 512, 2: 256, 3: 160, 4: 96}


class ExponentOverflowError(OverflowError):
    pass


# ---------------------------------------------------------------------------
# Theorem 4 growth functional


@dataclass
class GrowthNorm:
    value: float  # sup_p ||sup_z|phi(.,z)|||_Lp(rho dx) / p
    p_at_sup: int
    gamma: float
    p_swept: int
    truncated: bool  # True when the sweep hit p_max without the decay stop


def growth_norm(tf, p_max=64, nodes=4096, universal_c=THEOREM4_UNIVERSAL_C):
    """Integer-p sweep of ||sup_z |phi(.,z)|||_Lp(rho dx)/p, early-stopped
    after 8 consecutive decreases (bounded phi makes the tail ~ sup/p)."""
    x = np.arange(nodes) / nodes
    s = tf.sup_over_z(x)
    rho = tf.rho_values(x)
    best, best_p = -np.inf, 1
    decreasing = 0
    prev = np.inf
    swept = 0
    for p in range(1, p_max + 1):
        norm = float(((s**p * rho).mean()) ** (1.0 / p)) / p
        swept = p
        if norm > best:
            best, best_p = norm, p
        decreasing = decreasing + 1 if norm < prev else 0
        prev = norm
        if decreasing >= 8:
            break
    gamma = universal_c * best**2
    return GrowthNorm(best, best_p, gamma, swept, swept == p_max)


# ---------------------------------------------------------------------------
# partition functions


def _require_flags(tf, variant):
    if variant == "squared-sum":
        if not tf.z_cancellation:
            raise ValueError(
                "squared-sum variant needs the z-side cancellation flag"
            )
    elif variant == "double-sum":
        if not (tf.x_cancellation and tf.z_cancellation):
            raise ValueError("double-sum variant needs both cancellation flags")
    else:
        raise ValueError(f"unknown variant {variant!r}")


def _bound_for(tf, variant, universal_c):
    if variant == "squared-sum":
        sup = tf.sup_norm()
        return theorem3_constant(sup), {"psi_inf": sup}
    gn = growth_norm(tf, universal_c=universal_c)
    return theorem4_constant(gn.gamma), {
        "gamma": gn.gamma,
        "growth_norm": gn.value,
        "growth_p": gn.p_at_sup,
    }


def _check_exponent(max_exp):
    if max_exp > MAX_EXPONENT:
        raise ExponentOverflowError(
            f"exponent reaches {max_exp:.1f} > {MAX_EXPONENT:g}; "
            "the integrand overflows double precision"
        )


def _quadrature_value(tf, n_particles, variant, nodes):
    q = nodes
    x = np.arange(q) / q
    rho_w = tf.rho_values(x) / q  # quadrature weights, sum to 1 for densities
    fx, gz = tf.factor_values(x)  # (T, q) each
    coeffs = tf.coeffs

    if variant == "squared-sum":
        pair = tf.phi_matrix(x)  # psi(x1, xj) on nodes
        # T(x1,...,xN) = sum_j psi(x1, xj); chunk over the x1 axis
        total = 0.0
        rest_axes = n_particles - 1
        wrest = rho_w
        for a in range(q):
            t = pair[a, a]
            if rest_axes == 0:
                s = np.array(t)
            else:
                s = np.zeros((q,) * rest_axes)
                for ax in range(rest_axes):
                    shape = [1] * rest_axes
                    shape[ax] = q
                    s = s + pair[a].reshape(shape)
                s = s + t
            expo = s**2 / n_particles
            _check_exponent(float(expo.max()))
            val = np.exp(expo)
            for ax in range(rest_axes):
                val = np.tensordot(val, wrest, axes=([0], [0]))
            total += rho_w[a] * float(val)
        return total

    # double-sum: sum_{ij} phi = sum_t c_t F_t G_t, F_t = sum_i f_t(x_i)
    total = 0.0
    rest_axes = n_particles - 1
    for a in range(q):
        s = 0.0
        for t in range(coeffs.shape[0]):
            if rest_axes == 0:
                ft = fx[t, a]
                gt = gz[t, a]
            else:
                ft = np.zeros((q,) * rest_axes)
                gt = np.zeros((q,) * rest_axes)
                for ax in range(rest_axes):
                    shape = [1] * rest_axes
                    shape[ax] = q
                    ft = ft + fx[t].reshape(shape)
                    gt = gt + gz[t].reshape(shape)
                ft = ft + fx[t, a]
                gt = gt + gz[t, a]
            s = s + coeffs[t] * ft * gt
        expo = s / n_particles
        _check_exponent(float(np.max(expo)))
        val = np.exp(expo)
        for ax in range(rest_axes):
            val = np.tensordot(val, rho_w, axes=([0], [0]))
        total += rho_w[a] * float(val)
    return total


def _sample_rho(tf, shape, rng):
    if tf.rho is None:
        return rng.random(shape)
    # rejection against the uniform proposal
    grid = np.arange(4096) / 4096
    bound = float(tf.rho_values(grid).max()) * 1.001
    out = np.empty(np.prod(shape))
    got = 0
    flat = out.shape[0]
    while got < flat:
        batch = max(flat - got, 1024)
        prop = rng.random(batch)
        keep = rng.random(batch) * bound < tf.rho(prop)
        take = prop[keep][: flat - got]
        out[got : got + take.shape[0]] = take
        got += take.shape[0]
    return out.reshape(shape)


def _monte_carlo_value(tf, n_particles, variant, budget, rng):
    batch = min(budget, 200_000)
    vals = np.empty(budget)
    done = 0
    coeffs = tf.coeffs
    while done < budget:
        b = min(batch, budget - done)
        x = _sample_rho(tf, (b, n_particles), rng)
        fx, gz = tf.factor_values(x)  # (T, b, N)
        if variant == "squared-sum":
            # sum_j psi(x_1, x_j) = sum_t c_t f_t(x_1) sum_j g_t(x_j)
            s = np.zeros(b)
            for t in range(coeffs.shape[0]):
                s += coeffs[t] * fx[t, :, 0] * gz[t].sum(axis=1)
            expo = s**2 / n_particles
        else:
            s = np.zeros(b)
            for t in range(coeffs.shape[0]):
                s += coeffs[t] * fx[t].sum(axis=1) * gz[t].sum(axis=1)
            expo = s / n_particles
        _check_exponent(float(expo.max()))
        vals[done : done + b] = np.exp(expo)
        done += b
    mean = float(vals.mean())
    sigma = float(vals.std(ddof=1) / math.sqrt(budget))
    return mean, 3.0 * sigma


def partition_value(
    tf,
    n_particles,
    mode="quadrature",
    variant="double-sum",
    budget=1_000_000,
    seed=0,
    nodes=None,
):
    """(value, 3-sigma half-width) of the partition function; quadrature is
    exact (half-width 0). Valid regardless of the theorem hypotheses."""
    _require_flags(tf, variant)
    if mode == "quadrature":
        if n_particles > 4:
            raise ValueError("quadrature mode supports N <= 4")
        q = nodes or QUADRATURE_NODES[n_particles]
        return _quadrature_value(tf, n_particles, variant, q), 0.0, {
            "N": n_particles,
            "nodes": q,
        }
    if mode == "monte-carlo":
        rng = np.random.default_rng(seed)
        value, ci = _monte_carlo_value(tf, n_particles, variant, budget, rng)
        return value, ci, {"N": n_particles, "budget": budget, "seed": seed}
    raise ValueError(f"unknown mode {mode!r}")


def partition_function(
    tf,
    n_particles,
    mode="quadrature",
    variant="double-sum",
    budget=1_000_000,
    seed=0,
    nodes=None,
    universal_c=THEOREM4_UNIVERSAL_C,
):
    """Estimate the partition function and compare against its theorem bound.

    Returns a BoundReport; quadrature is exact (ci 0), Monte Carlo carries a
    3-sigma half-width and the verdict uses estimate + ci <= bound. Raises
    when the test function is outside the theorem hypothesis.
    """
    _require_flags(tf, variant)
    bound, bound_params = _bound_for(tf, variant, universal_c)
    value, ci, params = partition_value(
        tf, n_particles, mode, variant, budget, seed, nodes
    )
    method = "quadrature" if mode == "quadrature" else "monte-carlo"
    params.update(bound_params)
    params["variant"] = variant
    return BoundReport(
        f"partition_{variant}",
        value,
        bound,
        params,
        value + ci <= bound,
        method,
        ci_halfwidth=ci,
    )


# ---------------------------------------------------------------------------
# change of law


def change_of_law_check(rho, rho_bar, big_phi, eta, n_param=1, tol=1e-12):
    """Evaluate both sides of the change-of-law inequality on a finite space.

    lhs = sum Phi rho;  rhs = (1/eta)(H_N + (1/N) log sum rho_bar e^{N eta Phi}).
    Returns (lhs, rhs, verdict).
    """
    rho = np.asarray(rho, dtype=float)
    rho_bar = np.asarray(rho_bar, dtype=float)
    big_phi = np.asarray(big_phi, dtype=float)
    if eta <= 0:
        raise ValueError("eta must be positive")
    if rho.shape != rho_bar.shape or rho.shape != big_phi.shape:
        raise ValueError("rho, rho_bar, Phi must share a finite space")
    if abs(rho.sum() - 1.0) > 1e-9 or abs(rho_bar.sum() - 1.0) > 1e-9:
        raise ValueError("rho and rho_bar must be probability vectors")
    if np.any(rho < 0) or np.any(rho_bar <= 0):
        raise ValueError("rho >= 0 and rho_bar > 0 required")
    lhs = float((big_phi * rho).sum())
    mask = rho > 0
    entropy = float((rho[mask] * np.log(rho[mask] / rho_bar[mask])).sum()) / n_param
    # log-sum-exp for stability
    a = n_param * eta * big_phi + np.log(rho_bar)
    amax = a.max()
    log_part = amax + math.log(float(np.exp(a - amax).sum()))
    rhs = (entropy + log_part / n_param) / eta
    return lhs, rhs, lhs <= rhs + tol


# ---------------------------------------------------------------------------
# cancellation audit (Lemma: J outside J_{m,n} integrates to zero)


@dataclass
class CancellationResult:
    value: float
    in_j_set: bool
    m: int
    n: int
    i_tuple: tuple
    j_tuple: tuple


def verify_cancellation(i_tuple, j_tuple, tf, n_particles, nodes=128):
    """Iterated quadrature of  E prod_nu phi(x_{i_nu}, x_{j_nu})  under
    rho^(x)N, d = 1. i_tuple must be in reduced form.

    When the companion multi-index lies outside J_{m,n} the value vanishes;
    the caller asserts |value| below tolerance.
    """
    i_tuple = tuple(int(v) for v in i_tuple)
    j_tuple = tuple(int(v) for v in j_tuple)
    if len(i_tuple) != len(j_tuple):
        raise ValueError("index tuples must share length")
    if n_particles > 4:
        raise ValueError("quadrature audit supports N <= 4")
    if nodes > 256:
        raise ValueError("at most 256 nodes per axis")
    if not is_reduced(i_tuple, n_particles):
        raise ValueError(f"I = {i_tuple} is not in reduced form")
    if not (tf.x_cancellation and tf.z_cancellation):
        raise ValueError("the audit needs both cancellation flags")
    m, n = m_n_of(i_tuple, n_particles)
    member = in_j_set(j_tuple, m, n, n_particles)

    x = np.arange(nodes) / nodes
    w = tf.rho_values(x) / nodes
    pair = tf.phi_matrix(x)
    letters = "abcdefgh"[:n_particles]
    operands, script = [], []
    for iv, jv in zip(i_tuple, j_tuple):
        operands.append(pair)
        script.append(letters[iv - 1] + letters[jv - 1])
    for v in range(n_particles):
        operands.append(w)
        script.append(letters[v])
    value = float(np.einsum(",".join(script) + "->", *operands, optimize=True))
    return CancellationResult(value, member, m, n, i_tuple, j_tuple)


@dataclass
class AuditSummary:
    n_particles: int
    two_k: int
    pairs_tested: int
    outside_count: int
    max_outside: float  # largest |integral| over J outside J_{m,n}
    min_witness: float  # smallest over I of the best in-set |integral|
    vacuous_i: list  # reduced I with no in-set integral above the threshold
    passed: bool


def cancellation_audit(
    tf, n_particles, two_k, nodes=128, zero_tol=1e-8, witness_tol=1e-4
):
    """Exhaustive (I, J) sweep at fixed N and tuple length 2k.

    Every J outside J_{m_I, n_I} must integrate below zero_tol, and each
    reduced I needs at least one in-set J above witness_tol (the lemma is
    not vacuous for this test function).
    """
    from .combinatorics import reduced_multi_indices
    from itertools import product

    x = np.arange(nodes) / nodes
    w = tf.rho_values(x) / nodes
    pair = tf.phi_matrix(x)
    letters = "abcdefgh"[:n_particles]
    all_j = list(product(range(1, n_particles + 1), repeat=two_k))

    max_outside = 0.0
    outside = 0
    min_witness = np.inf
    vacuous = []
    tested = 0
    for i_tuple in reduced_multi_indices(n_particles, two_k):
        m, n = m_n_of(i_tuple, n_particles)
        best = 0.0
        for j_tuple in all_j:
            operands, script = [], []
            for iv, jv in zip(i_tuple, j_tuple):
                operands.append(pair)
                script.append(letters[iv - 1] + letters[jv - 1])
            for v in range(n_particles):
                operands.append(w)
                script.append(letters[v])
            value = float(
                np.einsum(",".join(script) + "->", *operands, optimize=True)
            )
            tested += 1
            if in_j_set(j_tuple, m, n, n_particles):
                best = max(best, abs(value))
            else:
                outside += 1
                max_outside = max(max_outside, abs(value))
        min_witness = min(min_witness, best)
        if best < witness_tol:
            vacuous.append(i_tuple)
    passed = max_outside < zero_tol and not vacuous
    return AuditSummary(
        n_particles,
        two_k,
        tested,
        outside,
        max_outside,
        float(min_witness),
        vacuous,
        passed,
    )
