import math

import numpy as np
import pytest
from scipy.special import iv

from chaoslab.combinatorics import THEOREM4_UNIVERSAL_C, theorem3_constant
from chaoslab.partition import (
    ExponentOverflowError,
    cancellation_audit,
    change_of_law_check,
    growth_norm,
    partition_function,
    partition_value,
    verify_cancellation,
)
from chaoslab.testfunctions import BUILTIN_TEST_FUNCTIONS, tensor_test_function


@pytest.fixture(scope="module")
def mei_psi():
    # psi = 0.1 cos(2 pi (z - x))
    return BUILTIN_TEST_FUNCTIONS["mei-default"].verify_cancellations()


@pytest.fixture(scope="module")
def meii_phi_gamma_half():
    base = BUILTIN_TEST_FUNCTIONS["meii-default"]
    eps = math.sqrt(0.5 / THEOREM4_UNIVERSAL_C) / growth_norm(base).value
    return base.scaled(eps).verify_cancellations()


# ---------------------------------------------------------------------------
# test functions


def test_builtin_cancellations_hold():
    for name in BUILTIN_TEST_FUNCTIONS:
        BUILTIN_TEST_FUNCTIONS[name].verify_cancellations(tol=1e-10)


def test_recentering_restores_cancellation_for_nonuniform_density():
    rho = lambda x: 1.0 + 0.5 * np.sin(2 * np.pi * x)
    tf = tensor_test_function(
        [(1.0, ("cos", 1), ("cos", 2)), (0.5, ("sin", 2), ("sin", 1))], rho=rho
    )
    tf.verify_cancellations(tol=1e-10)


def test_constant_modes_rejected():
    with pytest.raises(ValueError):
        tensor_test_function([(1.0, ("cos", 0), ("cos", 1))])


def test_mei_default_sup_norm(mei_psi):
    assert mei_psi.sup_norm() == pytest.approx(0.1, abs=1e-12)


# ---------------------------------------------------------------------------
# growth functional


class _ConstantPhi:
    """phi identically c: sup_p ||c||_p / p is attained at p = 1."""

    def __init__(self, c):
        self.c = c

    def sup_over_z(self, x):
        return np.full_like(x, self.c)

    def rho_values(self, x):
        return np.ones_like(x)


def test_growth_norm_constant_function():
    gn = growth_norm(_ConstantPhi(0.3))
    assert gn.value == pytest.approx(0.3, abs=1e-12)
    assert gn.p_at_sup == 1
    assert gn.gamma == pytest.approx(THEOREM4_UNIVERSAL_C * 0.09)


def test_growth_norm_cosine_example():
    # phi = eps cos(2 pi x) cos(2 pi z): sup_z = eps |cos|, p = 1 norm 2 eps/pi
    eps = 0.01
    tf = tensor_test_function([(eps, ("cos", 1), ("cos", 1))])
    gn = growth_norm(tf)
    assert gn.value == pytest.approx(2 * eps / np.pi, rel=1e-5)
    assert gn.gamma == pytest.approx(
        THEOREM4_UNIVERSAL_C * (2 * eps / np.pi) ** 2, rel=1e-5
    )


# ---------------------------------------------------------------------------
# partition functions


def test_bessel_identity_oracle():
    # N = 1, phi = 0.2 cos cos: Z = int e^{0.2 cos^2} = e^{0.1} I0(0.1)
    tf = tensor_test_function([(0.2, ("cos", 1), ("cos", 1))])
    value, ci, _ = partition_value(tf, 1, mode="quadrature", variant="double-sum")
    assert ci == 0.0
    assert value == pytest.approx(math.exp(0.1) * iv(0, 0.1), abs=1e-12)


def test_zero_function_partition_is_one(mei_psi):
    zero = mei_psi.scaled(0.0)
    rep = partition_function(zero, 3, mode="quadrature", variant="double-sum")
    assert rep.exact_or_estimate == pytest.approx(1.0, abs=1e-12)
    assert rep.bound == 2.0 and rep.verdict


def test_mei_quadrature_below_theorem_bound(mei_psi):
    bound = theorem3_constant(0.1)
    for n in (2, 3):
        rep = partition_function(mei_psi, n, mode="quadrature",
                                 variant="squared-sum")
        assert rep.method == "quadrature" and rep.ci_halfwidth == 0.0
        assert rep.bound == pytest.approx(bound)
        assert 1.0 <= rep.exact_or_estimate <= bound
        assert rep.verdict


def test_mei_monte_carlo_agrees_with_quadrature(mei_psi):
    quad = partition_function(mei_psi, 3, mode="quadrature", variant="squared-sum")
    mc = partition_function(mei_psi, 3, mode="monte-carlo", variant="squared-sum",
                            budget=200_000, seed=4)
    assert abs(mc.exact_or_estimate - quad.exact_or_estimate) <= mc.ci_halfwidth
    assert mc.verdict


def test_meii_gamma_half_bound_is_four(meii_phi_gamma_half):
    rep = partition_function(meii_phi_gamma_half, 3, mode="quadrature",
                             variant="double-sum")
    assert rep.bound == pytest.approx(4.0, rel=1e-9)
    assert rep.verdict
    assert rep.params["gamma"] == pytest.approx(0.5, rel=1e-9)


def test_out_of_hypothesis_raises():
    big = tensor_test_function([(0.3, ("cos", 1), ("cos", 1))])
    with pytest.raises(ValueError, match="gamma"):
        partition_function(big, 2, mode="quadrature", variant="double-sum")
    loud = tensor_test_function([(0.25, ("cos", 1), ("cos", 1))])
    with pytest.raises(ValueError, match="hypothesis"):
        partition_function(loud, 2, mode="quadrature", variant="squared-sum")


def test_missing_cancellation_flags_rejected(mei_psi):
    crippled = mei_psi.scaled(1.0)
    crippled.z_cancellation = False
    with pytest.raises(ValueError, match="cancellation"):
        partition_function(crippled, 2, variant="squared-sum")
    crippled.z_cancellation = True
    crippled.x_cancellation = False
    with pytest.raises(ValueError, match="cancellation"):
        partition_function(crippled, 2, variant="double-sum")


def test_exponent_overflow_reported():
    spiky = tensor_test_function([(2000.0, ("cos", 1), ("cos", 1))])
    with pytest.raises(ExponentOverflowError, match="overflows"):
        partition_value(spiky, 2, mode="quadrature", variant="squared-sum")


def test_quadrature_node_cap():
    tf = tensor_test_function([(0.05, ("cos", 1), ("cos", 1))])
    with pytest.raises(ValueError):
        partition_value(tf, 5, mode="quadrature", variant="double-sum")


# ---------------------------------------------------------------------------
# change of law


def test_change_of_law_jensen_case(rng):
    rho = np.ones(8) / 8
    phi = rng.normal(size=8)
    lhs, rhs, ok = change_of_law_check(rho, rho, phi, 1.0, 4)
    assert ok and lhs <= rhs


def test_change_of_law_zero_phi(rng):
    rho = rng.random(8) + 0.1
    rho /= rho.sum()
    rho_bar = rng.random(8) + 0.1
    rho_bar /= rho_bar.sum()
    lhs, rhs, ok = change_of_law_check(rho, rho_bar, np.zeros(8), 2.0, 4)
    assert lhs == 0.0
    assert rhs >= 0.0
    assert ok


def test_change_of_law_randomized_10k(rng):
    fails = 0
    for _ in range(10_000):
        rho = rng.random(8) + 1e-3
        rho /= rho.sum()
        rho_bar = rng.random(8) + 1e-3
        rho_bar /= rho_bar.sum()
        phi = rng.normal(size=8) * rng.uniform(0.1, 3.0)
        eta = rng.uniform(0.05, 10.0)
        n_param = int(rng.integers(1, 64))
        _, _, ok = change_of_law_check(rho, rho_bar, phi, eta, n_param)
        fails += not ok
    assert fails == 0


def test_change_of_law_validation(rng):
    rho = np.ones(8) / 8
    with pytest.raises(ValueError):
        change_of_law_check(rho, rho, np.zeros(8), -1.0)
    with pytest.raises(ValueError):
        change_of_law_check(rho, np.ones(4) / 4, np.zeros(8), 1.0)
    with pytest.raises(ValueError):
        change_of_law_check(rho * 2, rho, np.zeros(8), 1.0)


# ---------------------------------------------------------------------------
# cancellation audit


def test_separable_zero_mean_integral_vanishes():
    tf = BUILTIN_TEST_FUNCTIONS["audit-cc"]
    res = verify_cancellation((1,), (2,), tf, 2)
    assert abs(res.value) < 1e-12


def test_spec_cancellation_examples():
    tf = BUILTIN_TEST_FUNCTIONS["audit-cc"]
    # I = (1,1): m = 0, n = 1; J = (2,3) has singletons beyond m + n = 1
    res = verify_cancellation((1, 1), (2, 3), tf, 3)
    assert not res.in_j_set
    assert abs(res.value) < 1e-10
    # J = (2,2) is inside the companion set and gives int cos^2 x int cos^2
    res = verify_cancellation((1, 1), (2, 2), tf, 3)
    assert res.in_j_set
    assert res.value == pytest.approx(0.25, abs=1e-12)


def test_verify_cancellation_preconditions():
    tf = BUILTIN_TEST_FUNCTIONS["audit-cc"]
    with pytest.raises(ValueError, match="reduced"):
        verify_cancellation((2, 2), (1, 1), tf, 3)
    with pytest.raises(ValueError):
        verify_cancellation((1, 1), (2, 2), tf, 5)
    with pytest.raises(ValueError):
        verify_cancellation((1, 1), (2, 2), tf, 3, nodes=512)
    half = tf.scaled(1.0)
    half.x_cancellation = False
    with pytest.raises(ValueError):
        verify_cancellation((1, 1), (2, 2), half, 3)


@pytest.mark.parametrize("name", ["audit-cc", "audit-mixed", "audit-two-mode"])
@pytest.mark.parametrize("two_k", [2, 4])
def test_exhaustive_cancellation_audit(name, two_k):
    tf = BUILTIN_TEST_FUNCTIONS[name]
    summary = cancellation_audit(tf, 3, two_k, nodes=128)
    assert summary.max_outside < 1e-8
    assert summary.min_witness > 1e-4
    assert not summary.vacuous_i
    assert summary.passed
    assert summary.pairs_tested == len(
        [None for _ in range(3**two_k)]
    ) * _n_reduced(3, two_k)


def _n_reduced(n_values, two_k):
    from chaoslab.combinatorics import reduced_multi_indices

    return len(reduced_multi_indices(n_values, two_k))


def test_grid_density_test_function(rng):
    grid = np.arange(256) / 256
    rho_vals = 1.0 + 0.4 * np.sin(2 * np.pi * grid)
    tf = tensor_test_function(
        [(1e-5, ("cos", 1), ("cos", 1)), (1e-5, ("sin", 1), ("sin", 2))],
        rho=rho_vals,
    )
    tf.verify_cancellations(nodes=256, tol=1e-10)
    rep = partition_function(tf, 2, mode="quadrature", variant="double-sum",
                             nodes=256)
    assert rep.verdict
