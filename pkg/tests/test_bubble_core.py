"""Tests for the bubble profile, kernel elements, and projection constants.

Oracles used here are independent of the panel quadrature engine:
Beta-function closed forms for the power-law integrals, a Richardson-
extrapolated tridiagonal eigensolver for lambda1, and scipy.integrate.quad
for the half-line recursion integrals.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import beta as beta_fn

from geobubble import bubble_core as bc


DIM = bc.Dimension(8)
EP = bc.solve_negative_eigenpair(DIM)
CONST = bc.compute_constants(DIM, EP)


def exact_moment(N, power, c_N, exponent):
    """omega_N * int_0^inf c_N^power (1+r^2)^(-exponent) r^(N-1) dr."""
    return (bc.sphere_area(N) * c_N ** power
            * 0.5 * beta_fn(N / 2.0, exponent - N / 2.0))


# ---------------------------------------------------------------------------
# dimension bookkeeping and the profile itself

def test_dimension_rejects_small_n():
    with pytest.raises(ValueError):
        bc.Dimension(7)


def test_dimension_derived_quantities():
    assert DIM.N == 7
    assert DIM.p == pytest.approx(9.0 / 5.0, abs=0)
    # the normalization c_N is fixed by Delta w + w^p = 0
    assert DIM.c_N ** (DIM.p - 1.0) == pytest.approx(DIM.N * (DIM.N - 2),
                                                     rel=1e-14)


@pytest.mark.parametrize("r", [0.1, 0.7, 1.0, 3.2, 11.0])
def test_profile_satisfies_radial_equation(r):
    N = DIM.N
    lhs = (bc._ddw(DIM, r) + (N - 1) / r * bc._dw(DIM, r)
           + bc._w(DIM, r) ** DIM.p)
    assert abs(lhs) < 1e-12 * bc._w(DIM, 0.0) ** DIM.p


def test_bubble_is_rotation_invariant():
    rng = np.random.default_rng(7)
    y = rng.normal(size=DIM.N)
    q, _ = np.linalg.qr(rng.normal(size=(DIM.N, DIM.N)))
    assert bc.eval_bubble(DIM, q @ y) == pytest.approx(bc.eval_bubble(DIM, y),
                                                       rel=1e-13)


def test_translation_kernel_is_gradient_component():
    y = np.array([0.3, -0.4, 0.1, 0.0, 0.2, -0.1, 0.5])
    h = 1e-6
    for j in (1, 4, 7):
        e = np.zeros(DIM.N)
        e[j - 1] = h
        fd = (bc.eval_bubble(DIM, y + e) - bc.eval_bubble(DIM, y - e)) / (2 * h)
        assert bc.eval_kernel(DIM, j, y) == pytest.approx(fd, abs=1e-8)


def test_kernel_index_bounds():
    y = np.zeros(DIM.N)
    with pytest.raises(IndexError):
        bc.eval_kernel(DIM, DIM.N + 2, y)
    with pytest.raises(IndexError):
        bc.eval_kernel(DIM, -1, y)


def test_radial_grid_vanishes_beyond_domain():
    nodes = np.linspace(0.0, 5.0, 101)
    g = bc.RadialGrid(nodes, np.exp(-nodes), 1.0)
    assert g(6.0) == 0.0
    assert g(np.array([1.0, 7.5]))[1] == 0.0
    with pytest.raises(ValueError):
        bc.RadialGrid(nodes + 1.0, np.exp(-nodes), 1.0)


# ---------------------------------------------------------------------------
# quadrature engine against Beta-function closed forms

def test_radial_integral_against_closed_forms():
    N, p, c = DIM.N, DIM.p, DIM.c_N
    mass2 = bc.radial_integral(lambda r: bc._w(DIM, r) ** 2, N,
                               tail_power=N - 3)
    assert mass2 == pytest.approx(exact_moment(N, 2, c, N - 2.0), rel=1e-12)
    massp = bc.radial_integral(lambda r: bc._w(DIM, r) ** (p + 1), N,
                               tail_power=N + 1)
    assert massp == pytest.approx(exact_moment(N, p + 1, c, N), rel=1e-12)


def test_ipq_matches_quadrature():
    for p, q in [(4, 0), (6, 2), (9, 5), (12, 3)]:
        val, _ = quad(lambda r: r ** q * (1.0 + r) ** (-p), 0.0, np.inf)
        assert bc.ipq(p, q) == pytest.approx(val, rel=1e-10)


def test_ipq_divergence_guard():
    with pytest.raises(ValueError):
        bc.ipq(3, 2)


@given(st.integers(min_value=4, max_value=40).flatmap(
    lambda p: st.tuples(st.just(p), st.integers(min_value=1, max_value=p - 3))))
@settings(max_examples=60, deadline=None)
def test_ipq_recursion(pq):
    # int r^q (1+r)^-p dr obeys I(p, q) = q/(p-q-1) I(p, q-1)
    p, q = pq
    lhs = bc.ipq(p, q)
    rhs = q / (p - q - 1.0) * bc.ipq(p, q - 1)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_ipq_base_case():
    assert bc.ipq(5, 0) == pytest.approx(0.25, abs=1e-14)


# ---------------------------------------------------------------------------
# the negative-direction eigenpair

def test_lambda1_against_grid_oracle():
    # Richardson extrapolation of the second-order tridiagonal eigensolver
    lam_m = bc._coarse_lambda1(DIM, m=4000)
    lam_2m = bc._coarse_lambda1(DIM, m=8000)
    oracle = (4.0 * lam_2m - lam_m) / 3.0
    assert EP.lambda1 == pytest.approx(oracle, rel=1e-5)
    assert EP.lambda1 == pytest.approx(7.78693437, abs=1e-6)


def test_eigen_residual_small():
    assert bc.eigen_residual(DIM, EP) < 1e-8


def test_eigenfunction_normalized_and_orthogonal():
    norm = bc.radial_integral(lambda r: EP.z0(r) ** 2, DIM.N, r_max=40.0)
    assert norm == pytest.approx(1.0, abs=1e-10)
    overlap = bc.radial_integral(lambda r: EP.z0(r) * bc._zn1(DIM, r),
                                 DIM.N, r_max=40.0)
    assert abs(overlap) < 1e-10


def test_eigenfunction_decay_rate():
    rate = bc.measured_decay_rate(DIM, EP)
    target = math.sqrt(EP.lambda1)
    assert abs(rate - target) / target < 0.02


def test_eigenfunction_positive_at_origin():
    assert EP.z0(0.0) > 0.0
    # ground state of the half-line problem: no interior sign change
    r = np.linspace(0.0, 20.0, 2000)
    assert np.all(EP.z0(r) > -1e-12)


def test_kernel_residuals_and_convergence_order():
    for j in (1, DIM.N + 1):
        res = bc.kernel_residual(DIM, j, eigenpair=EP)
        assert res < 1e-6
    coarse = bc.kernel_residual(DIM, 1, samples=20001, eigenpair=EP)
    fine = bc.kernel_residual(DIM, 1, samples=40001, eigenpair=EP)
    order = math.log2(coarse / fine)
    assert abs(order - 2.0) < 0.3


# ---------------------------------------------------------------------------
# projection constants

def test_closed_form_ratios():
    n = DIM.n
    assert CONST.a_n == pytest.approx(8.0 * (n - 2) / ((n - 3) * (n + 1)),
                                      abs=1e-8)
    assert CONST.b_n == pytest.approx((n - 3) ** 2 * (n - 5) / (4.0 * (n + 1)),
                                      abs=1e-8)
    N = DIM.N
    assert CONST.B2 / CONST.A2 == pytest.approx(
        (N - 2) * (N - 3) / (4.0 * (N - 1)), abs=1e-8)


def test_a1_dual_route():
    assert CONST.A1 == pytest.approx(bc.a1_via_mass(DIM), rel=1e-10)


def test_a2_against_beta_closed_form():
    mass2 = exact_moment(DIM.N, 2, DIM.c_N, DIM.N - 2.0)
    assert CONST.A2 == pytest.approx(-2.0 * mass2, rel=1e-10)
    assert CONST.a2_direct == pytest.approx(-mass2, rel=1e-10)


def test_direct_quadrature_identities():
    # int d_11 w Z_{N+1} dy vanishes identically (it is int Delta w Z_{N+1}/N
    # and the dilation element is orthogonal to w^p)
    assert abs(CONST.B1) < 1e-8 * abs(CONST.B3)
    # int d_11 w Z0 dy = -(1/N) int w^p Z0 dy for the same reason
    assert CONST.B5 == pytest.approx(-CONST.wp_z0 / DIM.N, rel=1e-9)
    assert CONST.b2_direct == pytest.approx(CONST.B4, rel=1e-12)


def test_sign_pattern_guard():
    kw = {k: getattr(CONST, k) for k in (
        "A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4", "B5", "B6",
        "D1_magnitude", "D2_magnitude", "a_n", "b_n", "lambda1",
        "a2_direct", "b2_direct", "wp_z0", "transport_z0")}
    with pytest.raises(ValueError):
        bc.BubbleConstants(dimension=DIM, **{**kw, "A1": -kw["A1"]})


def test_to_dict_roundtrip():
    d = CONST.to_dict()
    assert d["n"] == 8
    assert d["A1"] == CONST.A1
    assert set(d) > {"a_n", "b_n", "lambda1", "wp_z0"}


@pytest.mark.parametrize("n", [9, 10])
def test_closed_form_ratios_other_dimensions(n):
    dim = bc.Dimension(n)
    c = bc.compute_constants(dim)
    assert c.a_n == pytest.approx(8.0 * (n - 2) / ((n - 3) * (n + 1)),
                                  abs=1e-8)
    assert c.b_n == pytest.approx((n - 3) ** 2 * (n - 5) / (4.0 * (n + 1)),
                                  abs=1e-8)
