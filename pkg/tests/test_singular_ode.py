"""Tests for the singular periodic ODE solvers and reduced linear operators.

Independent oracles: constant-balance closed forms, multiple-shooting for
the nonlinear problem, Fourier/modal solutions for the linear operators,
and constant-coefficient resonance sets.
"""

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from geobubble import singular_ode as so

A_N, B_N = 16.0 / 15.0, 25.0 / 12.0
P = 2.0 * math.pi
LAM1 = 7.786934367451442


def const_pf(value, m=64):
    return so.PeriodicFunction(P, np.full(m, float(value)))


# ---------------------------------------------------------------------------
# PeriodicFunction

def test_periodic_function_interpolation_exact_for_bandlimited():
    f = so.PeriodicFunction.from_callable(
        lambda t: 1.0 + 0.5 * math.cos(3.0 * t) - 0.2 * math.sin(t), P, 64)
    for t in (0.123, 1.9, 5.5):
        assert f(t) == pytest.approx(
            1.0 + 0.5 * math.cos(3.0 * t) - 0.2 * math.sin(t), abs=1e-12)


def test_twist_validation():
    vals = np.zeros((16, 2))
    with pytest.raises(ValueError):
        so.PeriodicFunction(P, vals, twist=np.array([[1.0, 1.0],
                                                     [0.0, 1.0]]))
    with pytest.raises(ValueError):
        so.PeriodicFunction(P, np.zeros(16), twist=np.eye(2))


# ---------------------------------------------------------------------------
# existence windows

def test_attractive_needs_positive_sigma():
    with pytest.raises(ValueError):
        so.SingularOdeProblem(const_pf(-1.0), B_N, "attractive", a=A_N)
    prob = so.SingularOdeProblem(const_pf(-1.0), B_N, "attractive", a=A_N,
                                 override_existence=True)
    assert prob.s == -1.0


def test_repulsive_window_recorded():
    # a sigma = -0.5 lies in (-1, -1/4): the k = 1 window for l = pi
    prob = so.SingularOdeProblem(const_pf(-0.5 / A_N), B_N, "repulsive",
                                 a=A_N)
    assert prob.window_k == 1
    with pytest.raises(ValueError):
        so.SingularOdeProblem(const_pf(-0.1 / A_N), B_N, "repulsive", a=A_N)


# ---------------------------------------------------------------------------
# the nonlinear solver

def test_constant_attractive_balance():
    prob = so.SingularOdeProblem(const_pf(1.0), B_N, "attractive", a=A_N)
    sol = so.solve_singular_periodic(prob, samples=256)
    assert np.max(np.abs(sol.mu0.values - 5.0 * math.sqrt(5.0) / 8.0)) < 1e-10
    assert sol.residual < 1e-10
    assert sol.nondegenerate


def test_constant_repulsive_balance():
    sval = 0.5 / A_N
    prob = so.SingularOdeProblem(const_pf(-sval), B_N, "repulsive", a=A_N)
    sol = so.solve_singular_periodic(prob, samples=256)
    assert np.max(np.abs(sol.mu0.values
                         - math.sqrt(B_N / (A_N * sval)))) < 1e-10


def test_varying_sigma_matches_shooting_oracle():
    sigma = so.PeriodicFunction.from_callable(
        lambda t: 1.0 + 0.3 * math.cos(t), P, 128)
    prob = so.SingularOdeProblem(sigma, B_N, "attractive", a=A_N)
    sol = so.solve_singular_periodic(prob, samples=512)
    oracle = so.solve_singular_shooting(prob)
    err = max(abs(sol.mu0(t) - oracle(t)) for t in np.linspace(0, P, 37))
    assert err < 1e-8
    assert sol.residual < 1e-10
    assert np.min(sol.mu0.values) > 0.0


def test_collocation_convergence_order():
    sigma = so.PeriodicFunction.from_callable(
        lambda t: 1.0 + 0.3 * math.cos(t), P, 128)
    prob = so.SingularOdeProblem(sigma, B_N, "attractive", a=A_N)
    oracle = so.solve_singular_shooting(prob)
    errs = []
    for m in (48, 96):
        sol = so.solve_singular_periodic(prob, samples=m)
        errs.append(max(abs(sol.mu0(t) - oracle(t))
                        for t in np.linspace(0, P, 17)))
    order = math.log2(errs[0] / errs[1])
    assert abs(order - 4.0) < 0.5    # designed fourth-order stencil


def test_positivity_guard_on_guess():
    prob = so.SingularOdeProblem(const_pf(1.0), B_N, "attractive", a=A_N)
    with pytest.raises(ValueError):
        so.solve_singular_periodic(prob, guess=-1.0)


# ---------------------------------------------------------------------------
# Floquet / nondegeneracy

def test_attractive_always_nondegenerate():
    for amp in (0.0, 0.2, 0.45):
        sigma = so.PeriodicFunction.from_callable(
            lambda t: 1.0 + amp * math.cos(2.0 * t), P, 128)
        prob = so.SingularOdeProblem(sigma, B_N, "attractive", a=A_N)
        sol = so.solve_singular_periodic(prob, samples=256)
        assert sol.nondegenerate
        rep = so.linearized_nondegeneracy(sol, prob)
        assert not rep["degenerate"]


def test_repulsive_constant_degeneracy_located():
    # linearized coefficient 2 a sigma; degenerate iff -2 a sigma = m^2
    # (l = pi).  m = 1 sits at a sigma = -1/2, inside the k = 1 window.
    def m12_of(asig):
        prob = so.SingularOdeProblem(const_pf(asig / A_N), B_N, "repulsive",
                                     a=A_N)
        sol = so.solve_singular_periodic(prob, samples=128)
        q = A_N * prob.sigma(0.0) - prob.s * B_N / sol.mu0(0.0) ** 2
        return so._hill_monodromy(lambda t: q, P)[0, 1]

    root = brentq(m12_of, -0.55, -0.45, xtol=1e-10)
    assert abs(root - (-0.5)) < 1e-6

    prob = so.SingularOdeProblem(const_pf(-0.5 / A_N), B_N, "repulsive",
                                 a=A_N)
    sol = so.solve_singular_periodic(prob, samples=128)
    assert not sol.nondegenerate
    probe = so.SingularOdeProblem(const_pf(-(0.5 + 1e-3) / A_N), B_N,
                                  "repulsive", a=A_N)
    sole = so.solve_singular_periodic(probe, samples=128)
    rep = so.linearized_nondegeneracy(sole, probe)
    assert not rep["degenerate"]
    assert rep["distance_to_one"] > 0.0


def test_perturb_to_nondegenerate():
    prob = so.SingularOdeProblem(const_pf(-0.5 / A_N, 128), B_N, "repulsive",
                                 a=A_N)
    sigma2 = so.perturb_to_nondegenerate(prob, 0.05 / A_N, seed=11)
    prob2 = so.SingularOdeProblem(sigma2, B_N, "repulsive", a=A_N)
    assert prob2.window_k == 1      # window survives the perturbation
    sol = so.solve_singular_periodic(prob2, samples=256)
    assert sol.nondegenerate
    # deterministic in the seed
    sigma3 = so.perturb_to_nondegenerate(prob, 0.05 / A_N, seed=11)
    assert np.array_equal(sigma2.values, sigma3.values)
    # an already nondegenerate problem is returned unchanged
    good = so.SingularOdeProblem(const_pf(-0.4 / A_N, 128), B_N, "repulsive",
                                 a=A_N)
    out = so.perturb_to_nondegenerate(good, 0.05 / A_N, seed=3)
    assert np.max(np.abs(out.values - good.sigma(out.grid))) < 1e-12


# ---------------------------------------------------------------------------
# L_N1

def test_L_N1_constants_and_modes():
    q, f = const_pf(1.0), const_pf(1.0)
    mu = so.solve_L_N1(q, f)
    assert np.max(np.abs(mu.values - 1.0)) < 1e-9
    f2 = so.PeriodicFunction.from_callable(math.cos, P, 64)
    mu2 = so.solve_L_N1(q, f2)
    assert np.max(np.abs(mu2.values - np.cos(mu2.grid) / 2.0)) < 1e-9
    assert mu2.info["residual"] < 1e-10


def test_L_N1_matches_fourier_oracle():
    rng = np.random.default_rng(5)
    m = 128
    t = np.arange(m) * P / m
    qv = 1.0 + 0.4 * np.cos(t) + 0.1 * np.sin(2 * t)
    fv = np.cos(3 * t) + 0.7 * np.sin(t) + 0.3
    q = so.PeriodicFunction(P, qv)
    f = so.PeriodicFunction(P, fv)
    mu = so.solve_L_N1(q, f, samples=2048)
    # independent Fourier-collocation oracle
    D2 = so._fourier_d2(m, P)
    oracle = np.linalg.solve(-D2 + np.diag(qv), fv)
    assert np.max(np.abs(mu(t) - oracle)) < 1e-8
    assert mu.info["bound_constant"] > 0.0


def test_L_N1_linearity():
    q = const_pf(1.3, 128)
    t = np.arange(128) * P / 128
    f = so.PeriodicFunction(P, np.cos(2 * t))
    g = so.PeriodicFunction(P, np.sin(t) + 0.5)
    comb = so.PeriodicFunction(P, 2.0 * f.values - 3.0 * g.values)
    lhs = so.solve_L_N1(q, comb).values
    rhs = 2.0 * so.solve_L_N1(q, f).values - 3.0 * so.solve_L_N1(q, g).values
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_L_N1_degenerate_detection():
    # q = 0: constants solve the homogeneous problem
    with pytest.raises(so.Degenerate):
        so.solve_L_N1(const_pf(0.0), const_pf(1.0))


# ---------------------------------------------------------------------------
# L_k

def test_L_k_modal_constant_curvature():
    m, N = 256, 3
    K = np.diag([0.3, 0.7, 1.3])
    Mt = np.tile(K, (m, 1, 1))
    t = np.arange(m) * P / m
    fv = np.zeros((m, N))
    fv[:, 0] = np.cos(t)
    d = so.solve_L_k(Mt, so.PeriodicFunction(P, fv))
    assert np.max(np.abs(d.values[:, 0] - np.cos(t) / 1.3)) < 1e-8
    assert np.max(np.abs(d.values[:, 1:])) < 1e-8
    assert d.info["residual"] < 1e-10


def test_L_k_zero_curvature_degenerate():
    m, N = 64, 2
    Mt = np.zeros((m, N, N))
    fv = np.ones((m, N))
    with pytest.raises(so.Degenerate):
        so.solve_L_k(Mt, so.PeriodicFunction(P, fv))


def test_L_k_twisted_modal():
    # quarter-turn twist: d(t + P) = A d(t) with A the rotation by pi/2;
    # twisted modes run at frequencies (pi/2 + 2 pi j)/P
    m, N = 512, 2
    alpha = math.pi / 2.0
    A = np.array([[math.cos(alpha), -math.sin(alpha)],
                  [math.sin(alpha), math.cos(alpha)]])
    k0 = 0.6
    Mt = np.tile(k0 * np.eye(N), (m, 1, 1))
    t = np.arange(m) * P / m
    w = alpha / P + 1.0          # j = 1 twisted frequency... (pi/2 + 2pi)/P
    w = (alpha + 2.0 * math.pi) / P
    fv = np.column_stack([np.cos(w * t), np.sin(w * t)])
    d = so.solve_L_k(Mt, so.PeriodicFunction(P, fv), twist=A)
    expect = fv / (w * w + k0)
    assert np.max(np.abs(d.values - expect)) < 1e-6
    assert d.info["residual"] < 1e-10


def test_L_k_matches_dense_refinement():
    # generic smooth curvature: halving the spacing shrinks the error by
    # the designed fourth-order factor
    N = 2
    t_of = lambda m: np.arange(m) * P / m

    def build(m):
        t = t_of(m)
        Mt = np.empty((m, N, N))
        Mt[:, 0, 0] = 0.5 + 0.2 * np.cos(t)
        Mt[:, 1, 1] = 0.9 - 0.1 * np.sin(t)
        Mt[:, 0, 1] = Mt[:, 1, 0] = 0.05 * np.cos(2 * t)
        fv = np.column_stack([np.cos(t), np.sin(2 * t)])
        return Mt, so.PeriodicFunction(P, fv)

    Mt, f = build(1024)
    ref = so.solve_L_k(Mt, f).values
    errs = []
    for m in (64, 128):
        Mt, f = build(m)
        d = so.solve_L_k(Mt, f).values
        errs.append(np.max(np.abs(d - ref[::1024 // m])))
    order = math.log2(errs[0] / errs[1])
    assert abs(order - 4.0) < 0.6


# ---------------------------------------------------------------------------
# L_0 and the gap condition

def test_L_0_constant_and_mode():
    a0, f = const_pf(1.0), const_pf(1.0)
    e = so.solve_L_0(a0, f, 0.05, LAM1)
    assert np.max(np.abs(e.values - 1.0 / LAM1)) < 1e-10
    f2 = so.PeriodicFunction.from_callable(math.cos, P, 64)
    e2 = so.solve_L_0(a0, f2, 0.05, LAM1)
    assert np.max(np.abs(e2.values - np.cos(e2.grid) / (LAM1 - 0.05))) < 1e-10


def test_L_0_near_resonance_raises():
    a0, f = const_pf(1.0), const_pf(1.0)
    for m in (4, 7):
        with pytest.raises(so.NearResonance):
            so.solve_L_0(a0, f, LAM1 / m ** 2, LAM1)


def test_L_0_smooth_a0_vs_stiff_oracle():
    m = 256
    t = np.arange(m) * P / m
    a0 = so.PeriodicFunction(P, 1.0 + 0.2 * np.cos(t))
    f = so.PeriodicFunction(P, np.cos(2 * t) + 0.5)
    eps = 0.043
    e = so.solve_L_0(a0, f, eps, LAM1, samples=512)
    # independent dense fourth-order stencil at fine resolution
    mo = 16384
    to = np.arange(mo) * P / mo
    D2 = None
    import scipy.sparse as sp
    h = P / mo
    offs = {0: -30.0 / 12.0, 1: 16.0 / 12.0, -1: 16.0 / 12.0,
            2: -1.0 / 12.0, -2: -1.0 / 12.0}
    rows, cols, vals = [], [], []
    for off, wgt in offs.items():
        rows.extend(range(mo))
        cols.extend((np.arange(mo) + off) % mo)
        vals.extend([wgt / h ** 2] * mo)
    D2 = sp.csr_matrix((vals, (rows, cols)), shape=(mo, mo))
    a0v = a0(to)
    A = sp.diags(eps * a0v) @ D2 + LAM1 * sp.identity(mo)
    import scipy.sparse.linalg as spla
    oracle = spla.spsolve(A.tocsc(), f(to))
    assert np.max(np.abs(e(to) - oracle)) < 1e-8
    assert e.info["residual"] < 1e-10
    assert e.info["bound_constant"] > 0.0


def test_L_0_linearity():
    a0 = const_pf(1.0, 128)
    t = np.arange(128) * P / 128
    f = so.PeriodicFunction(P, np.cos(t))
    g = so.PeriodicFunction(P, np.sin(3 * t))
    comb = so.PeriodicFunction(P, 1.5 * f.values + 0.5 * g.values)
    lhs = so.solve_L_0(a0, comb, 0.05, LAM1).values
    rhs = (1.5 * so.solve_L_0(a0, f, 0.05, LAM1).values
           + 0.5 * so.solve_L_0(a0, g, 0.05, LAM1).values)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_gap_check_constant_a0():
    a0 = const_pf(1.0)
    rep = so.gap_check(0.05, a0, LAM1)
    assert rep.holds and not rep.violating_k
    # monodromy-derived resonances reproduce lam1/k^2
    for k, eps_k in enumerate(rep.resonances[:6], start=1):
        assert eps_k == pytest.approx(LAM1 / k ** 2, rel=1e-10)
    # kappa vs the monodromy normalization differ by the fixed pi^2 factor
    assert rep.kappa == pytest.approx(math.pi ** 2 * rep.kappa_monodromy,
                                      rel=1e-12)


def test_gap_check_violation_and_margin():
    a0 = const_pf(1.0)
    rep = so.gap_check(0.05, a0, LAM1)
    k = 3
    bad = so.gap_check(rep.kappa ** 2 / k ** 2, a0, LAM1)
    assert not bad.holds and k in bad.violating_k
    # sitting exactly 2 nu sqrt(eps) away from the nearest resonance passes
    eps = rep.kappa ** 2 / k ** 2
    nu = 0.1
    shifted = (rep.kappa ** 2 + 2.0 * nu * math.sqrt(eps)) / k ** 2
    ok = so.gap_check(shifted, a0, LAM1, nu=nu)
    assert ok.holds
