"""Reduced pipeline along the geodesic: sigma, mu0, e0, mu1, e1, Q.

Two constant conventions run side by side:

* "closed-form": the projection constants appear in the combinations
  A2, B2 whose ratios give a_n = -A2/B3 and B2/A2 = (N-2)(N-3)/(4(N-1)),
  with the curvature coupling (2/3) sum R_ijij + sum R_0j0j.  This is the
  convention under which the first-order and log-order projection brackets
  vanish identically by construction of the pipeline.

* "measured": the direct quadratures a2_direct = int w Z_{N+1} and
  b2_direct = (1/N) int (y . grad w) Z_{N+1}, with coupling
  (1/3) sum R_ijij + sum R_0j0j, plus the transport correction
  mu0_dot^2 K0 in e0.  These are the coefficients that actually cancel the
  leading projections of the fully assembled field (see the ansatz module).

The regime flag fixes every +- chain: subcritical pairs with the
attractive singularity (s = -1), supercritical with the repulsive one
(s = +1).
"""

import math
from dataclasses import dataclass

import numpy as np

from .singular_ode import (PeriodicFunction, SingularOdeProblem,
                           solve_singular_periodic, solve_L_N1, _d2_matrix)


REGIMES = ("subcritical", "supercritical")


def regime_sign(regime):
    """s = -1 for subcritical/attractive, +1 for supercritical/repulsive."""
    if regime not in REGIMES:
        raise ValueError("regime must be subcritical or supercritical")
    return -1.0 if regime == "subcritical" else 1.0


def periodic_derivative(values, period, order=1):
    """Spectral derivative of smooth periodic grid samples."""
    values = np.asarray(values, dtype=float)
    m = values.shape[0]
    k = np.fft.fftfreq(m, d=1.0 / m)
    mult = (2j * math.pi * k / period) ** order
    return np.real(np.fft.ifft(mult * np.fft.fft(values, axis=0), axis=0)) \
        if values.ndim == 1 else np.real(np.fft.ifft(
            mult[:, None] * np.fft.fft(values, axis=0), axis=0))


# ---------------------------------------------------------------------------
# sigma (dual route)

@dataclass
class SigmaProfile:
    """sigma along the geodesic, computed through both available routes."""

    h: PeriodicFunction
    sigma: PeriodicFunction          # scalar-curvature route
    sigma_g1: PeriodicFunction       # g1 route, g1 / (-A2)
    sigma_measured: PeriodicFunction
    g1: np.ndarray
    g2: np.ndarray
    g1_measured: np.ndarray
    g2_measured: np.ndarray
    s2: np.ndarray                   # sum_{i,j>=1} R_ijij per sample
    ric: np.ndarray                  # Ric(gamma', gamma') per sample
    convention: str = "half-sum"


def compute_sigma(curvature, h, constants):
    """SigmaProfile from per-sample curvature and the potential h.

    curvature: sequence of CurvatureData sampled on h's grid (or a dict
    with arrays "s2" and "ric").  The scalar-curvature route uses the
    half-sum scalar (unordered frame pairs) and the frame-averaged Ricci
    Ric/N in its curvature slot; under exactly that convention it agrees
    with the g1 route for every model, which is why the flag is recorded.
    """
    m = h.samples
    if isinstance(curvature, dict):
        s2 = np.asarray(curvature["s2"], dtype=float)
        ric = np.asarray(curvature["ric"], dtype=float)
    else:
        s2 = np.array([c.normal_double_sum for c in curvature])
        ric = np.array([c.ric_tangent for c in curvature])
    if len(s2) != m or len(ric) != m:
        raise ValueError("curvature sampled on a different grid than h")

    n = constants.dimension.n
    P = h.period
    hv = h.values
    x23 = (2.0 / 3.0) * s2 + ric
    x13 = (1.0 / 3.0) * s2 + ric

    g1 = -constants.A2 * hv + constants.B2 * x23
    g2 = -constants.A4 * hv + constants.B6 * x23
    sigma_g1 = g1 / (-constants.A2)

    # scalar-curvature route under the recorded convention
    scalar_half = 0.5 * (s2 + 2.0 * ric)
    N = n - 1
    sigma = hv - (n - 3.0) * (n - 4.0) / (3.0 * (n - 2.0)) \
        * (scalar_half - (N / 4.0) * (ric / N))

    g1_meas = -constants.a2_direct * hv - constants.b2_direct * x13
    g2_meas = -constants.A4 * hv - constants.B6 * x13
    sigma_meas = g1_meas / (-constants.a2_direct)

    return SigmaProfile(
        h=h,
        sigma=PeriodicFunction(P, sigma),
        sigma_g1=PeriodicFunction(P, sigma_g1),
        sigma_measured=PeriodicFunction(P, sigma_meas),
        g1=g1, g2=g2, g1_measured=g1_meas, g2_measured=g2_meas,
        s2=s2, ric=ric)


# ---------------------------------------------------------------------------
# the parameter pipeline

def compute_mu0(sigma, constants, regime, samples=512, a=None):
    """Solve the concentration ODE -mu'' + a sigma mu + s b_n / mu = 0.

    The default coefficient is a_n (the closed-form convention).  The
    measured convention passes a = -a2_direct / B3, half of a_n, because
    the direct potential projection int w Z_{N+1} is half the closed-form
    A2 combination; with that choice a * sigma_measured = g1_measured / B3
    and the solved mu0 cancels the true first-order dilation projection.
    """
    sign = "attractive" if regime_sign(regime) < 0 else "repulsive"
    prob = SingularOdeProblem(sigma, constants.b_n, sign,
                              a=constants.a_n if a is None else a)
    return solve_singular_periodic(prob, samples=samples)


def measured_coefficient(constants):
    """ODE coefficient multiplying sigma_measured in the measured pipeline."""
    return -constants.a2_direct / constants.B3


def compute_e0(mu0, g2, constants, regime="subcritical",
               convention="closed-form"):
    """First corrector along the negative direction.

    closed-form: e0 = (A3 - mu0^2 g2) / lambda1 pointwise.
    measured:    e0 = (-s A3 - mu0^2 g2 - mu0'^2 K0) / lambda1, with the
    transport coefficient K0 = int (r^2 w'' + N r w' + N(N-2)/4 w) Z0 dy.
    """
    mu = mu0.values
    g2v = g2(mu0.grid) if isinstance(g2, PeriodicFunction) \
        else np.asarray(g2, dtype=float)
    lam1 = constants.lambda1
    if convention == "closed-form":
        vals = (constants.A3 - mu ** 2 * g2v) / lam1
    elif convention == "measured":
        s = regime_sign(regime)
        mudot = periodic_derivative(mu, mu0.period)
        vals = (-s * constants.A3 - mu ** 2 * g2v
                - mudot ** 2 * constants.transport_z0) / lam1
    else:
        raise ValueError("unknown convention %r" % convention)
    return PeriodicFunction(mu0.period, vals)


def compute_mu1(mu0, sigma, constants, regime, convention="closed-form",
                samples=None):
    """Log-order corrector of the concentration parameter.

    closed-form: solves -mu1'' mu0 B3 + mu1 (-mu0'' B3 + 2 mu0 g1) + D1 = 0,
    i.e. (after dividing by mu0 B3) the linearized concentration operator
    with constant forcing -D1/(mu0 B3), where D1 = s (N-2)^2/16 A1.
    measured: same linearized operator (with the measured coefficient
    -a2_direct/B3 in front of sigma), forced by the log-order source of
    the assembled field.  The exponent pairing of the amplitude factor
    with the concentration scale leaves a single log-order term
    (N-2)^2/16 * eps^2 ln(eps) * w^p in the scaled residual, whose
    dilation projection is D1_eff = (N-2)^2/16 * a2_direct, independent
    of the regime sign (the sign enters squared).
    """
    P = mu0.period
    s = regime_sign(regime)
    N = constants.dimension.N
    mu = mu0.values
    sigv = sigma(mu0.grid)
    if convention == "closed-form":
        a = constants.a_n
        D1 = s * (N - 2) ** 2 / 16.0 * constants.A1
    elif convention == "measured":
        a = measured_coefficient(constants)
        D1 = (N - 2) ** 2 / 16.0 * constants.a2_direct
    else:
        raise ValueError("unknown convention %r" % convention)
    # linearized coefficient a sigma - s b_n / mu0^2, from the mu0 ODE
    q = a * sigv - s * constants.b_n / mu ** 2
    f = -D1 / (mu * constants.B3)
    mu1 = solve_L_N1(PeriodicFunction(P, q), PeriodicFunction(P, f),
                     samples=samples or mu0.samples)
    return PeriodicFunction(P, mu1(mu0.grid), info=mu1.info)


def compute_e1(mu0, mu1, constants, regime="subcritical",
               convention="closed-form", e0=None, g2=None):
    """Log-order corrector along the negative direction.

    closed-form: e1 = (-2 mu0 mu1 - D2)/lambda1, D2 = s (N-2)^2/16 A3.
    measured:    e1 = -(D2_eff + 2 mu0 mu1 g2 + 2 mu0' mu1' K0)/lambda1,
    with D2_eff = (N-2)^2/16 (int w^p Z0 - s lambda1 e0): the log-order
    variation of the first-order balance under mu0 -> mu0 + eps ln(eps)
    mu1, plus the direct log-order source of the amplitude pairing.
    """
    lam1 = constants.lambda1
    s = regime_sign(regime)
    N = constants.dimension.N
    if convention == "closed-form":
        D2 = s * (N - 2) ** 2 / 16.0 * constants.A3
        vals = (-2.0 * mu0.values * mu1.values - D2) / lam1
    elif convention == "measured":
        if e0 is None or g2 is None:
            raise ValueError("measured e1 needs the measured e0 and g2")
        g2v = g2(mu0.grid) if isinstance(g2, PeriodicFunction) \
            else np.asarray(g2, dtype=float)
        d2_eff = (N - 2) ** 2 / 16.0 \
            * (constants.wp_z0 - s * lam1 * e0.values)
        mu0dot = periodic_derivative(mu0.values, mu0.period)
        mu1dot = periodic_derivative(mu1.values, mu1.period)
        vals = -(d2_eff + 2.0 * mu0.values * mu1.values * g2v
                 + 2.0 * mu0dot * mu1dot * constants.transport_z0) / lam1
    else:
        raise ValueError("unknown convention %r" % convention)
    return PeriodicFunction(mu0.period, vals)


@dataclass
class AnsatzParams:
    """Complete parameter set entering the approximate solution."""

    eps: float
    regime: str
    convention: str
    mu0: PeriodicFunction
    mu1: PeriodicFunction
    e0: PeriodicFunction
    e1: PeriodicFunction
    d: PeriodicFunction = None       # vector-valued, optionally twisted

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        regime_sign(self.regime)
        if np.min(self.mu0.values) <= 0:
            raise ValueError("mu0 must be positive")


def build_params(sigma_profile, constants, regime, eps, d=None,
                 convention="closed-form", samples=512):
    """Run the full mu0 -> e0 -> mu1 -> e1 pipeline."""
    if convention == "closed-form":
        sigma = sigma_profile.sigma_g1
        g2 = sigma_profile.g2
        a = None
    elif convention == "measured":
        sigma = sigma_profile.sigma_measured
        g2 = sigma_profile.g2_measured
        a = measured_coefficient(constants)
    else:
        raise ValueError("unknown convention %r" % convention)
    sol = compute_mu0(sigma, constants, regime, samples=samples, a=a)
    mu0 = sol.mu0
    grid_g2 = PeriodicFunction(sigma.period, np.asarray(g2, dtype=float))
    g2v = grid_g2(mu0.grid)
    e0 = compute_e0(mu0, g2v, constants, regime=regime,
                    convention=convention)
    mu1 = compute_mu1(mu0, sigma, constants, regime, convention=convention)
    e1 = compute_e1(mu0, mu1, constants, regime=regime,
                    convention=convention, e0=e0,
                    g2=PeriodicFunction(mu0.period, g2v))
    params = AnsatzParams(eps=eps, regime=regime, convention=convention,
                          mu0=mu0, mu1=mu1, e0=e0, e1=e1, d=d)
    params.mu0_solution = sol
    return params


# ---------------------------------------------------------------------------
# quadratic form and predicted projections

def quadratic_Q(d, curvature):
    """Q(x0, d) = sum_j d_j'^2 - (1/3) sum R_ikil d_k d_l, per sample."""
    dv = d.values
    if dv.ndim != 2:
        raise ValueError("d must be vector-valued")
    m, N = dv.shape
    ddot = periodic_derivative(dv, d.period)
    if isinstance(curvature, dict):
        rikjl = np.asarray(curvature["rikjl"], dtype=float)
    elif curvature is None:
        rikjl = np.zeros((m, N, N, N, N))
    else:
        rikjl = np.array([c.rikjl for c in curvature])
    ric_normal = np.einsum("tikil->tkl", rikjl)
    quad = np.einsum("tkl,tk,tl->t", ric_normal, dv, dv)
    return PeriodicFunction(d.period, np.sum(ddot ** 2, axis=1)
                            - quad / 3.0)


def predicted_projections(params, sigma_profile, curvature, constants):
    """Leading-order kernel projections predicted by the pipeline.

    Returns per-sample arrays: the translation projections
    eps^(3/2) c1 mu0 (-d_k'' + sum R0k0l^flip d_j) with c1 = B4 and the
    curvature sign flipped relative to the geometric tensor; the
    first-order and log-order bracket coefficients of the dilation and
    negative-direction projections (identically zero on the grid when the
    parameters come from the pipeline); and the surviving second-order
    pieces that can be formed from known constants.  The dilation brackets
    are reported in the normalization of the concentration ODE, i.e.
    divided by mu0 B3, so "vanishing" is a parameter-free statement; the
    second derivatives use the same fourth-order periodic stencil as the
    collocation solver.  The c-constants whose identification is only
    structural are exposed as entries rather than baked into formulas.
    """
    s = regime_sign(params.regime)
    lam1 = constants.lambda1
    N = constants.dimension.N
    mu0, mu1 = params.mu0.values, params.mu1.values
    e0, e1 = params.e0.values, params.e1.values
    P = params.mu0.period
    grid = params.mu0.grid
    eps = params.eps
    m = params.mu0.samples

    if params.convention == "closed-form":
        sigma = sigma_profile.sigma_g1
        g2 = np.asarray(sigma_profile.g2, dtype=float)
        D1 = s * (N - 2) ** 2 / 16.0 * constants.A1
        D2 = s * (N - 2) ** 2 / 16.0 * constants.A3
        A3_signed = constants.A3
    else:
        sigma = sigma_profile.sigma_measured
        g2 = np.asarray(sigma_profile.g2_measured, dtype=float)
        D1 = (N - 2) ** 2 / 16.0 * constants.a2_direct
        D2 = (N - 2) ** 2 / 16.0 * (constants.wp_z0 - s * lam1 * e0)
        A3_signed = s * constants.A3

    a_coeff = constants.a_n if params.convention == "closed-form" \
        else measured_coefficient(constants)
    sigv = sigma(grid)
    g2v = PeriodicFunction(P, g2)(grid)
    D2mat = _d2_matrix(m, P, order=4)
    mu0dd = D2mat @ mu0
    mu1dd = D2mat @ mu1
    q_lin = a_coeff * sigv - s * constants.b_n / mu0 ** 2

    out = {
        # (bracket / (mu0 B3)): the concentration-ODE residual itself
        "eps_bracket_dilation": -mu0dd + a_coeff * sigv * mu0
        + s * constants.b_n / mu0,
        # log-order bracket, same normalization
        "log_bracket_dilation": -mu1dd + q_lin * mu1
        + D1 / (mu0 * constants.B3),
        "c_constants": {"c1": constants.B4, "c2": constants.B3,
                        "c3": constants.B1, "c4": constants.B5},
    }
    if params.convention == "closed-form":
        out["eps_bracket_negative"] = lam1 * e0 - A3_signed + mu0 ** 2 * g2v
        out["log_bracket_negative"] = lam1 * e1 + 2.0 * mu0 * mu1 + D2
    else:
        mudot = periodic_derivative(mu0, P)
        mu1dot = periodic_derivative(mu1, P)
        out["eps_bracket_negative"] = (
            lam1 * e0 + A3_signed + mu0 ** 2 * g2v
            + mudot ** 2 * constants.transport_z0)
        out["log_bracket_negative"] = (
            lam1 * e1 + D2 + 2.0 * mu0 * mu1 * g2v
            + 2.0 * mudot * mu1dot * constants.transport_z0)

    if params.d is not None:
        dv = params.d.values
        if isinstance(curvature, dict):
            r0k0l = np.asarray(curvature["r0k0l"], dtype=float)
        elif curvature is None:
            r0k0l = np.zeros((len(grid), N, N))
        else:
            r0k0l = np.array([c.r0k0l for c in curvature])
        dddot = periodic_derivative(dv, P, order=2)
        # the working curvature convention is the sign flip of the
        # geometric tensor, so the forcing is the Jacobi operator
        force = -dddot - np.einsum("tkl,tl->tk", r0k0l, dv)
        out["translation"] = eps ** 1.5 * constants.B4 \
            * mu0[:, None] * force
        q_form = quadratic_Q(params.d, curvature)
        out["quadratic_Q"] = q_form.values
        out["eps2_dilation_known"] = eps ** 2 * constants.B1 * q_form.values
        out["eps2_negative_known"] = eps ** 2 * constants.B5 * q_form.values
    return out


def pipeline_report(params, sigma_profile, constants, curvature=None):
    """JSON-serializable summary of the full reduction pipeline."""
    proj = predicted_projections(params, sigma_profile, curvature, constants)
    sol = getattr(params, "mu0_solution", None)
    report = {
        "regime": params.regime,
        "convention": params.convention,
        "eps": params.eps,
        "period": params.mu0.period,
        "sigma": sigma_profile.sigma.values.tolist(),
        "sigma_g1": sigma_profile.sigma_g1.values.tolist(),
        "sigma_measured": sigma_profile.sigma_measured.values.tolist(),
        "mu0": params.mu0.values.tolist(),
        "mu1": params.mu1.values.tolist(),
        "e0": params.e0.values.tolist(),
        "e1": params.e1.values.tolist(),
        "bracket_norms": {
            k: float(np.max(np.abs(v)))
            for k, v in proj.items()
            if k.endswith(("_dilation", "_negative"))},
        "c_constants": proj["c_constants"],
    }
    if sol is not None:
        report["floquet"] = [[complex(z).real, complex(z).imag]
                             for z in np.atleast_1d(sol.floquet)]
        report["nondegenerate"] = bool(sol.nondegenerate)
        report["ode_residual"] = float(sol.residual)
    return report
