"""Standard bubble, its linearization spectrum, and projection constants.

Everything lives on R^N with N = n - 1.  The bubble is the radial function

    w(y) = c_N (1 + |y|^2)^(-(N-2)/2),    c_N = [N(N-2)]^((N-2)/4),

which solves Delta w + w^p = 0 with p = (N+2)/(N-2).  The kernel of the
linearized operator L0 = Delta + p w^(p-1) is spanned by the translations
Z_j = d_j w (j = 1..N) and the dilation Z_{N+1} = y.grad w + (N-2)/2 w;
L0 also has a single positive eigenvalue lambda1 with radial, exponentially
decaying eigenfunction Z0 (normalized in L^2).

All integrals over R^N reduce to radial 1D integrals against the measure
omega_N r^(N-1) dr; no high-dimensional quadrature happens here.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import make_interp_spline
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import beta as beta_fn

__all__ = [
    "Dimension", "RadialGrid", "EigenPair", "BubbleConstants",
    "eval_bubble", "eval_kernel", "solve_negative_eigenpair",
    "compute_constants", "ipq", "kernel_residual", "eigen_residual",
    "measured_decay_rate", "radial_integral", "sphere_area", "a1_via_mass",
]


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class Dimension:
    """Ambient dimension n >= 8 with the derived transverse quantities."""

    n: int

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("ambient dimension must satisfy n >= 8, got %d" % self.n)

    @property
    def N(self):
        return self.n - 1

    @property
    def p(self):
        return (self.N + 2) / (self.N - 2)

    @property
    def c_N(self):
        return (self.N * (self.N - 2)) ** ((self.N - 2) / 4.0)


@dataclass
class RadialGrid:
    """Sampled radial profile with a documented far-field decay exponent.

    nodes are strictly increasing, start at 0 and are uniformly spaced;
    interpolation is quintic-spline (error O(h^6) for smooth profiles).
    Beyond the last node the profile is treated as zero, which is adequate
    only for exponentially decaying profiles (the sole use here).
    """

    nodes: np.ndarray
    values: np.ndarray
    decay_exponent: float

    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.nodes[0] != 0.0 or np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must start at 0 and increase strictly")
        self._spline = make_interp_spline(self.nodes, self.values, k=5)

    def __call__(self, r, nu=0):
        """Profile (or its nu-th derivative) at r; zero beyond the grid."""
        r = np.asarray(r, dtype=float)
        out = self._spline(np.minimum(r, self.nodes[-1]), nu)
        return np.where(r <= self.nodes[-1], out, 0.0)

    def derivative(self, r):
        return self(r, nu=1)


@dataclass
class EigenPair:
    """Positive eigenvalue lambda1 and its radial L^2-normalized profile."""

    lambda1: float
    z0: RadialGrid
    z0_prime: RadialGrid = None

    def __post_init__(self):
        if self.lambda1 <= 0:
            raise ValueError("lambda1 must be positive")


@dataclass
class BubbleConstants:
    """Projection constants of the reduction, for one dimension.

    The A2/B2 fields follow the closed-form convention in which
    a_n = -A2/B3 = 8(n-2)/((n-3)(n+1)) and B2/A2 = (N-2)(N-3)/(4(N-1)).
    The direct quadratures of int w Z_{N+1} dy and int y_j d_j w Z_{N+1} dy
    do not reproduce that convention (they differ by factors 2 and -8/3);
    they are carried in a2_direct/b2_direct because the measured residual
    cancellation is driven by the direct values (see the reduction module).
    """

    dimension: Dimension
    A1: float
    A2: float
    A3: float
    A4: float
    B1: float
    B2: float
    B3: float
    B4: float
    B5: float
    B6: float
    D1_magnitude: float
    D2_magnitude: float
    a_n: float
    b_n: float
    lambda1: float
    # direct-quadrature companions used by the measured pipeline
    a2_direct: float
    b2_direct: float
    wp_z0: float          # int w^p Z0 dy
    transport_z0: float   # int (r^2 w'' + N r w' + N(N-2)/4 w) Z0 dy

    def __post_init__(self):
        checks = (self.A1 > 0, self.A2 < 0, self.B2 < 0, self.B3 > 0,
                  self.B4 > 0, self.a_n > 0, self.b_n > 0)
        if not all(checks):
            raise ValueError("constant sign pattern violated")

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4", "B5", "B6",
            "D1_magnitude", "D2_magnitude", "a_n", "b_n", "lambda1",
            "a2_direct", "b2_direct", "wp_z0", "transport_z0")}
        d["n"] = self.dimension.n
        return d


# ---------------------------------------------------------------------------
# bubble and kernel evaluation

def sphere_area(N):
    """Surface measure of the unit sphere S^(N-1) in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def _w(dim, r):
    return dim.c_N * (1.0 + r * r) ** (-(dim.N - 2) / 2.0)


def _dw(dim, r):
    N = dim.N
    return -dim.c_N * (N - 2) * r * (1.0 + r * r) ** (-N / 2.0)


def _ddw(dim, r):
    N = dim.N
    c = dim.c_N
    return (-c * (N - 2) * (1.0 + r * r) ** (-N / 2.0)
            + c * N * (N - 2) * r * r * (1.0 + r * r) ** (-N / 2.0 - 1.0))


def _zn1(dim, r):
    return r * _dw(dim, r) + (dim.N - 2) / 2.0 * _w(dim, r)


def eval_bubble(dim, y):
    """w(y) for y a point (or array of points, last axis = N) in R^N."""
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(y, axis=-1)
    return _w(dim, r)


def eval_kernel(dim, j, y, eigenpair=None):
    """Kernel element Z_j at y: translations for j <= N, dilation for N+1.

    j = 0 additionally evaluates the radial eigenfunction Z0 (an eigenpair
    may be supplied, otherwise it is solved on demand and cached).
    """
    N = dim.N
    if not 0 <= j <= N + 1:
        raise IndexError("kernel index must lie in 0..N+1, got %d" % j)
    y = np.asarray(y, dtype=float)
    r = np.linalg.norm(y, axis=-1)
    if j == 0:
        ep = eigenpair if eigenpair is not None else solve_negative_eigenpair(dim)
        return ep.z0(r)
    if j == N + 1:
        return _zn1(dim, r)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = _dw(dim, r) * y[..., j - 1] / r
    return np.where(r > 0, out, 0.0)


# ---------------------------------------------------------------------------
# radial quadrature engine

def radial_integral(f, N, r_max=None, tail_power=None, gl_order=48):
    """omega_N * int_0^inf f(r) r^(N-1) dr by panel Gauss-Legendre.

    The integrand F(r) = f(r) r^(N-1) is integrated on panels (uniform up to
    r = 1, geometric after) up to r_max.  If the power-law decay F ~ c r^-q
    is declared via tail_power = q, r_max is grown until the analytic tail
    estimate |F(r_max)| r_max/(q-1) is negligible and that tail correction is
    added; otherwise the profile is assumed negligible beyond r_max.
    """
    if r_max is None:
        if tail_power is None:
            raise ValueError("need r_max or tail_power")
        r_max = 8.0
        for _ in range(60):
            Fr = abs(f(np.array([r_max]))[0]) * r_max ** (N - 1)
            if Fr * r_max / (tail_power - 1.0) < 1e-14:
                break
            r_max *= 2.0

    edges = list(np.linspace(0.0, min(1.0, r_max), 9))
    e = edges[-1]
    while e < r_max:
        e = min(e * 10.0 ** 0.125, r_max)
        edges.append(e)
    x, wq = np.polynomial.legendre.leggauss(gl_order)

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        rr = 0.5 * (b - a) * x + 0.5 * (b + a)
        total += 0.5 * (b - a) * np.sum(wq * f(rr) * rr ** (N - 1))

    if tail_power is not None:
        Fr = f(np.array([r_max]))[0] * r_max ** (N - 1)
        total += Fr * r_max / (tail_power - 1.0)
    return sphere_area(N) * total


def ipq(p, q):
    """int_0^inf r^q (1+r)^(-p) dr = B(q+1, p-q-1), finite iff p - q > 1."""
    if p - q <= 1:
        raise ValueError("integral diverges unless p - q > 1")
    return float(beta_fn(q + 1.0, p - q - 1.0))


# ---------------------------------------------------------------------------
# negative-direction eigenpair (lambda1, Z0)

def _radial_u_rhs(dim, lam):
    """RHS for u'' = (lam + Vc(r) - p w^(p-1)) u with u = r^((N-1)/2) Z0."""
    N, p = dim.N, dim.p

    def rhs(r, uv):
        vc = (N - 1.0) * (N - 3.0) / (4.0 * r * r)
        pot = lam + vc - p * _w(dim, r) ** (p - 1.0)
        return [uv[1], pot * uv[0]]

    return rhs


def _z_series_coeffs(dim, lam):
    """Leading even-Taylor coefficients of z(r) = 1 + a r^2 + b r^4 at 0."""
    N, p = dim.N, dim.p
    v0 = p * dim.c_N ** (p - 1.0)
    a = (lam - v0) / (2.0 * N)
    b = (2.0 * v0 - (v0 - lam) * a) / (4.0 * N + 8.0)
    return a, b

def _shoot(dim, lam, r0, r_match, r_far, dense=False):
    """Outward (regular z-form) / inward (u-form) integrations for one lam.

    The outward leg integrates z'' + (N-1)/r z' + (p w^(p-1) - lam) z = 0
    starting from the even Taylor series at r0 (the series remainder there is
    O(r0^6), far below the integrator tolerance).  The inward leg uses the
    Liouville form u = r^((N-1)/2) z, whose far field is a clean decaying
    exponential.
    """
    N, p = dim.N, dim.p

    def rhs_z(r, zv):
        pot = p * _w(dim, r) ** (p - 1.0) - lam
        return [zv[1], -(N - 1.0) / r * zv[1] - pot * zv[0]]

    a, b = _z_series_coeffs(dim, lam)
    z0 = 1.0 + a * r0 ** 2 + b * r0 ** 4
    z1 = 2.0 * a * r0 + 4.0 * b * r0 ** 3
    out = solve_ivp(rhs_z, (r0, r_match), [z0, z1],
                    rtol=1e-13, atol=1e-300, method="DOP853",
                    dense_output=dense)
    rhs_u = _radial_u_rhs(dim, lam)
    q_far = lam + (N - 1) * (N - 3) / (4 * r_far ** 2) \
        - p * _w(dim, r_far) ** (p - 1)
    inw = solve_ivp(rhs_u, (r_far, r_match), [1.0, -math.sqrt(q_far)],
                    rtol=1e-13, atol=1e-300, method="DOP853",
                    dense_output=dense)
    return out, inw


def _coarse_lambda1(dim, r_max=40.0, m=4000):
    """Tridiagonal finite-difference estimate of lambda1 (oracle-grade)."""
    N, p = dim.N, dim.p
    h = r_max / m
    r = h * np.arange(1, m)
    vc = (N - 1.0) * (N - 3.0) / (4.0 * r * r)
    diag = -2.0 / h ** 2 - vc + p * _w(dim, r) ** (p - 1.0)
    off = np.full(m - 2, 1.0 / h ** 2)
    vals = eigh_tridiagonal(diag, off, select="i",
                            select_range=(m - 2, m - 2),
                            eigvals_only=True)
    return float(vals[0])


@lru_cache(maxsize=None)
def _eigenpair_cached(n, r_max, samples):
    dim = Dimension(n)
    N = dim.N
    nu = (N - 1) / 2.0
    lam_c = _coarse_lambda1(dim)
    r0, r_match = 1e-3, 1.5
    r_far = min(r_max, 35.0)

    def mismatch(lam):
        out, inw = _shoot(dim, lam, r0, r_match, r_far)
        # convert the outward z log-derivative to u-form before comparing
        return (out.y[1, -1] / out.y[0, -1] + nu / r_match
                - inw.y[1, -1] / inw.y[0, -1])

    # the coarse eigenvalue is accurate to ~1e-3 relative; a +-2% bracket
    # stays clear of the pole of the log-derivative mismatch
    lam = brentq(mismatch, 0.98 * lam_c, 1.02 * lam_c, xtol=1e-13, rtol=1e-14)

    out, inw = _shoot(dim, lam, r0, r_match, r_far, dense=True)
    # inward leg rescaled so z = u / r^nu is continuous at the match radius
    scale = out.y[0, -1] * r_match ** nu / inw.y[0, -1]

    nodes = np.linspace(0.0, r_max, samples)
    z = np.zeros_like(nodes)
    zp = np.zeros_like(nodes)
    small = nodes < r0
    a, b = _z_series_coeffs(dim, lam)
    z[small] = 1.0 + a * nodes[small] ** 2 + b * nodes[small] ** 4
    zp[small] = 2.0 * a * nodes[small] + 4.0 * b * nodes[small] ** 3
    mlo = (nodes >= r0) & (nodes <= r_match)
    z[mlo], zp[mlo] = out.sol(nodes[mlo])
    mhi = (nodes > r_match) & (nodes <= r_far)
    rr = nodes[mhi]
    u, up = inw.sol(rr)
    z[mhi] = scale * u / rr ** nu
    zp[mhi] = scale * (up / rr ** nu - nu * u / rr ** (nu + 1.0))
    if z[np.argmax(np.abs(z))] < 0:
        z, zp = -z, -zp

    grid = RadialGrid(nodes, z, math.sqrt(lam))
    norm = math.sqrt(radial_integral(lambda r: grid(r) ** 2, N, r_max=r_max))
    grid = RadialGrid(nodes, z / norm, math.sqrt(lam))
    grid_p = RadialGrid(nodes, zp / norm, math.sqrt(lam))
    return EigenPair(lam, grid, grid_p)


def solve_negative_eigenpair(dim, r_max=40.0, samples=20001):
    """Solve Delta Z0 + p w^(p-1) Z0 = lambda1 Z0, lambda1 > 0, ||Z0||_2 = 1.

    Primary method: two-sided shooting (outward in regular z-form from a
    Taylor start at the origin, inward in the Liouville form
    u = r^((N-1)/2) z from the far field), with the eigenvalue located by
    root finding on the log-derivative mismatch at the matching radius.  A
    coarse tridiagonal finite-difference eigensolver supplies the bracket.
    The returned profile is L^2-normalized; its overlap with the dilation
    kernel element vanishes to quadrature accuracy without any explicit
    projection.
    """
    return _eigenpair_cached(dim.n, float(r_max), int(samples))


def eigen_residual(dim, eigenpair=None, r_lo=0.05, r_hi=30.0, samples=12000):
    """Weighted L^2 norm of (Delta + p w^(p-1) - lambda1) Z0 / ||Z0||.

    Derivatives are taken analytically on the stored splines (z'' from the
    spline of the stored z'), so this measures the fidelity of the eigenpair
    itself, not of a difference stencil.
    """
    N, p = dim.N, dim.p
    ep = eigenpair if eigenpair is not None else solve_negative_eigenpair(dim)
    r = np.linspace(r_lo, r_hi, samples)
    if ep.z0_prime is not None:
        z1, z2 = ep.z0_prime(r), ep.z0_prime(r, nu=1)
    else:
        z1, z2 = ep.z0(r, nu=1), ep.z0(r, nu=2)
    res = (z2 + (N - 1) / r * z1
           + (p * _w(dim, r) ** (p - 1) - ep.lambda1) * ep.z0(r))
    wgt = r ** (N - 1)
    num = math.sqrt(sphere_area(N) * np.trapezoid(res ** 2 * wgt, r))
    den = math.sqrt(sphere_area(N) * np.trapezoid(ep.z0(r) ** 2 * wgt, r))
    return num / den


def measured_decay_rate(dim, eigenpair=None, r_lo=10.0, r_hi=25.0):
    """Far-field exponential decay rate of Z0.

    Z0 ~ C r^(-(N-1)/2) e^(-sqrt(lambda1) r); the algebraic prefactor is
    removed before the log-slope fit, otherwise the rate converges only like
    (N-1)/(2r).
    """
    ep = eigenpair if eigenpair is not None else solve_negative_eigenpair(dim)
    r = np.linspace(r_lo, r_hi, 400)
    u = ep.z0(r) * r ** ((dim.N - 1) / 2.0)
    slope = np.polyfit(r, np.log(np.abs(u)), 1)[0]
    return -slope


# ---------------------------------------------------------------------------
# constants

def a1_via_mass(dim):
    """Independent route to A1: N/(p+1)^2 * int w^(p+1) dy."""
    N, p = dim.N, dim.p
    val = radial_integral(lambda r: _w(dim, r) ** (p + 1), N,
                          tail_power=(p + 1) * (N - 2) - (N - 1))
    return N / (p + 1.0) ** 2 * val


def compute_constants(dim, eigenpair=None):
    """All projection constants for one dimension, by radial quadrature."""
    N, p = dim.N, dim.p
    ep = eigenpair if eigenpair is not None else solve_negative_eigenpair(dim)
    lam1 = ep.lambda1
    z0 = ep.z0
    r_z = z0.nodes[-1]

    w = lambda r: _w(dim, r)
    dw = lambda r: _dw(dim, r)
    ddw = lambda r: _ddw(dim, r)
    zn1 = lambda r: _zn1(dim, r)

    # slowest integrand class: w^2-type, F(r) = f r^(N-1) ~ r^-(N-3)
    q_slow = N - 3

    A1 = radial_integral(lambda r: w(r) ** p * np.log(w(r)) * zn1(r), N,
                         r_max=1e5, tail_power=N + 1)
    W2 = radial_integral(lambda r: w(r) ** 2, N, tail_power=q_slow)
    a2_direct = radial_integral(lambda r: w(r) * zn1(r), N, tail_power=q_slow)
    B3 = radial_integral(lambda r: zn1(r) ** 2, N, tail_power=q_slow)
    b2_direct = radial_integral(lambda r: r * dw(r) * zn1(r), N,
                                tail_power=q_slow) / N
    A2 = -2.0 * W2
    B2 = -(N - 2.0) * (N - 3.0) / (2.0 * (N - 1.0)) * W2
    B4 = radial_integral(lambda r: dw(r) ** 2, N, tail_power=N - 1) / N
    # d_11 w = w'' y1^2/r^2 + w' (1/r - y1^2/r^3); the angular average of
    # y1^2/r^2 over the sphere is 1/N
    d11 = lambda r: ddw(r) / N + dw(r) / r * (1.0 - 1.0 / N)
    B1 = radial_integral(lambda r: d11(r) * zn1(r), N, tail_power=N - 1)

    A3 = radial_integral(lambda r: w(r) ** p * np.log(w(r)) * z0(r), N, r_max=r_z)
    A4 = radial_integral(lambda r: w(r) * z0(r), N, r_max=r_z)
    B5 = radial_integral(lambda r: d11(r) * z0(r), N, r_max=r_z)
    B6 = radial_integral(lambda r: r * dw(r) * z0(r), N, r_max=r_z) / N
    wp_z0 = radial_integral(lambda r: w(r) ** p * z0(r), N, r_max=r_z)
    transport = radial_integral(
        lambda r: (r * r * ddw(r) + N * r * dw(r)
                   + N * (N - 2) / 4.0 * w(r)) * z0(r), N, r_max=r_z)

    fac = (N - 2.0) ** 2 / 16.0
    return BubbleConstants(
        dimension=dim, A1=A1, A2=A2, A3=A3, A4=A4,
        B1=B1, B2=B2, B3=B3, B4=B4, B5=B5, B6=B6,
        D1_magnitude=fac * A1, D2_magnitude=fac * A3,
        a_n=-A2 / B3, b_n=A1 / B3, lambda1=lam1,
        a2_direct=a2_direct, b2_direct=b2_direct,
        wp_z0=wp_z0, transport_z0=transport,
    )


# ---------------------------------------------------------------------------
# self-test of the differentiation machinery

def kernel_residual(dim, j, r_max=20.0, samples=160001, eigenpair=None):
    """Weighted L^2 norm of (Delta + p w^(p-1)) Z_j / ||Z_j||, j = 1..N+1.

    The radial factor of Z_j is differentiated by second-order central
    differences; translations carry the first spherical-harmonic angular
    eigenvalue -(N-1)/r^2.  Expected ~ 0: this is a self-test of the
    differentiation machinery against the exact kernel elements.
    """
    N, p = dim.N, dim.p
    if not 1 <= j <= N + 1:
        raise IndexError("kernel index must lie in 1..N+1, got %d" % j)
    r = np.linspace(0.0, r_max, samples)[1:-1]
    h = r[1] - r[0]
    if j == N + 1:
        prof, ell = (lambda rr: _zn1(dim, rr)), 0
    else:
        prof, ell = (lambda rr: _dw(dim, rr)), 1
    f0, fp, fm = prof(r), prof(r + h), prof(r - h)
    lap = (fp - 2 * f0 + fm) / h ** 2 + (N - 1) / r * (fp - fm) / (2 * h)
    if ell == 1:
        lap = lap - (N - 1) / r ** 2 * f0
    res = lap + p * _w(dim, r) ** (p - 1) * f0
    wgt = r ** (N - 1)
    num = math.sqrt(sphere_area(N) * np.trapezoid(res ** 2 * wgt, r))
    den = math.sqrt(sphere_area(N) * np.trapezoid(f0 ** 2 * wgt, r))
    return num / den
