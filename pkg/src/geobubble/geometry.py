"""Model manifolds, closed geodesics, parallel frames, and Fermi charts.

Everything is chart-based: a model is a metric evaluator on a coordinate
chart (with declared coordinate periods), and all downstream objects --
geodesics, normal frames, curvature in a frame, Fermi coordinates -- are
computed numerically from it.  Three built-in families cover the test
matrix: the flat torus (negative controls), a sphere-factor product chart
(analytic curvature oracles), and a perturbed torus whose axis line stays a
geodesic while its normal curvature can be tuned freely.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline


# ---------------------------------------------------------------------------
# models

@dataclass
class ManifoldModel:
    """A Riemannian metric on a coordinate chart.

    metric(x) returns the n x n matrix g_ab(x); d_metric(x), when provided,
    returns the analytic first derivatives with layout D[c, a, b] = d_c g_ab.
    periods[a] is the period of coordinate a (np.inf for a non-periodic
    chart direction such as a polar angle).
    """

    n: int
    metric: callable
    d_metric: callable = None
    periods: np.ndarray = None
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.periods is None:
            self.periods = np.full(self.n, 2.0 * math.pi)
        self.periods = np.asarray(self.periods, dtype=float)

    def check_point(self, x):
        g = self.metric(np.asarray(x, dtype=float))
        if not np.allclose(g, g.T, atol=1e-12):
            raise ValueError("metric matrix is not symmetric")
        if np.any(np.linalg.eigvalsh(g) <= 0.0):
            raise ValueError("metric not positive definite at point")
        return g

    def wrap_defect(self, dx):
        """Reduce a coordinate difference modulo the chart periods."""
        dx = np.array(dx, dtype=float)
        finite = np.isfinite(self.periods)
        dx[finite] = (dx[finite] + self.periods[finite] / 2.0) \
            % self.periods[finite] - self.periods[finite] / 2.0
        return dx


def flat_torus(n):
    """The flat torus (R/2piZ)^n."""
    eye = np.eye(n)
    zero = np.zeros((n, n, n))
    return ManifoldModel(n, lambda x: eye, d_metric=lambda x: zero,
                         kind="flat-torus")


def sphere_product(m, radius=1.0, extra=0):
    """Chart for S^m(radius) x T^extra in hyperspherical coordinates.

    Coordinates (t_1 .. t_m, y_1 .. y_extra) with
    g_ii = radius^2 prod_{j<i} sin^2 t_j on the sphere block and the identity
    on the torus block.  The equator {t_1 = .. = t_{m-1} = pi/2} traversed
    along t_m is a closed geodesic of length 2 pi radius.
    """
    n = m + extra
    R2 = radius * radius

    def metric(x):
        g = np.eye(n)
        prod = R2
        for i in range(m):
            g[i, i] = prod
            prod *= math.sin(x[i]) ** 2
        return g

    def d_metric(x):
        D = np.zeros((n, n, n))
        # g_ii = R^2 prod_{j<i} sin^2 x_j depends on x_c for c < i
        prod = R2
        diag = np.empty(m)
        for i in range(m):
            diag[i] = prod
            prod *= math.sin(x[i]) ** 2
        for i in range(m):
            for c in range(i):
                s = math.sin(x[c])
                if s == 0.0:
                    continue
                D[c, i, i] = diag[i] * 2.0 * math.cos(x[c]) / s
        return D

    periods = np.full(n, 2.0 * math.pi)
    periods[:max(m - 1, 0)] = np.inf
    return ManifoldModel(n, metric, d_metric=d_metric, periods=periods,
                         kind="round-sphere-product",
                         params={"m": m, "radius": radius, "extra": extra})


def perturbed_torus(n, base=None, modulation=None, wavenumber=1,
                    amplitude=0.1):
    """Flat torus with a periodic conformal bump on g_00 off the axis line.

    g_00 = 1 + sum_kl K_kl(x_0) sin(x_k) sin(x_l),  g_0j = 0,  g_ij = delta,
    K(x_0) = amplitude * (base + modulation cos(wavenumber x_0)),
    with base/modulation symmetric (N x N).  The bump vanishes to second
    order on the axis {x_1 = .. = x_N = 0}, so the axis stays a unit-speed
    closed geodesic of length 2 pi, the coordinate frame is parallel along
    it, and the normal curvature there is controlled by K directly.
    """
    N = n - 1
    base = np.eye(N) if base is None else np.asarray(base, dtype=float)
    if modulation is None:
        modulation = np.zeros((N, N))
    modulation = np.asarray(modulation, dtype=float)
    if base.shape != (N, N) or modulation.shape != (N, N):
        raise ValueError("base/modulation must be (n-1) x (n-1)")
    base = 0.5 * (base + base.T)
    modulation = 0.5 * (modulation + modulation.T)

    def kmat(x0):
        return amplitude * (base + modulation * math.cos(wavenumber * x0))

    def dkmat(x0):
        return -amplitude * wavenumber * modulation * math.sin(wavenumber * x0)

    def metric(x):
        s = np.sin(x[1:])
        g = np.eye(n)
        g[0, 0] = 1.0 + s @ kmat(x[0]) @ s
        return g

    def d_metric(x):
        s, c = np.sin(x[1:]), np.cos(x[1:])
        K = kmat(x[0])
        D = np.zeros((n, n, n))
        D[0, 0, 0] = s @ dkmat(x[0]) @ s
        D[1:, 0, 0] = 2.0 * c * (K @ s)
        return D

    model = ManifoldModel(n, metric, d_metric=d_metric,
                          kind="perturbed-torus",
                          params={"amplitude": amplitude,
                                  "wavenumber": wavenumber})
    model.params["kmat"] = kmat
    return model


def model_from_config(cfg):
    """Build a model from a flat key/value mapping (parsed TOML table)."""
    kind = cfg.get("kind", "flat-torus")
    n = int(cfg.get("n", 8))
    if kind == "flat-torus":
        return flat_torus(n)
    if kind == "round-sphere-product":
        m = int(cfg.get("m", 2))
        return sphere_product(m, radius=float(cfg.get("radius", 1.0)),
                              extra=n - m)
    if kind == "perturbed-torus":
        N = n - 1
        base = np.asarray(cfg.get("base", np.eye(N).tolist()), dtype=float)
        modulation = np.asarray(
            cfg.get("modulation", np.zeros((N, N)).tolist()), dtype=float)
        return perturbed_torus(n, base=base, modulation=modulation,
                               wavenumber=int(cfg.get("wavenumber", 1)),
                               amplitude=float(cfg.get("amplitude", 0.1)))
    raise ValueError("unknown model kind %r" % kind)


# ---------------------------------------------------------------------------
# curvature engine

def _metric_derivs(model, x, h):
    """d_c g_ab by Richardson-extrapolated central differences."""
    if model.d_metric is not None:
        return model.d_metric(x)
    n = model.n

    def central(step):
        D = np.empty((n, n, n))
        for c in range(n):
            e = np.zeros(n)
            e[c] = step
            D[c] = (model.metric(x + e) - model.metric(x - e)) / (2.0 * step)
        return D

    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def christoffel(model, x, h=1e-3):
    """Gamma^a_bc = 1/2 g^ad (d_b g_dc + d_c g_db - d_d g_bc)."""
    x = np.asarray(x, dtype=float)
    g = model.metric(x)
    ginv = np.linalg.inv(g)
    D = _metric_derivs(model, x, h)
    # brackets[d, b, c] = d_b g_dc + d_c g_db - d_d g_bc
    brackets = (np.einsum("bdc->dbc", D) + np.einsum("cdb->dbc", D) - D)
    return 0.5 * np.einsum("ad,dbc->abc", ginv, brackets)


def riemann(model, x, h=1e-3):
    """Covariant curvature R_abcd (sphere sectional curvature positive).

    R^a_bcd = d_c Gamma^a_db - d_d Gamma^a_cb + Gamma contractions, lowered
    with the metric; the Christoffel derivatives are Richardson-extrapolated
    central differences.
    """
    x = np.asarray(x, dtype=float)
    n = model.n
    if h <= 1e-10:
        raise ValueError("finite-difference step underflow")

    def dgamma(step):
        dG = np.empty((n, n, n, n))
        for c in range(n):
            e = np.zeros(n)
            e[c] = step
            dG[c] = (christoffel(model, x + e, h)
                     - christoffel(model, x - e, h)) / (2.0 * step)
        return dG

    dG = (4.0 * dgamma(h / 2.0) - dgamma(h)) / 3.0
    G = christoffel(model, x, h)
    # Rup[a, b, c, d] = R^a_bcd
    Rup = np.einsum("cabd->abcd", dG) - np.einsum("dabc->abcd", dG) \
        + np.einsum("ace,edb->abcd", G, G) - np.einsum("ade,ecb->abcd", G, G)
    return np.einsum("ae,ebcd->abcd", model.metric(x), Rup)


@dataclass
class CurvatureData:
    """Curvature components in an orthonormal frame (index 0 = tangent).

    riemann has layout R[a, b, c, d] = R(E_a, E_b, E_c, E_d) with the sign
    fixed so the round sphere has positive sectional curvature.  scalar is
    the full double sum over ordered frame pairs sum_{a,b} R_abab; the
    convention flag records that choice ("full-sum") versus the unordered
    alternative ("half-sum", i.e. scalar/2).
    """

    riemann: np.ndarray
    convention: str = "full-sum"

    def __post_init__(self):
        R = self.riemann
        for sym in (R + np.transpose(R, (1, 0, 2, 3)),
                    R + np.transpose(R, (0, 1, 3, 2)),
                    R - np.transpose(R, (2, 3, 0, 1))):
            if np.max(np.abs(sym)) > 1e-6 * (1.0 + np.max(np.abs(R))):
                raise ValueError("Riemann symmetry violated beyond tolerance")

    @property
    def r0k0l(self):
        return self.riemann[0, 1:, 0, 1:]

    @property
    def rikjl(self):
        return self.riemann[1:, 1:, 1:, 1:]

    @property
    def ric_tangent(self):
        return float(np.trace(self.r0k0l))

    @property
    def normal_double_sum(self):
        # sum_{i,j >= 1} R_ijij
        return float(np.einsum("ijij->", self.rikjl))

    @property
    def scalar(self):
        return float(np.einsum("abab->", self.riemann))

    def scalar_as(self, convention):
        if convention == "full-sum":
            return self.scalar
        if convention == "half-sum":
            return 0.5 * self.scalar
        raise ValueError("unknown scalar convention %r" % convention)


def curvature_at(model, point, frame, h=1e-3):
    """CurvatureData at a chart point, expressed in the given frame.

    frame rows are the chart components of E_0 .. E_{n-1} (E_0 tangent);
    they are assumed g-orthonormal at the point.
    """
    model.check_point(point)
    R = riemann(model, point, h=h)
    E = np.asarray(frame, dtype=float)
    Rf = np.einsum("pqrs,ap,bq,cr,ds->abcd", R, E, E, E, E, optimize=True)
    return CurvatureData(Rf)


# ---------------------------------------------------------------------------
# geodesics

def _geodesic_rhs(model, h=1e-3):
    n = model.n

    def rhs(t, s):
        x, v = s[:n], s[n:]
        G = christoffel(model, x, h)
        return np.concatenate([v, -np.einsum("abc,b,c->a", G, v, v)])

    return rhs


@dataclass
class ClosedGeodesic:
    """A unit-speed closed geodesic sampled on a uniform parameter grid."""

    model: ManifoldModel
    period: float                 # = 2 ell, the arclength of one loop
    positions: np.ndarray         # (samples, n), endpoint excluded
    velocities: np.ndarray        # (samples, n)
    closure_defect: float
    _dense: object = None

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period collapsed to zero")
        for x, v in zip(self.positions[::8], self.velocities[::8]):
            g = self.model.metric(x)
            if abs(v @ g @ v - 1.0) > 1e-8:
                raise ValueError("geodesic is not unit speed")

    @property
    def samples(self):
        return len(self.positions)

    def at(self, t):
        """Position and velocity at parameter t (periodic continuation)."""
        t = np.mod(t, self.period)
        s = self._dense(t)
        n = self.model.n
        return s[:n], s[n:]


def find_closed_geodesic(model, point, direction, period_guess,
                         samples=256, max_iter=30, tol=1e-10):
    """Shooting Newton iteration for a closed unit-speed geodesic.

    Unknowns are the initial position (with the coordinate of largest
    initial velocity frozen to remove the parametrization shift), the
    initial velocity, and the period; the residual is the position/velocity
    closure defect modulo the chart periods, plus the unit-norm constraint.
    """
    n = model.n
    x0 = np.asarray(point, dtype=float)
    v0 = np.asarray(direction, dtype=float)
    g = model.check_point(x0)
    v0 = v0 / math.sqrt(v0 @ g @ v0)
    T = float(period_guess)
    rhs = _geodesic_rhs(model)
    frozen = int(np.argmax(np.abs(v0)))

    def flow(x, v, T, dense=False):
        sol = solve_ivp(rhs, (0.0, T), np.concatenate([x, v]),
                        rtol=1e-11, atol=1e-11, method="DOP853",
                        dense_output=dense)
        return sol

    def defect(z):
        x, v, T = z[:n], z[n:2 * n], z[2 * n]
        sol = flow(x, v, T)
        dx = model.wrap_defect(sol.y[:n, -1] - x)
        dv = sol.y[n:, -1] - v
        gx = model.metric(x)
        return np.concatenate([dx, dv, [v @ gx @ v - 1.0],
                               [x[frozen] - x0[frozen]]])

    z = np.concatenate([x0, v0, [T]])
    last = np.inf
    for _ in range(max_iter):
        F = defect(z)
        last = np.max(np.abs(F[:2 * n]))
        if last < tol:
            break
        # finite-difference Jacobian, least-squares Newton step
        J = np.empty((len(F), len(z)))
        hstep = 1e-7
        for k in range(len(z)):
            dz = np.zeros(len(z))
            dz[k] = hstep
            J[:, k] = (defect(z + dz) - defect(z - dz)) / (2.0 * hstep)
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        z = z + step
    else:
        raise RuntimeError("geodesic shooting did not converge; "
                           "last closure defect %.3e" % last)

    x, v, T = z[:n], z[n:2 * n], z[2 * n]
    if T <= 1e-8:
        raise RuntimeError("period collapsed to zero")
    gx = model.metric(x)
    v = v / math.sqrt(v @ gx @ v)
    sol = flow(x, v, T, dense=True)
    t = np.linspace(0.0, T, samples, endpoint=False)
    states = sol.sol(t)
    geo = ClosedGeodesic(model, T, states[:n].T.copy(), states[n:].T.copy(),
                         float(last), _dense=sol.sol)
    return geo


def geodesic_residual(geodesic, h=1e-3):
    """Max norm of the geodesic equation at the stored samples."""
    model = geodesic.model
    rhs = _geodesic_rhs(model, h)
    worst = 0.0
    dt = 1e-3
    for k in range(0, geodesic.samples, max(1, geodesic.samples // 32)):
        t = k * geodesic.period / geodesic.samples
        x, v = geodesic.at(t)

        def fd(step):
            _, vm = geodesic.at(t - step)
            _, vp = geodesic.at(t + step)
            return (vp - vm) / (2.0 * step)

        # Richardson-extrapolated acceleration keeps the dense-output
        # interpolation noise from dominating the check
        acc = (4.0 * fd(dt) - fd(2.0 * dt)) / 3.0
        G = christoffel(model, x, h)
        worst = max(worst, np.max(np.abs(
            acc + np.einsum("abc,b,c->a", G, v, v))))
    return worst


# ---------------------------------------------------------------------------
# parallel normal frame and holonomy

@dataclass
class NormalFrame:
    """Parallel orthonormal normal frame E_1..E_N along a closed geodesic."""

    geodesic: ClosedGeodesic
    frames: np.ndarray       # (samples, N, n) chart components
    holonomy: np.ndarray     # (N, N) with E_i(2l) = sum_j A_ji E_j(0)

    def at(self, t):
        """Frame at parameter t by componentwise periodic interpolation."""
        # frames are stored on the uniform sample grid; cubic interpolation
        # is accurate enough for all frame consumers (the frame itself is
        # recomputed exactly where tight tolerances matter)
        geo = self.geodesic
        t = np.mod(t, geo.period)
        if self._spline is None:
            grid = np.linspace(0.0, geo.period, geo.samples + 1)
            vals = np.concatenate(
                [self.frames,
                 np.einsum("ji,jk->ik", self.holonomy,
                           self.frames[0])[None, :, :]], axis=0)
            self._spline = CubicSpline(grid, vals, axis=0)
        return self._spline(t)

    _spline: object = None


def parallel_frame(geodesic):
    """Parallel-transport an initial orthonormal normal basis once around."""
    model = geodesic.model
    n = model.n
    x_init = geodesic.positions[0]
    v_init = geodesic.velocities[0]
    g = model.metric(x_init)

    # Gram-Schmidt an initial normal basis out of the coordinate vectors
    basis = [v_init]
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        w = e.copy()
        for b in basis:
            w = w - (w @ g @ b) * b
        norm = math.sqrt(max(w @ g @ w, 0.0))
        if norm > 1e-8:
            basis.append(w / norm)
        if len(basis) == n:
            break
    E0 = np.array(basis[1:])          # (N, n)

    def rhs(t, flat):
        x, _ = geodesic.at(t)
        G = christoffel(model, x)
        _, v = geodesic.at(t)
        E = flat.reshape(n - 1, n)
        dE = -np.einsum("abc,b,ic->ia", G, v, E)
        return dE.ravel()

    grid = np.linspace(0.0, geodesic.period, geodesic.samples + 1)
    sol = solve_ivp(rhs, (0.0, geodesic.period), E0.ravel(),
                    rtol=1e-11, atol=1e-12, method="DOP853", t_eval=grid)
    frames = sol.y.T.reshape(-1, n - 1, n)

    g_end = model.metric(geodesic.positions[0])
    # holonomy: E_i(2l) = sum_j A_ji E_j(0)
    A = np.einsum("ik,kl,jl->ji", frames[-1], g_end, frames[0])

    frame = NormalFrame(geodesic, frames[:-1], A)
    # orthonormality and holonomy-orthogonality checks
    for idx in range(0, geodesic.samples, max(1, geodesic.samples // 16)):
        gx = model.metric(geodesic.positions[idx])
        gram = frames[idx] @ gx @ frames[idx].T
        if np.max(np.abs(gram - np.eye(n - 1))) > 1e-8:
            raise RuntimeError("parallel frame lost orthonormality")
    return frame


# ---------------------------------------------------------------------------
# Fermi chart

@dataclass
class FermiChart:
    """Fermi coordinates (x0, x) -> chart point along a closed geodesic."""

    geodesic: ClosedGeodesic
    frame: NormalFrame

    def fermi_map(self, x0, x):
        """Exponential map: shoot the geodesic with velocity sum x_i E_i."""
        model = self.geodesic.model
        n = model.n
        p, _ = self.geodesic.at(x0)
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x)
        if r == 0.0:
            return p.copy()
        E = self.frame.at(x0)
        v = x @ E
        rhs = _geodesic_rhs(model)
        sol = solve_ivp(rhs, (0.0, 1.0), np.concatenate([p, v]),
                        rtol=1e-11, atol=1e-12, method="DOP853")
        if not sol.success:
            raise RuntimeError("exponential-map integration failed")
        return sol.y[:n, -1]

    def pullback_metric(self, x0, x, step=1e-4):
        """Metric components of the Fermi pullback at (x0, x).

        Columns of the Jacobian of (x0, x) -> chart point are obtained by
        Richardson-extrapolated central differences of the map itself.
        """
        model = self.geodesic.model
        n = model.n

        def fmap(z):
            return self.fermi_map(z[0], z[1:])

        z = np.concatenate([[x0], np.asarray(x, dtype=float)])

        def jac(hs):
            J = np.empty((n, n))
            for c in range(n):
                e = np.zeros(n)
                e[c] = hs
                J[:, c] = (fmap(z + e) - fmap(z - e)) / (2.0 * hs)
            return J

        J = (4.0 * jac(step / 2.0) - jac(step)) / 3.0
        g = model.metric(fmap(z))
        return J.T @ g @ J


def exact_fermi_chart(model, geodesic, frame):
    """Fermi chart that short-circuits to the identity when legal.

    For the flat and perturbed tori the chart coordinates along the axis
    are already Fermi coordinates (the bump vanishes to second order on the
    axis, the coordinate lines normal to it are geodesics, and the
    coordinate frame is parallel), so the pullback metric is the model
    metric itself.  Other models fall back to spray integration.
    """
    if model.kind in ("flat-torus", "perturbed-torus"):
        chart = FermiChart(geodesic, frame)
        chart.fermi_map = lambda x0, x: np.concatenate(
            [[x0], np.asarray(x, dtype=float)])
        chart.pullback_metric = lambda x0, x, step=None: model.metric(
            np.concatenate([[x0], np.asarray(x, dtype=float)]))
        return chart
    return FermiChart(geodesic, frame)


def expansion_check(chart, x0=0.0, step=5e-3):
    """Quadratic expansion of the pullback metric at x = 0 versus curvature.

    Reports the identity/first-order defects and the measured proportionality
    between the second-derivative blocks and the frame curvature components:
        d_k d_l g_00 = c00 * R_0k0l,     quadratic g_ij block = cij * R_ikjl,
    with c00, cij estimated by least squares (the recorded signs are the
    repository's convention constants).
    """
    geo = chart.geodesic
    model = geo.model
    n = model.n
    N = n - 1

    def gpull(x):
        return chart.pullback_metric(x0, x)

    zero = np.zeros(N)
    g0 = gpull(zero)
    id_defect = float(np.max(np.abs(g0 - np.eye(n))))

    first = 0.0
    d2g = np.zeros((N, N, n, n))
    for k in range(N):
        ek = np.zeros(N)
        ek[k] = step
        gp, gm = gpull(ek), gpull(-ek)
        first = max(first, float(np.max(np.abs(gp - gm))) / (2.0 * step))
        d2g[k, k] = (gp - 2.0 * g0 + gm) / step ** 2
    for k in range(N):
        for l in range(k + 1, N):
            ek = np.zeros(N)
            ek[k] = step
            el = np.zeros(N)
            el[l] = step
            mixed = (gpull(ek + el) - gpull(ek - el)
                     - gpull(-ek + el) + gpull(-ek - el)) / (4.0 * step ** 2)
            d2g[k, l] = d2g[l, k] = mixed

    # curvature in the frame at the same point
    E = np.empty((n, n))
    p, v = geo.at(x0)
    E[0] = v
    E[1:] = chart.frame.at(x0)
    curv = curvature_at(model, p, E)

    def fit(block, target):
        num = float(np.sum(block * target))
        den = float(np.sum(target * target))
        ratio = num / den if den > 1e-14 else 0.0
        resid = float(np.max(np.abs(block - ratio * target))) \
            if den > 1e-14 else float(np.max(np.abs(block)))
        return ratio, resid

    c00, res00 = fit(d2g[:, :, 0, 0], curv.r0k0l)
    # symmetrized quadratic coefficient of g_ij: (R_ikjl + R_jkil)
    quad = np.transpose(d2g[:, :, 1:, 1:], (2, 0, 3, 1))   # [i, k, j, l]
    target = curv.rikjl + np.transpose(curv.rikjl, (2, 1, 0, 3))
    cij, resij = fit(quad, target)

    return {
        "identity_defect": id_defect,
        "first_order_max": first,
        "g00_coefficient": c00,
        "g00_fit_residual": res00,
        "gij_coefficient": cij,
        "gij_fit_residual": resij,
        "curvature": curv,
    }


# ---------------------------------------------------------------------------
# Jacobi fields / nondegeneracy

def curvature_along(model, geodesic, frame, h=1e-3):
    """CurvatureData at every stored geodesic sample, in the moving frame."""
    out = []
    for idx in range(geodesic.samples):
        E = np.empty((model.n, model.n))
        E[0] = geodesic.velocities[idx]
        E[1:] = frame.frames[idx]
        out.append(curvature_at(model, geodesic.positions[idx], E, h=h))
    return out


def jacobi_nondegeneracy(geodesic, frame, curvature=None, tol=1e-6):
    """Floquet analysis of the normal Jacobi equation phi'' + M(t) phi = 0.

    M_kl(t) = R(E_0, E_k, E_0, E_l) in the parallel frame.  The monodromy
    over one loop is composed with the inverse holonomy twist; the geodesic
    is degenerate exactly when 1 is an eigenvalue of the twisted monodromy.
    """
    model = geodesic.model
    N = model.n - 1
    if curvature is None:
        curvature = curvature_along(model, geodesic, frame)
    grid = np.linspace(0.0, geodesic.period, geodesic.samples + 1)
    mats = np.array([c.r0k0l for c in curvature] + [curvature[0].r0k0l])
    # apply the holonomy twist to the final sample so the spline is smooth
    A = frame.holonomy
    mats[-1] = A.T @ curvature[0].r0k0l @ A
    mspline = CubicSpline(grid, mats, axis=0)

    def rhs(t, flat):
        Phi = flat.reshape(2 * N, 2 * N)
        M = mspline(t)
        block = np.zeros((2 * N, 2 * N))
        block[:N, N:] = np.eye(N)
        block[N:, :N] = -M
        return (block @ Phi).ravel()

    sol = solve_ivp(rhs, (0.0, geodesic.period),
                    np.eye(2 * N).ravel(), rtol=1e-11, atol=1e-12,
                    method="DOP853")
    if not sol.success:
        raise RuntimeError("monodromy integration failed")
    mono = sol.y[:, -1].reshape(2 * N, 2 * N)
    twist = np.kron(np.eye(2), A)
    twisted = np.linalg.solve(twist, mono)
    eigs = np.linalg.eigvals(twisted)
    dist = float(np.min(np.abs(eigs - 1.0)))
    return {
        "monodromy": mono,
        "twisted_monodromy": twisted,
        "eigenvalues": eigs,
        "distance_to_one": dist,
        "degenerate": dist < tol,
    }
