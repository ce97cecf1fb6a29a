"""Periodic ODEs with an attractive or repulsive singular term.

Solves -mu'' + a sigma(t) mu + s c / mu = 0 with period 2l (s = -1
attractive, s = +1 repulsive), its linearization, and the three reduced
linear operators acting on periodic data:

    L_N1:  -mu'' + q(t) mu = f          (scalar, nondegenerate Hill)
    L_k :  -d''  + M(t) d  = f          (vector, twisted-periodic)
    L_0 :  eps a0(t) e'' + lam1 e = f   (stiff oscillatory, gap condition)

Primary discretization is fourth-order periodic finite-difference
collocation (damped Newton for the nonlinear problem); periodic shooting
and Fourier/modal solvers are kept as independent oracles.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp


class NearResonance(RuntimeError):
    """The gap condition failed: eps is too close to a resonance."""


class Degenerate(RuntimeError):
    """A homogeneous periodic problem admits a nontrivial solution."""


class NewtonFailure(RuntimeError):
    """The damped Newton iteration stagnated."""


# ---------------------------------------------------------------------------
# periodic grid functions

@dataclass
class PeriodicFunction:
    """Samples of a function on the uniform grid j * period / m, j < m.

    Scalar values have shape (m,); vector-valued ones (m, k) and may carry
    an orthogonal holonomy twist A with value(period) = A @ value(0).
    """

    period: float
    values: np.ndarray
    twist: np.ndarray = None
    info: dict = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.twist is not None:
            A = np.asarray(self.twist, dtype=float)
            if np.max(np.abs(A.T @ A - np.eye(len(A)))) > 1e-8:
                raise ValueError("twist matrix must be orthogonal")
            if self.values.ndim != 2:
                raise ValueError("scalar functions have trivial twist")
            self.twist = A

    @property
    def samples(self):
        return len(self.values)

    @property
    def grid(self):
        return np.arange(self.samples) * self.period / self.samples

    @classmethod
    def from_callable(cls, f, period, samples=256):
        t = np.arange(samples) * period / samples
        return cls(period, np.array([f(tt) for tt in t], dtype=float))

    def __call__(self, t):
        """Trigonometric interpolation (scalar, untwisted data only)."""
        if self.values.ndim != 1:
            raise ValueError("pointwise evaluation is scalar-only")
        m = self.samples
        coeffs = np.fft.rfft(self.values) / m
        k = np.arange(len(coeffs))
        t = np.asarray(t, dtype=float)
        phase = np.exp(2j * math.pi * np.outer(t, k) / self.period)
        fac = np.full(len(coeffs), 2.0)
        fac[0] = 1.0
        if m % 2 == 0:
            fac[-1] = 1.0
        out = np.real(phase @ (fac * coeffs))
        return out if out.size > 1 else float(out[0])


def _d2_matrix(m, period, order=4):
    """Circulant second-derivative matrix on the uniform periodic grid."""
    h = period / m
    if order == 2:
        stencil = {0: -2.0, 1: 1.0, -1: 1.0}
    elif order == 4:
        stencil = {0: -30.0 / 12.0, 1: 16.0 / 12.0, -1: 16.0 / 12.0,
                   2: -1.0 / 12.0, -2: -1.0 / 12.0}
    else:
        raise ValueError("unsupported stencil order")
    row = np.zeros(m)
    for off, w in stencil.items():
        row[off % m] = w / h ** 2
    col = np.array([row[(-j) % m] for j in range(m)])
    from scipy.linalg import toeplitz
    return toeplitz(col, row)


def _d1_matrix(m, period):
    """Fourth-order circulant first-derivative matrix."""
    h = period / m
    row = np.zeros(m)
    for off, w in ((1, 8.0), (-1, -8.0), (2, -1.0), (-2, 1.0)):
        row[off % m] = w / (12.0 * h)
    col = np.array([row[(-j) % m] for j in range(m)])
    from scipy.linalg import toeplitz
    return toeplitz(col, row)


def _fourier_d2(m, period):
    """Spectral second-derivative matrix (dense) on the periodic grid."""
    k = np.fft.fftfreq(m, d=1.0 / m)
    mult = -(2.0 * math.pi * k / period) ** 2
    F = np.fft.fft(np.eye(m), axis=0)
    return np.real(np.fft.ifft(mult[:, None] * F, axis=0))


# ---------------------------------------------------------------------------
# the nonlinear singular problem

@dataclass
class SingularOdeProblem:
    """-mu'' + a sigma mu + s c / mu = 0, periodic, with s = -+1.

    sign = "attractive" gives s = -1 and needs c > 0 with min a sigma > 0
    (unless override_existence); sign = "repulsive" gives s = +1 and needs
    a sigma inside a window (-((k+1) pi / 2l)^2, -(k pi / 2l)^2) for some
    integer k >= 1, which is recorded.
    """

    sigma: PeriodicFunction
    c: float
    sign: str
    a: float = 1.0
    override_existence: bool = False
    window_k: int = field(default=None)

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive (the sign lives in `sign`)")
        if self.sign not in ("attractive", "repulsive"):
            raise ValueError("sign must be attractive or repulsive")
        q = self.a * self.sigma.values
        if self.sign == "attractive":
            if q.min() <= 0.0 and not self.override_existence:
                raise ValueError("attractive existence needs min sigma > 0")
        else:
            ell = self.sigma.period / 2.0
            hi, lo = q.max(), q.min()
            if hi >= 0.0:
                raise ValueError("repulsive existence needs sigma < 0")
            k = math.floor(2.0 * ell * math.sqrt(-hi) / math.pi)
            lower = -(((k + 1) * math.pi) / (2.0 * ell)) ** 2
            if k < 1 or lo <= lower:
                if not self.override_existence:
                    raise ValueError("sigma does not fit a window between "
                                     "consecutive resonance levels")
                k = None
            self.window_k = k

    @property
    def s(self):
        return -1.0 if self.sign == "attractive" else 1.0


@dataclass
class SingularOdeSolution:
    mu0: PeriodicFunction
    floquet: np.ndarray
    nondegenerate: bool
    history: list
    residual: float

    def __post_init__(self):
        if self.mu0.values.min() <= 0.0:
            raise ValueError("mu0 must stay positive")


def _constant_balance(problem):
    qbar = problem.a * float(np.mean(problem.sigma.values))
    return math.sqrt(-problem.s * problem.c / qbar)


def solve_singular_periodic(problem, guess=None, samples=512, tol=1e-10,
                            max_iter=60):
    """Fourth-order collocation + damped Newton for the periodic orbit.

    The Newton step is damped so min mu never drops below half its current
    value (the singular term forbids touching zero); the residual is
    measured in max norm on the collocation grid.
    """
    P = problem.sigma.period
    m = samples
    q = problem.a * problem.sigma(np.arange(m) * P / m)
    D2 = _d2_matrix(m, P, order=4)
    s, c = problem.s, problem.c

    if guess is None:
        mu = np.full(m, _constant_balance(problem))
    elif np.isscalar(guess):
        mu = np.full(m, float(guess))
    else:
        mu = np.asarray(guess, dtype=float).copy()
    if mu.min() <= 0.0:
        raise ValueError("initial guess must be strictly positive")

    history = []
    for _ in range(max_iter):
        F = -D2 @ mu + q * mu + s * c / mu
        res = float(np.max(np.abs(F)))
        history.append(res)
        if res < tol:
            break
        J = -D2 + np.diag(q - s * c / mu ** 2)
        step = np.linalg.solve(J, -F)
        alpha = 1.0
        floor = 0.5 * mu.min()
        while np.min(mu + alpha * step) <= floor:
            alpha *= 0.5
            if alpha < 1e-8:
                raise NewtonFailure("positivity damping collapsed the step")
        mu = mu + alpha * step
    else:
        raise NewtonFailure("Newton stagnated; last residual %.3e"
                            % history[-1])

    mu0 = PeriodicFunction(P, mu)
    rep = linearized_nondegeneracy(SingularOdeSolution(
        mu0, np.array([]), True, history, history[-1]), problem)
    return SingularOdeSolution(mu0, rep["eigenvalues"],
                               not rep["degenerate"], history, history[-1])


def solve_singular_shooting(problem, guess=None, segments=16, tol=1e-11,
                            max_iter=60):
    """Independent multiple-shooting oracle for the nonlinear problem.

    The period map of the linearization is strongly hyperbolic (multipliers
    grow like exp(sqrt(q) 2l)), which makes single shooting's Newton basin
    tiny; splitting the period into segments keeps every sub-flow mild.
    Unknowns are the states at the segment endpoints, residuals the
    matching (and periodic wrap) conditions.
    """
    P = problem.sigma.period
    s, c, a = problem.s, problem.c, problem.a
    sigma = problem.sigma
    K = segments
    nodes = np.arange(K) * P / K

    def rhs(t, y):
        return [y[1], a * sigma(t) * y[0] + s * c / y[0]]

    def seg_flow(k, y0):
        if y0[0] <= 0.0:
            return np.full(2, np.inf)
        sol = solve_ivp(rhs, (nodes[k], nodes[k] + P / K), y0,
                        rtol=1e-12, atol=1e-12, method="DOP853")
        out = sol.y[:, -1]
        return out if sol.success and np.all(np.isfinite(out)) \
            else np.full(2, np.inf)

    def residual(Y):
        F = np.empty((K, 2))
        for k in range(K):
            F[k] = seg_flow(k, Y[k]) - Y[(k + 1) % K]
        return F.ravel()

    mu_bal = guess if guess is not None else _constant_balance(problem)
    Y = np.column_stack([np.full(K, float(mu_bal)), np.zeros(K)])
    for _ in range(max_iter):
        F = residual(Y)
        if not np.all(np.isfinite(F)):
            raise NewtonFailure("shooting trajectory blew up")
        if np.max(np.abs(F)) < tol:
            break
        J = np.zeros((2 * K, 2 * K))
        for k in range(K):
            h = 1e-7 * max(1.0, abs(Y[k, 0]))
            for j in range(2):
                dy = np.zeros(2)
                dy[j] = h
                col = (seg_flow(k, Y[k] + dy) - seg_flow(k, Y[k] - dy)) \
                    / (2.0 * h)
                J[2 * k:2 * k + 2, 2 * k + j] = col
            J[2 * k:2 * k + 2, 2 * ((k + 1) % K):2 * ((k + 1) % K) + 2] \
                -= np.eye(2)
        step = np.linalg.solve(J, -F).reshape(K, 2)
        alpha = 1.0
        while True:
            cand = Y + alpha * step
            if np.min(cand[:, 0]) > 0.5 * np.min(Y[:, 0]):
                Fc = residual(cand)
                if np.all(np.isfinite(Fc)) and \
                        np.max(np.abs(Fc)) < max(np.max(np.abs(F)), tol):
                    break
            alpha *= 0.5
            if alpha < 1e-8:
                raise NewtonFailure("shooting step damping collapsed")
        Y = cand
    else:
        raise NewtonFailure("shooting Newton stagnated")

    sols = [solve_ivp(rhs, (nodes[k], nodes[k] + P / K), Y[k],
                      rtol=1e-12, atol=1e-12, method="DOP853",
                      dense_output=True) for k in range(K)]

    def evaluate(t):
        t = float(np.mod(t, P))
        k = min(int(t / (P / K)), K - 1)
        return float(sols[k].sol(t)[0])

    return evaluate


def _hill_monodromy(qfun, period):
    """Monodromy of phi'' = q(t) phi over one period."""

    def rhs(t, flat):
        Phi = flat.reshape(2, 2)
        A = np.array([[0.0, 1.0], [qfun(t), 0.0]])
        return (A @ Phi).ravel()

    sol = solve_ivp(rhs, (0.0, period), np.eye(2).ravel(),
                    rtol=1e-12, atol=1e-13, method="DOP853")
    return sol.y[:, -1].reshape(2, 2)


def linearized_nondegeneracy(solution, problem, tol=1e-8):
    """Floquet report for -phi'' + (a sigma - s c / mu0^2) phi = 0."""
    P = problem.sigma.period
    mu0 = solution.mu0
    s, c, a = problem.s, problem.c, problem.a

    def qfun(t):
        return a * problem.sigma(t) - s * c / mu0(t) ** 2

    M = _hill_monodromy(qfun, P)
    eigs = np.linalg.eigvals(M)
    cond = np.linalg.cond(M)
    dist = float(np.min(np.abs(eigs - 1.0)))
    degenerate = dist < tol * max(cond, 1.0)
    if problem.sign == "attractive" and problem.a * problem.sigma.values.min() > 0:
        # the linearized coefficient is strictly positive: hyperbolic case
        degenerate = False
    return {"eigenvalues": eigs, "distance_to_one": dist,
            "degenerate": degenerate, "condition_number": cond}


def perturb_to_nondegenerate(problem, radius, seed, max_tries=50,
                             samples=512):
    """Low-frequency random perturbation of sigma until nondegenerate.

    Deterministic for a given seed; the perturbed sigma must still satisfy
    the repulsive window condition, otherwise the draw is rejected.
    """
    rng = np.random.default_rng(seed)
    P = problem.sigma.period
    t = np.arange(samples) * P / samples
    base = problem.sigma(t)

    def attempt(delta):
        sigma = PeriodicFunction(P, base + delta)
        try:
            prob = SingularOdeProblem(sigma, problem.c, problem.sign,
                                      a=problem.a)
        except ValueError:
            return None
        sol = solve_singular_periodic(prob, samples=samples)
        return sigma if sol.nondegenerate else None

    out = attempt(np.zeros(samples))
    if out is not None:
        return out
    for _ in range(max_tries):
        u = rng.normal(size=3)
        delta = (u[0] + u[1] * np.cos(2.0 * math.pi * t / P)
                 + u[2] * np.sin(2.0 * math.pi * t / P))
        delta *= radius * rng.uniform(0.1, 1.0) / np.max(np.abs(delta))
        out = attempt(delta)
        if out is not None:
            return out
    raise NewtonFailure("perturbation retry budget exhausted")


# ---------------------------------------------------------------------------
# reduced linear operators

def solve_L_N1(q, f, samples=None):
    """Unique periodic solution of -mu'' + q(t) mu = f(t).

    Fourth-order periodic collocation; the homogeneous problem is first
    certified nondegenerate through its monodromy.
    """
    P = q.period
    M = _hill_monodromy(lambda t: q(t), P)
    eigs = np.linalg.eigvals(M)
    gap_tol = max(1e-8, 100.0 * np.finfo(float).eps * np.linalg.cond(M))
    if np.min(np.abs(eigs - 1.0)) < gap_tol:
        raise Degenerate("homogeneous Hill problem admits a periodic "
                         "solution")
    m = samples or max(q.samples, f.samples, 512)
    t = np.arange(m) * P / m
    qv, fv = q(t), f(t)
    A = -_d2_matrix(m, P, order=4) + np.diag(qv)
    mu = np.linalg.solve(A, fv)
    dmu = _d1_matrix(m, P) @ mu
    resid = float(np.max(np.abs(A @ mu - fv)))
    info = {"residual": resid,
            "bound_constant": (np.max(np.abs(mu)) + np.max(np.abs(dmu)))
            / max(np.max(np.abs(fv)), 1e-300)}
    return PeriodicFunction(P, mu, info=info)


def solve_L_k(curv, f, twist=None, samples=None):
    """Twisted-periodic solution of -d'' + M(t) d = f (vector valued).

    curv: PeriodicFunction with values (m, N, N) flattened to (m, N*N) or a
    (m, N, N) array of R_{0j0k}-type matrices on the uniform grid of f.
    The twisted monodromy is checked for nondegeneracy first.
    """
    P = f.period
    fv = f.values
    if fv.ndim != 2:
        raise ValueError("f must be vector-valued")
    m, N = fv.shape
    Mt = np.asarray(curv, dtype=float)
    if Mt.shape != (m, N, N):
        raise ValueError("curvature samples must have shape (m, N, N)")
    A = np.eye(N) if twist is None else np.asarray(twist, dtype=float)

    # twisted monodromy of the homogeneous problem
    grid = np.arange(m + 1) * P / m
    from scipy.interpolate import CubicSpline
    ext = np.concatenate([Mt, (A.T @ Mt[0] @ A)[None]], axis=0)
    mspl = CubicSpline(grid, ext, axis=0)

    def rhs(t, flat):
        Phi = flat.reshape(2 * N, 2 * N)
        B = np.zeros((2 * N, 2 * N))
        B[:N, N:] = np.eye(N)
        B[N:, :N] = mspl(t)
        return (B @ Phi).ravel()

    sol = solve_ivp(rhs, (0.0, P), np.eye(2 * N).ravel(),
                    rtol=1e-11, atol=1e-12, method="DOP853")
    mono = sol.y[:, -1].reshape(2 * N, 2 * N)
    twisted = np.linalg.solve(np.kron(np.eye(2), A), mono)
    eigs = np.linalg.eigvals(twisted)
    if np.min(np.abs(eigs - 1.0)) < max(
            1e-8, 100.0 * np.finfo(float).eps * np.linalg.cond(twisted)):
        raise Degenerate("geodesic is degenerate: twisted Jacobi problem "
                         "has a fixed vector")

    # block collocation: unknowns d_j(t_i); the twist enters the wrap rows
    # (d(t + P) = A d(t), so a forward wrap multiplies the column block by
    # A and a backward wrap by A^T)
    h = P / m
    stencil = ((0, 30.0 / 12.0), (1, -16.0 / 12.0), (-1, -16.0 / 12.0),
               (2, 1.0 / 12.0), (-2, 1.0 / 12.0))   # -d'' part
    big = np.zeros((m * N, m * N))
    for i in range(m):
        for off, w in stencil:
            j = i + off
            blk = np.eye(N)
            if j >= m:
                j -= m
                blk = A
            elif j < 0:
                j += m
                blk = A.T
            big[i * N:(i + 1) * N, j * N:(j + 1) * N] += (w / h ** 2) * blk
        big[i * N:(i + 1) * N, i * N:(i + 1) * N] += Mt[i]
    d = np.linalg.solve(big, fv.ravel()).reshape(m, N)
    resid = float(np.max(np.abs(big @ d.ravel() - fv.ravel())))
    info = {"residual": resid, "eigenvalues": eigs}
    return PeriodicFunction(P, d, twist=None if twist is None else A,
                            info=info)


def solve_L_0(a0, f, eps, lam1, nu=0.1, samples=None):
    """Periodic solution of eps a0(t) e'' + lam1 e = f.

    Fourier collocation (the solution oscillates at frequency
    ~ sqrt(lam1 / eps), far beyond low-order stencils).  Raises
    NearResonance when the homogeneous problem's monodromy has an
    eigenvalue within the gap-condition margin of 1.
    """
    P = a0.period
    if np.min(a0.values) <= 0.0:
        raise ValueError("a0 must be positive")

    M = _hill_monodromy(lambda t: -lam1 / (eps * a0(t)), P)
    eigs = np.linalg.eigvals(M)
    margin = max(nu * math.sqrt(eps), 1e-8 * max(np.linalg.cond(M), 1.0))
    if np.min(np.abs(eigs - 1.0)) < margin:
        raise NearResonance("eps = %.6g sits within the resonance margin"
                            % eps)

    m = samples or max(a0.samples, f.samples,
                       int(64 * math.ceil(math.sqrt(lam1 / eps) * P / 32)),
                       512)
    t = np.arange(m) * P / m
    a0v, fv = a0(t), f(t)
    D2 = _fourier_d2(m, P)
    A = eps * a0v[:, None] * D2 + lam1 * np.eye(m)
    e = np.linalg.solve(A, fv)
    de = np.real(np.fft.ifft(
        (2j * math.pi / P) * np.fft.fftfreq(m, d=1.0 / m) * np.fft.fft(e)))
    d2e = D2 @ e
    resid = float(np.max(np.abs(A @ e - fv)))
    fmax = max(np.max(np.abs(fv)), 1e-300)
    cobs = (eps * np.max(np.abs(d2e)) + math.sqrt(eps) * np.max(np.abs(de))
            + np.max(np.abs(e))) * math.sqrt(eps) / fmax
    return PeriodicFunction(P, e, info={"residual": resid,
                                        "bound_constant": cobs})


# ---------------------------------------------------------------------------
# gap condition

def monodromy_resonances(a0, lam1, k_max=60):
    """Resonant eps values of eps a0 e'' + lam1 e = 0 from the time change.

    The Liouville substitution turns the homogeneous equation into a
    constant-frequency oscillator in the rescaled time
    tau(t) = int_0^t a0^{-1/2}; a nontrivial periodic solution exists
    exactly when sqrt(lam1 / eps) tau(2l) = 2 pi k, i.e.
    eps_k = lam1 tau(2l)^2 / (2 pi k)^2.  (Exact for constant a0 and
    asymptotically exact in general; the returned values are polished with
    the monodromy trace.)
    """
    P = a0.period
    t = np.linspace(0.0, P, 4097)
    tau = np.trapezoid(a0(t) ** (-0.5), t)
    ks = np.arange(1, k_max + 1)
    if np.ptp(a0.values) < 1e-13 * np.max(np.abs(a0.values)):
        # constant coefficient: the rescaled-time formula is already exact
        return lam1 * tau ** 2 / (2.0 * math.pi * ks) ** 2, tau
    eps_list = []
    for k in ks:
        eps = lam1 * tau ** 2 / (2.0 * math.pi * k) ** 2
        # polish on the off-diagonal monodromy entry M_12 (a simple zero at
        # each resonance, unlike the trace whose zero is double)
        def m12(e):
            return _hill_monodromy(
                lambda s: -lam1 / (e * a0(s)), P)[0, 1]

        for _ in range(12):
            f0 = m12(eps)
            de = 1e-7 * eps
            fp = (m12(eps + de) - m12(eps - de)) / (2.0 * de)
            if abs(fp) < 1e-300:
                break
            step = -f0 / fp
            eps = eps + step
            if abs(step) < 1e-14 * eps:
                break
        eps_list.append(eps)
    return np.array(eps_list), tau


@dataclass
class GapReport:
    eps: float
    kappa: float              # Lemma-style kappa, reported verbatim
    kappa_monodromy: float    # resonances sit at eps = kappa_monodromy^2/k^2
    nu: float
    violating_k: list
    resonances: np.ndarray
    holds: bool


def gap_check(eps, a0, lam1, nu=0.1, k_max=60):
    """Check |eps k^2 - kappa^2| > nu sqrt(eps) for all k >= 1.

    kappa is computed verbatim as (pi/2) sqrt(lam1) int over one period of
    a0^{-1/2}; the monodromy-derived resonance locations (which differ from
    kappa^2/k^2 by a fixed normalization) are reported alongside.
    """
    P = a0.period
    t = np.linspace(0.0, P, 4097)
    integral = np.trapezoid(a0(t) ** (-0.5), t)
    kappa = 0.5 * math.pi * math.sqrt(lam1) * integral
    kappa_mono = math.sqrt(lam1) * integral / (2.0 * math.pi)

    bad = [int(k) for k in range(1, k_max + 1)
           if abs(eps * k * k - kappa ** 2) <= nu * math.sqrt(eps)]
    res, _ = monodromy_resonances(a0, lam1, k_max=min(k_max, 12))
    return GapReport(eps=eps, kappa=kappa, kappa_monodromy=kappa_mono,
                     nu=nu, violating_k=bad, resonances=res,
                     holds=not bad)
