"""Command-line entry point wiring the modules into reproducible runs.

Subcommands
-----------
constants   spectral-constant table with closed-form cross-checks
geodesic    closed geodesic, parallel frame, curvature, nondegeneracy report
reduce      parameter pipeline (sigma, mu0, mu1, e0, e1) plus resonance gaps
residual    Monte-Carlo projection sweep with fitted scaling exponents
ode         solve one singular periodic ODE and serialize the solution

Every command is driven by a TOML config file (``--model``) and/or flags,
is deterministic for a fixed config, and emits JSON (plus CSV for sweeps)
embedding the schema version, the config hash and the tolerances used.

Exit codes: 0 success; 2 condition failure (a hypothesis of the
construction is violated: dimension too small, existence window missed,
resonance, degeneracy); 3 numerical failure (a solver did not converge);
4 tolerance failure (a check ran to completion but missed its target).
"""

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ansatz import field_family, scaling_sweep
from .bubble_core import (Dimension, a1_via_mass, compute_constants,
                          eigen_residual, ipq, measured_decay_rate,
                          solve_negative_eigenpair)
from .geometry import (curvature_along, exact_fermi_chart, expansion_check,
                       find_closed_geodesic, geodesic_residual,
                       jacobi_nondegeneracy, model_from_config,
                       parallel_frame)
from .reduction import build_params, compute_sigma, pipeline_report
from .singular_ode import (Degenerate, NearResonance, NewtonFailure,
                           PeriodicFunction, SingularOdeProblem, gap_check,
                           solve_singular_periodic)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONDITION = 2
EXIT_NUMERICAL = 3
EXIT_TOLERANCE = 4

DEFAULT_EPS = (1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3)


class ConditionFailure(RuntimeError):
    """A hypothesis of the construction is violated by the config."""


# ---------------------------------------------------------------------------
# config plumbing

def load_config(path):
    raw = Path(path).read_bytes()
    return tomllib.loads(raw.decode()), hashlib.sha256(raw).hexdigest()


def hash_mapping(mapping):
    blob = json.dumps(mapping, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def cosine_series(table, period, samples):
    """Sample constant + finite cosine/sine series on a periodic grid."""
    t = np.arange(samples) * period / samples
    vals = np.full(samples, float(table.get("constant", 0.0)))
    for k, c in enumerate(table.get("cosine", ()), start=1):
        vals += float(c) * np.cos(2.0 * math.pi * k * t / period)
    for k, c in enumerate(table.get("sine", ()), start=1):
        vals += float(c) * np.sin(2.0 * math.pi * k * t / period)
    return PeriodicFunction(period, vals)


def bump_profile(table, period, N, samples=256):
    """Normal-bundle displacement: a circle in the first two directions."""
    A = float(table.get("amplitude", 0.0))
    m = int(table.get("harmonic", 1))
    t = np.arange(samples) * period / samples
    dv = np.zeros((samples, N))
    dv[:, 0] = A * np.sin(2.0 * math.pi * m * t / period)
    dv[:, 1] = A * np.cos(2.0 * math.pi * m * t / period)
    return PeriodicFunction(period, dv)


def write_report(report, out, name):
    text = json.dumps(report, indent=2, sort_keys=True, default=float)
    if out:
        outdir = Path(out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / name).write_text(text + "\n")
        print(str(outdir / name))
    else:
        print(text)


def build_geometry(cfg):
    model = model_from_config(dict(cfg.get("model", {})))
    gcfg = cfg.get("geodesic", {})
    n = model.n
    point = np.asarray(gcfg.get("point", [0.0] * n), dtype=float)
    direction = np.asarray(gcfg.get("direction", [1.0] + [0.0] * (n - 1)),
                           dtype=float)
    geo = find_closed_geodesic(model, point, direction,
                               float(gcfg.get("period_guess", 2 * math.pi)),
                               samples=int(gcfg.get("samples", 64)))
    frame = parallel_frame(geo)
    curv = curvature_along(model, geo, frame)
    return model, geo, frame, curv


def sweep_values(cfg, args):
    eps = list(args.eps) if args.eps else \
        list(cfg.get("sweep", {}).get("eps", DEFAULT_EPS))
    if any(e <= 0 for e in eps) or sorted(eps, reverse=True) != eps:
        raise ConditionFailure("eps values must be positive and sorted "
                               "descending")
    return eps


# ---------------------------------------------------------------------------
# constants

def cmd_constants(args):
    n = args.n
    if n < 8:
        print("condition failure: the construction requires n >= 8",
              file=sys.stderr)
        return EXIT_CONDITION
    tol = 1e-8
    dim = Dimension(n)
    ep = solve_negative_eigenpair(dim)
    const = compute_constants(dim, eigenpair=ep)
    N = dim.N

    checks = []

    def check(name, value, reference, tolerance, relative=True):
        scale = max(abs(reference), 1.0) if relative else 1.0
        ok = abs(value - reference) <= tolerance * scale
        checks.append({"name": name, "value": float(value),
                       "reference": float(reference),
                       "tolerance": float(tolerance),
                       "relative": bool(relative), "pass": bool(ok)})

    check("a_n", const.a_n, 8.0 * (n - 2) / ((n - 3.0) * (n + 1.0)), tol)
    check("b_n", const.b_n, const.A1 / const.B3, tol)
    check("B2_over_A2", const.B2 / const.A2,
          (N - 2.0) * (N - 3.0) / (4.0 * (N - 1.0)), tol)
    check("A1_dual_route", const.A1, a1_via_mass(dim), tol)
    check("eigen_residual", eigen_residual(dim, ep), 0.0, tol,
          relative=False)
    check("z0_decay_rate", measured_decay_rate(dim, ep),
          math.sqrt(const.lambda1), 0.02)
    # moment recursion I_p^q = q/(p-q-1) I_p^{q-1}, spot check
    check("moment_recursion", ipq(N, 2),
          2.0 / (N - 3.0) * ipq(N, 1), 1e-10)

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "constants",
        "config_hash": hash_mapping({"n": n}),
        "n": n,
        "tolerances": {"closed_form": tol, "decay_rate": 0.02},
        "constants": const.to_dict(),
        "checks": checks,
    }
    write_report(report, args.out, "constants_n%d.json" % n)
    return EXIT_OK if all(c["pass"] for c in checks) else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# geodesic

def cmd_geodesic(args):
    cfg, digest = load_config(args.model)
    model, geo, frame, curv = build_geometry(cfg)
    jac = jacobi_nondegeneracy(geo, frame, curvature=curv)
    exp = expansion_check(chart=exact_fermi_chart(model, geo, frame),
                          x0=float(cfg.get("geodesic", {}).get("x0", 0.0)))
    eigs = np.atleast_1d(jac["eigenvalues"])
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "geodesic",
        "config_hash": digest,
        "period": float(geo.period),
        "samples": int(geo.samples),
        "geodesic_residual": float(geodesic_residual(geo)),
        "jacobi": {
            "verdict": ("degenerate" if jac["degenerate"]
                        else "nondegenerate"),
            "distance_to_one": float(jac["distance_to_one"]),
            "floquet": [[z.real, z.imag] for z in eigs],
        },
        "expansion_check": {k: float(v) for k, v in exp.items()
                            if np.isscalar(v) or isinstance(v, float)},
        "curvature": {
            "scalar": [float(c.scalar) for c in curv],
            "ric_tangent": [float(c.ric_tangent) for c in curv],
        },
    }
    write_report(report, args.out, "geodesic.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# reduce

def cmd_reduce(args):
    cfg, digest = load_config(args.model)
    regime = args.regime or cfg.get("regime", "subcritical")
    eps = sweep_values(cfg, args)
    model, geo, frame, curv = build_geometry(cfg)
    h = cosine_series(cfg.get("h", {"constant": 1.0}), geo.period,
                      geo.samples)
    const = compute_constants(Dimension(model.n))
    prof = compute_sigma(curv, h, const)

    d = None
    if "d" in cfg:
        d = bump_profile(cfg["d"], geo.period, model.n - 1)
    try:
        params = build_params(prof, const, regime, max(eps), d=d,
                              convention=cfg.get("convention", "measured"))
    except ValueError as exc:
        # existence window missed (e.g. repulsive needs sigma < 0)
        print("condition failure: %s" % exc, file=sys.stderr)
        return EXIT_CONDITION
    except (Degenerate, NearResonance) as exc:
        print("condition failure: %s" % exc, file=sys.stderr)
        return EXIT_CONDITION
    except NewtonFailure as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL

    report = pipeline_report(params, prof, const, curvature=curv)
    report.update({
        "schema_version": SCHEMA_VERSION,
        "command": "reduce",
        "config_hash": digest,
    })
    # resonance-gap table over the sweep, a0 = mu0^2 in the slow variable
    a0 = PeriodicFunction(geo.period, params.mu0.values ** 2)
    gaps = []
    for e in eps:
        rep = gap_check(e, a0, const.lambda1)
        gaps.append({"eps": e, "kappa": rep.kappa,
                     "kappa_monodromy": rep.kappa_monodromy,
                     "holds": bool(rep.holds),
                     "violating_k": list(rep.violating_k)})
    report["gap_table"] = gaps
    write_report(report, args.out, "reduce.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# residual

def cmd_residual(args):
    cfg, digest = load_config(args.model)
    regime = args.regime or cfg.get("regime", "subcritical")
    eps = sweep_values(cfg, args)
    sw = cfg.get("sweep", {})
    seed = args.seed if args.seed is not None else sw.get("seed")
    if seed is None:
        print("condition failure: a seed is mandatory for Monte-Carlo "
              "commands", file=sys.stderr)
        return EXIT_CONDITION
    budget = int(args.budget or sw.get("budget", 100000))
    x0 = float(sw.get("x0", 0.0))
    delta = float(sw.get("delta", 0.5))
    workers = int(sw.get("workers", 1))

    model, geo, frame, curv = build_geometry(cfg)
    chart = exact_fermi_chart(model, geo, frame)
    h = cosine_series(cfg.get("h", {"constant": 1.0}), geo.period,
                      geo.samples)
    const = compute_constants(Dimension(model.n))
    d = None
    if "d" in cfg:
        d = bump_profile(cfg["d"], geo.period, model.n - 1)

    channels = sw.get("channels", [model.n, 0, 1, "pointwise"])
    channels = [c if c == "pointwise" else int(c) for c in channels]
    try:
        fields = field_family(chart, curv, h, const, regime, eps, d=d,
                              delta=delta, generic_mu=args.generic_mu)
        report = scaling_sweep(fields, channels, x0, budget=budget,
                               seed=int(seed), workers=workers)
    except ValueError as exc:
        print("condition failure: %s" % exc, file=sys.stderr)
        return EXIT_CONDITION
    except (Degenerate, NearResonance) as exc:
        print("condition failure: %s" % exc, file=sys.stderr)
        return EXIT_CONDITION
    except NewtonFailure as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return EXIT_NUMERICAL

    body = json.loads(report.to_json())
    body.update({"schema_version": SCHEMA_VERSION, "command": "residual",
                 "config_hash": digest, "regime": regime,
                 "generic_mu": args.generic_mu})
    write_report(body, args.out, "residual.json")
    csv_text = "\n".join(report.csv_rows()) + "\n"
    if args.out:
        (Path(args.out) / "residual.csv").write_text(csv_text)
        print(str(Path(args.out) / "residual.csv"))
    else:
        sys.stdout.write(csv_text)
    for name, fit in sorted(report.slopes.items()):
        ch = report.channels[name]
        est = np.asarray(ch["estimate"])
        err = np.asarray(ch["stderr"])
        mask = (np.abs(est) > 0) & (err < 0.1 * np.abs(est))
        x = np.log(np.asarray(report.eps)[mask])
        y = np.log(np.abs(est[mask]))
        resid = y - (fit["slope"] * x + fit["intercept"])
        dof = max(len(x) - 2, 1)
        se = math.sqrt(float(resid @ resid) / dof
                       / float(((x - x.mean()) ** 2).sum()))
        print("slope %-12s %.4f +- %.4f  (95%% CI [%.3f, %.3f], %d points)"
              % (name, fit["slope"], se, fit["slope"] - 1.96 * se,
                 fit["slope"] + 1.96 * se, fit["points_used"]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# ode

def cmd_ode(args):
    cfg, digest = load_config(args.model)
    table = cfg.get("ode", {})
    period = float(table.get("period", 2 * math.pi))
    samples = int(table.get("samples", 256))
    sigma = cosine_series(table.get("sigma", {"constant": 1.0}), period,
                          samples)
    try:
        problem = SingularOdeProblem(sigma, float(table.get("b", 1.0)),
                                     table.get("sign", "attractive"),
                                     a=float(table.get("a", 1.0)))
        sol = solve_singular_periodic(problem)
    except (Degenerate, NearResonance, ValueError) as exc:
        print("condition failure [%s]: %s" % (type(exc).__name__, exc),
              file=sys.stderr)
        return EXIT_CONDITION
    except NewtonFailure as exc:
        print("numerical failure [%s]: %s" % (type(exc).__name__, exc),
              file=sys.stderr)
        return EXIT_NUMERICAL
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "ode",
        "config_hash": digest,
        "period": period,
        "samples": sol.mu0.samples,
        "grid": sol.mu0.grid.tolist(),
        "values": sol.mu0.values.tolist(),
        "floquet": [[complex(z).real, complex(z).imag]
                    for z in np.atleast_1d(sol.floquet)],
        "nondegenerate": bool(sol.nondegenerate),
        "residual": float(sol.residual),
    }
    write_report(report, args.out, "ode.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def build_parser():
    parser = argparse.ArgumentParser(
        prog="geobubble",
        description="Bubbling-ansatz verification experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="spectral-constant table")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_constants)

    for name, func in (("geodesic", cmd_geodesic), ("reduce", cmd_reduce),
                       ("residual", cmd_residual), ("ode", cmd_ode)):
        p = sub.add_parser(name)
        p.add_argument("--model", required=True,
                       help="TOML config file")
        p.add_argument("--out", default=None)
        if name in ("reduce", "residual"):
            p.add_argument("--regime", default=None,
                           choices=["subcritical", "supercritical"])
            p.add_argument("--eps", type=float, nargs="+", default=None)
        if name == "residual":
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--budget", type=int, default=None)
            p.add_argument("--generic-mu", dest="generic_mu", type=float,
                           default=None)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConditionFailure as exc:
        print("condition failure: %s" % exc, file=sys.stderr)
        return EXIT_CONDITION


if __name__ == "__main__":
    sys.exit(main())
