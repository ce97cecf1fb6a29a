import json
import math

import numpy as np
import pytest

from geobubble import cli

N = 7


def run(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_toml(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


FLAT_SUB = """
regime = "subcritical"

[model]
kind = "flat-torus"
n = 8

[h]
constant = 1.0
"""

PT_MODEL = """
[model]
kind = "perturbed-torus"
n = 8
base = [[0.5,0,0,0,0,0,0],[0,0.6,0,0,0,0,0],[0,0,0.7,0,0,0,0],
        [0,0,0,0.8,0,0,0],[0,0,0,0,0.9,0,0],[0,0,0,0,0,1.0,0],
        [0,0,0,0,0,0,1.1]]
modulation = [[0.3,0,0,0,0,0,0],[0,0.3,0,0,0,0,0],[0,0,0.3,0,0,0,0],
              [0,0,0,0.3,0,0,0],[0,0,0,0,0.3,0,0],[0,0,0,0,0,0.3,0],
              [0,0,0,0,0,0,0.3]]
wavenumber = 1
amplitude = 0.05

[h]
constant = 1.0
cosine = [0.1]

[sweep]
x0 = 0.0
delta = 0.5
"""


# ---------------------------------------------------------------------------
# constants

def test_constants_ok_and_report(tmp_path, capsys):
    code = cli.main(["constants", "--n", "8", "--out", str(tmp_path)])
    capsys.readouterr()
    assert code == cli.EXIT_OK
    blob = json.loads((tmp_path / "constants_n8.json").read_text())
    assert blob["schema_version"] == cli.SCHEMA_VERSION
    assert all(c["pass"] for c in blob["checks"])
    assert blob["constants"]["a_n"] == pytest.approx(16.0 / 15.0, rel=1e-12)


def test_constants_low_dimension_is_condition_failure(capsys):
    code, _, err = run(capsys, ["constants", "--n", "7"])
    assert code == cli.EXIT_CONDITION
    assert "condition failure" in err


def test_constants_output_deterministic(tmp_path, capsys):
    a = tmp_path / "a"
    b = tmp_path / "b"
    cli.main(["constants", "--n", "8", "--out", str(a)])
    cli.main(["constants", "--n", "8", "--out", str(b)])
    capsys.readouterr()
    assert (a / "constants_n8.json").read_bytes() == \
        (b / "constants_n8.json").read_bytes()


# ---------------------------------------------------------------------------
# geodesic

def test_geodesic_report(tmp_path, capsys):
    model = write_toml(tmp_path, "pt.toml", PT_MODEL)
    code = cli.main(["geodesic", "--model", model, "--out", str(tmp_path)])
    capsys.readouterr()
    assert code == cli.EXIT_OK
    blob = json.loads((tmp_path / "geodesic.json").read_text())
    assert blob["jacobi"]["verdict"] == "nondegenerate"
    assert blob["geodesic_residual"] < 1e-8
    assert blob["period"] == pytest.approx(2 * math.pi, rel=1e-6)
    assert len(blob["curvature"]["scalar"]) == blob["samples"]


# ---------------------------------------------------------------------------
# reduce

def test_reduce_flat_constant_mu0(tmp_path, capsys):
    model = write_toml(tmp_path, "flat.toml", FLAT_SUB)
    code = cli.main(["reduce", "--model", model, "--out", str(tmp_path)])
    capsys.readouterr()
    assert code == cli.EXIT_OK
    blob = json.loads((tmp_path / "reduce.json").read_text())
    # constant sigma = h = 1: mu0^2 = b_n / a_m with the measured a_m
    mu = np.asarray(blob["mu0"])
    from geobubble.bubble_core import Dimension, compute_constants
    from geobubble.reduction import measured_coefficient
    const = compute_constants(Dimension(8))
    target = math.sqrt(const.b_n / measured_coefficient(const))
    assert mu == pytest.approx(np.full(mu.size, target), rel=1e-8)
    assert all(abs(v) < 1e-9 for v in blob["bracket_norms"].values())
    assert all(row["holds"] for row in blob["gap_table"])


def test_reduce_supercritical_window_missed(tmp_path, capsys):
    # positive sigma cannot support the repulsive regime: clean refusal
    model = write_toml(tmp_path, "flat.toml", FLAT_SUB)
    code, _, err = run(capsys, ["reduce", "--model", model,
                                "--regime", "supercritical"])
    assert code == cli.EXIT_CONDITION
    assert "condition failure" in err


def test_reduce_rejects_bad_eps(tmp_path, capsys):
    model = write_toml(tmp_path, "flat.toml", FLAT_SUB)
    code, _, err = run(capsys, ["reduce", "--model", model,
                                "--eps", "0.001", "0.01"])
    assert code == cli.EXIT_CONDITION
    assert "sorted" in err


# ---------------------------------------------------------------------------
# residual

RESIDUAL_SWEEP = PT_MODEL + """
[sweep.override]
"""


def residual_config(tmp_path):
    text = PT_MODEL + """
eps_unused = 0
"""
    text = text.replace("[sweep]\nx0 = 0.0\ndelta = 0.5\n", """
[sweep]
x0 = 0.0
delta = 0.5
seed = 3
budget = 10000
eps = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3]
channels = [8, 0]
""")
    return write_toml(tmp_path, "res.toml", text)


def test_residual_requires_seed(tmp_path, capsys):
    model = write_toml(tmp_path, "pt.toml", PT_MODEL)
    code, _, err = run(capsys, ["residual", "--model", model])
    assert code == cli.EXIT_CONDITION
    assert "seed" in err


def test_residual_deterministic_and_csv(tmp_path, capsys):
    model = residual_config(tmp_path)
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    c1 = cli.main(["residual", "--model", model, "--out", str(out1)])
    c2 = cli.main(["residual", "--model", model, "--out", str(out2)])
    out, _ = capsys.readouterr()
    assert c1 == c2 == cli.EXIT_OK
    assert (out1 / "residual.csv").read_bytes() == \
        (out2 / "residual.csv").read_bytes()
    blob = json.loads((out1 / "residual.json").read_text())
    assert blob["seed"] == 3
    assert set(blob["channels"]) == {"Z_dilation", "Z0"}
    assert "slope Z0" in out and "+-" in out


def test_residual_generic_mu_slope_first_order(tmp_path, capsys):
    model = residual_config(tmp_path)
    code = cli.main(["residual", "--model", model, "--generic-mu", "1.0",
                     "--out", str(tmp_path)])
    capsys.readouterr()
    assert code == cli.EXIT_OK
    blob = json.loads((tmp_path / "residual.json").read_text())
    assert blob["generic_mu"] == 1.0
    slope = blob["slopes"]["Z_dilation"]["slope"]
    assert 0.8 <= slope <= 1.2


# ---------------------------------------------------------------------------
# ode

def ode_config(tmp_path, sigma_const, sign, b=2.0833333, extra=""):
    text = """
[ode]
period = 6.283185307179586
samples = 128
b = %g
sign = "%s"
a = 1.0
%s

[ode.sigma]
constant = %g
cosine = [0.05]
""" % (b, sign, extra, sigma_const)
    return write_toml(tmp_path, "ode.toml", text)


def test_ode_attractive_solves(tmp_path, capsys):
    model = ode_config(tmp_path, 1.0, "attractive")
    code = cli.main(["ode", "--model", model, "--out", str(tmp_path)])
    capsys.readouterr()
    assert code == cli.EXIT_OK
    blob = json.loads((tmp_path / "ode.json").read_text())
    assert blob["nondegenerate"] is True
    assert blob["residual"] < 1e-8
    assert min(blob["values"]) > 0.0


def test_ode_existence_window_missed(tmp_path, capsys):
    # attractive existence needs sigma > 0
    model = ode_config(tmp_path, -1.0, "attractive")
    code, _, err = run(capsys, ["ode", "--model", model])
    assert code == cli.EXIT_CONDITION


def test_ode_resonant_sigma_rejected(tmp_path, capsys):
    # repulsive with q = -a sigma exactly on a resonance level k^2
    model = ode_config(tmp_path, -1.0, "repulsive")
    code, _, err = run(capsys, ["ode", "--model", model])
    assert code == cli.EXIT_CONDITION
    assert "condition failure" in err or "window" in err
