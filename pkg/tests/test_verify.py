import csv
import dataclasses
import io
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from singulib.verify import (BUMPS, Bump, VerificationError, bound_checks, derivative,
                             distributional_test, expansion_compare, expansion_for, fd_weights,
                             fF_band, fit_order, ode_residual, profile_csv, verify_profile)


# --- finite differences -------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=9, max_size=9, unique=True),
       st.lists(st.floats(-3, 3), min_size=9, max_size=9))
def test_fd_weights_exact_on_polynomials(nodes, coeffs):
    x = np.sort(np.array(nodes))
    if np.min(np.diff(x)) < 0.05:
        return
    p = np.polynomial.Polynomial(coeffs[:8])
    x0 = float(x[4])
    got = fd_weights(x0, x) @ p(x)
    assert got == pytest.approx(p.deriv()(x0), rel=1e-7, abs=1e-7)


def test_derivative_graded_grid():
    x = np.sqrt(np.linspace(50, 60, 40))
    y = np.sin(x)
    assert np.allclose(derivative(x, y, 9), np.cos(x), atol=1e-10)
    with pytest.raises(VerificationError):
        derivative(x[:5], y[:5], 9)


def test_fit_order_recovers_power():
    X = np.geomspace(10, 1000, 30)
    alpha, c = fit_order(X, 3.0 * X**-1.7 * np.log(X), log_power=1.0)
    assert alpha == pytest.approx(1.7, abs=1e-12) and c == pytest.approx(3.0, rel=1e-12)


# --- residuals -----------------------------------------------------------------

def test_model_residual(model2):
    assert ode_residual(model2.p, model2.nl).max_rel <= 1e-9


def test_power_exp_residual(power21):
    assert ode_residual(power21.p, power21.nl).max_rel <= 1e-5


def test_residual_detects_perturbation(model2):
    p = model2.p
    k = p.segment == "inner_constructed"
    u = p.u + np.where(k, 0.01 * np.sin(5 * p.rho), 0.0)
    ur = p.u_rho + np.where(k, 0.05 * np.cos(5 * p.rho), 0.0)
    bad = dataclasses.replace(p, u=u, u_rho=ur)
    assert ode_residual(bad, model2.nl).max_rel >= 1e-2


# --- expansions ------------------------------------------------------------------

def test_model_expansion_exact(model2):
    rec = expansion_compare(model2.p, expansion_for(model2.nl))
    assert rec.passed and rec.fitted_order is None and rec.max_abs_deviation <= 1e-9


def test_power_exp_expansion(power21):
    rec = expansion_compare(power21.p, expansion_for(power21.nl))
    assert 1.35 <= rec.fitted_order <= 1.65 and rec.reliable and rec.passed


def test_iter_exp_expansion(iter1):
    rec = expansion_compare(iter1.p, expansion_for(iter1.nl))
    assert rec.fitted_order == pytest.approx(2.0, abs=0.15) and rec.passed


@pytest.mark.parametrize("name", ["power21", "iter1"])
def test_fit_stable_under_halved_window(request, name):
    P = request.getfixturevalue(name)
    exp = expansion_for(P.nl)
    full = expansion_compare(P.p, exp, (50.0, 2000.0))
    half = expansion_compare(P.p, exp, (50.0, 1000.0))
    assert abs(full.fitted_order - half.fitted_order) <= 0.1


def test_fit_window_too_short(power21):
    with pytest.raises(VerificationError, match="decade"):
        expansion_compare(power21.p, expansion_for(power21.nl), (50.0, 400.0))


def test_power_exp_main_term_constants(power21):
    # q=2, r=1: main = (ell - 2 log ell + 0)^{1/2} with ell = -2 log r
    exp = expansion_for(power21.nl)
    rho = np.array([101.0])
    assert exp.main(rho)[0] == pytest.approx(math.sqrt(100 - 2 * math.log(100)), rel=1e-15)


def test_custom_has_no_expansion():
    from singulib.nonlinearity import make
    assert expansion_for(make({"family": "custom", "a": "s^2", "s0": 1})) is None


# --- distributional test -----------------------------------------------------------

@pytest.mark.parametrize("kind", BUMPS)
def test_model_distributional(model2, kind):
    p = model2.p
    rec = distributional_test(p, model2.nl, 2.0, Bump(kind, 0.5 * p.R))
    assert abs(rec.decay_exponent - 0.5) <= 0.1
    assert rec.relative_J0 <= 1e-6
    assert rec.identity_residual <= 1e-9
    J = np.abs(rec.J)
    assert np.all(np.diff(J) < 0)
    assert rec.passed


def test_zero_bump(model2):
    rec = distributional_test(model2.p, model2.nl, 2.0, Bump("zero", 0.5 * model2.p.R))
    assert all(j == 0 for j in rec.J) and rec.passed


@pytest.mark.parametrize("kind", BUMPS)
def test_bump_derivatives_symbolic(kind):
    r = sp.symbols("r", positive=True)
    a = sp.Rational(7, 10)
    x = r / a
    phi = {"poly3": (1 - x**2) ** 3, "poly4": (1 - x**2) ** 4,
           "cos2": ((1 + sp.cos(sp.pi * x)) / 2) ** 2}[kind]
    lap = sp.diff(phi, r, 2) + sp.diff(phi, r) / r
    b = Bump(kind, 0.7)
    for r0 in (0.1, 0.3, 0.55):
        v, dphi, lp = b.eval(np.array([r0]))
        assert v[0] == pytest.approx(float(phi.subs(r, r0)), rel=1e-13)
        assert dphi[0] == pytest.approx(float(sp.diff(phi, r).subs(r, r0)), rel=1e-12)
        assert lp[0] == pytest.approx(float(lap.subs(r, r0)), rel=1e-12)
    assert np.all(b.eval(np.array([0.7, 0.9]))[0] == 0)


def test_bump_support_checked(model2):
    with pytest.raises(VerificationError, match="inside B_R"):
        distributional_test(model2.p, model2.nl, 2.0, Bump("poly3", 1.1 * model2.p.R))


# --- bounds -----------------------------------------------------------------------

def test_model_bounds(model2):
    out = bound_checks(model2.p, model2.nl, 2.0, (0.1,))
    assert all(b.passed for b in out)


def test_power_exp_gradient_bound(power21):
    p = power21.p
    k = (p.segment != "outer_shot") & (p.rho >= 1 - 2 * math.log(1e-3))
    ell2 = p.rho[k] - 1
    # r |u'| (-2 log r)^{0.4} with r |u'| = 2 |U_rho|
    val = 2 * np.abs(p.u_rho[k]) * ell2**0.4
    assert np.max(val) <= 1.0


@pytest.mark.parametrize("name", ["power21", "iter1"])
def test_fF_band(request, name):
    P = request.getfixturevalue(name)
    band = fF_band(P.t, P.m, 50.0, 5000.0)
    assert band.passed and band.ratio <= 10


# --- report and CSV ------------------------------------------------------------------

def test_report_model(model2):
    rep = verify_profile(model2.p, model2.nl, model2.t, model2.m)
    d = rep.to_dict()
    assert d["residual_max_rel"] <= 1e-9
    assert all(x["passed"] for x in d["distributional"])
    assert d["extra"]["slope_ratio_innermost"] == pytest.approx(1.0, abs=1e-9)
    assert rep.to_json() == rep.to_json()


def test_csv_roundtrip(power21):
    p = power21.p
    res = ode_residual(p, power21.nl).rel
    text = profile_csv(p, res)
    assert text.endswith("\r\n")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["r", "rho", "u", "u_prime", "phi", "eta", "residual", "segment"]
    body = rows[1:]
    assert len(body) == len(p)
    rho = np.array([float(r[1]) for r in body])
    u = np.array([float(r[2]) for r in body])
    assert np.array_equal(rho, p.rho) and np.array_equal(u, p.u)
    assert all(r[7] in ("inner_constructed", "inner_continued", "outer_shot") for r in body)


def _log10_cell(cell):
    mant, e = cell.split("e")
    return math.log10(abs(float(mant))) + int(e), -1.0 if mant.startswith("-") else 1.0


def test_csv_deep_nodes_written_from_logs(power21):
    p = power21.p
    body = list(csv.reader(io.StringIO(profile_csv(p))))[1:]
    # the innermost node has r = e^{-(rho-1)/2} far below the double range
    assert p.r[0] == 0 and not np.isfinite(p.u_prime[0])
    lr, _ = _log10_cell(body[0][0])
    assert lr == pytest.approx(p.log_r[0] / math.log(10), rel=1e-14)
    lup, sign = _log10_cell(body[0][3])
    expected = (math.log(2 * p.u_rho[0]) - p.log_r[0]) / math.log(10)
    assert sign == -1.0 and lup == pytest.approx(expected, rel=1e-14)
    # ordinary nodes are plain repr of the float
    assert float(body[-1][0]) == p.r[-1]
