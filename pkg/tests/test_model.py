import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from singulib.model import G_of_v, build_model, log_target
from singulib.nonlinearity import TransformF


@pytest.mark.parametrize("B, r, expected", [
    (2.0, math.exp(-5), 5.5 * math.exp(-10)),
    (1.0, math.exp(-5), 2.75 * math.exp(-10)),
])
def test_G_of_v_values(B, r, expected):
    assert G_of_v(build_model(B), r) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("B", [1.0, 2.0, 5.0])
def test_G_of_v_near_one(B):
    assert G_of_v(build_model(B), 1 - 1e-9) == pytest.approx(B / 4, rel=1e-8)


def test_G_at_psi():
    m = build_model(3.0)
    assert float(m.G(m.psi(10.0))) == pytest.approx(0.75 * 10 * math.exp(-9), rel=1e-13)
    assert float(log_target(m, 10.0)) == pytest.approx(math.log(0.75 * 10 * math.exp(-9)), rel=1e-14)


def test_G_of_v_domain():
    with pytest.raises(ValueError):
        G_of_v(build_model(2), 1.5)


def _sympy_model(B):
    s, r = sp.symbols("s r", positive=True)
    if B == 1:
        g = 4 * sp.exp(sp.exp(s)) / sp.exp(2 * s)
        G = sp.Rational(1, 4) * (sp.exp(s) + 1) * sp.exp(-sp.exp(s))
        v = sp.log(-2 * sp.log(r))
    else:
        k = sp.Rational(B) / (sp.Rational(B) - 1)
        g = 4 / (B * k) * s ** (1 - 2 * k) * sp.exp(s**k)
        G = sp.Rational(B, 4) * (s**k + 1) * sp.exp(-s**k)
        v = (-2 * sp.log(r)) ** (1 / k)
    return s, r, g, G, v


@pytest.mark.parametrize("B", [1, 2, 3])
def test_G_is_tail_of_one_over_g(B):
    s, _, g, G, _ = _sympy_model(B)
    assert sp.simplify(sp.diff(G, s) + 1 / g) == 0


@pytest.mark.parametrize("B", [1, 2, 3])
@pytest.mark.parametrize("r0", [0.5, 1e-3, 1e-40])
def test_v_solves_radial_equation(B, r0):
    s, r, g, _, v = _sympy_model(B)
    m = build_model(B)
    vp = sp.diff(v, r)
    vpp = sp.diff(v, r, 2)
    # -v'' - v'/r = g(v), compared in floats against the implementation
    lhs = float((-vpp - vp / r).subs(r, r0))
    rhs = float(g.subs(s, v).subs(r, r0))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert float(m.v(r0)) == pytest.approx(float(v.subs(r, r0)), rel=1e-14)
    assert float(m.v_prime(r0)) == pytest.approx(float(vp.subs(r, r0)), rel=1e-13)
    assert float(m.v_second(r0)) == pytest.approx(float(vpp.subs(r, r0)), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(1e-12, 0.9))
def test_v_radial_residual_property(B, r):
    m = build_model(B)
    v = float(m.v(r))
    lap = float(m.v_second(r) + m.v_prime(r) / r)
    assert -lap == pytest.approx(float(m.g(v)), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(1.0, 6.0), st.floats(1e-6, 0.999))
def test_G_of_v_identity_property(B, r):
    # G_of_v raises if G(v(r)) disagrees with the closed form
    m = build_model(B)
    assert G_of_v(m, r) > 0


@pytest.mark.parametrize("B", [1.0, 1.5, 2.0, 4.0])
@pytest.mark.parametrize("rho", [20.0, 200.0, 5000.0])
def test_closed_form_functionals_match_transform(B, rho):
    m = build_model(B)
    t = TransformF(m.nonlinearity())
    s = float(m.psi(rho))
    fun = m.at_psi(rho)
    rat = t.ratios(np.array([s]))
    assert float(fun["minus_logG"]) == pytest.approx(-float(t.log_F(s)), rel=1e-12)
    assert float(fun["one_minus_gpG"]) == pytest.approx(float(rat["one_minus_fpF"][0]), rel=1e-10)
    assert float(fun["E"]) == pytest.approx(float(rat["ffppF_over_fp_minus_one"][0]), rel=1e-9)


def test_psi_inverts_u():
    m = build_model(2.0)
    rho = np.array([3.0, 30.0, 3000.0])
    assert np.allclose(m.u_of_s(m.psi(rho)), rho - 1, rtol=1e-14)
    m1 = build_model(1.0)
    assert np.allclose(m1.u_of_s(m1.psi(rho)), rho - 1, rtol=1e-14)


def test_rejects_small_B():
    with pytest.raises(ValueError):
        build_model(0.9)
