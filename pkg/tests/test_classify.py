import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singulib.classify import (ClassificationError, b_functionals, classify, decade_trend,
                               epsilons, estimate_B, hypothesis_check, rho_grid)
from singulib.model import build_model
from singulib.nonlinearity import TransformF, make


def tf(**spec):
    return TransformF(make(spec))


# --- B functionals ----------------------------------------------------------

def test_model_functionals_near_half():
    b1, b2 = b_functionals(tf(family="model", B=2), 6.0)
    assert 0.45 <= b1 <= 0.55 and 0.45 <= b2 <= 0.55


def test_model_functionals_closed_form():
    m = build_model(2)
    s = np.array([3.0, 6.0, 12.0])
    b1, b2 = b_functionals(tf(family="model", B=2), s)
    z = m.functionals(s)
    assert np.allclose(b1, z["B1_inv"], rtol=1e-10)
    assert np.allclose(b2, z["B2_inv"], rtol=1e-9)


def test_exponential_is_borderline():
    with pytest.raises(ClassificationError, match="sub-exponential borderline"):
        b_functionals(tf(family="custom", a="s"), 5.0)


def test_power_exp_at_8():
    # frozen mpmath value, recomputed from the E1 closed form below
    b1, _ = b_functionals(tf(family="power_exp", q=2, r=1), 8.0)
    assert b1 == pytest.approx(0.5140395262087897, rel=1e-12)
    assert abs(b1 - 0.5) <= 0.5 * math.log(8) / 64


def test_power_exp_at_8_oracle_recomputed():
    # f = s e^{s^2}: F(s) = E1(s^2)/2 in closed form
    with mp.workdps(40):
        s = mp.mpf(8)
        F = mp.e1(s * s) / 2
        fp = mp.exp(s * s) * (2 * s * s + 1)
        ref = -mp.log(F) * (1 - fp * F)
    assert float(ref) == pytest.approx(0.5140395262087897, rel=1e-14)


def test_F_above_one_rejected():
    with pytest.raises(ClassificationError, match="F\\(s\\) >= 1"):
        # F(1.1) = e * int_{1.1}^inf e^{-(x-1)^2} dx > 1
        b_functionals(tf(family="custom", a="s^2 - 2*s", s0=1.05), 1.1)


# --- B estimation -------------------------------------------------------------

@pytest.mark.parametrize("spec, B, tol", [
    ({"family": "power_exp", "q": 2, "r": 1}, 2.0, 0.05),
    ({"family": "power_exp", "q": 2, "r": -3}, 2.0, 0.05),
    ({"family": "power_exp", "q": 3, "r": 0}, 1.5, 0.05),
    ({"family": "power_exp", "q": 1.5, "r": 2}, 3.0, 0.05),
    ({"family": "iter_exp", "q": 1}, 1.0, 0.05),
    ({"family": "sum_exp", "q": 2, "r": 0.5}, 2.0, 0.05),
    ({"family": "log_exp", "q": 2, "r": 1}, 2.0, 0.1),
])
def test_estimate_B(spec, B, tol):
    est = estimate_B(TransformF(make(spec)))
    assert est.converged
    assert est.B_estimate == pytest.approx(B, abs=tol)
    assert est.A_estimate == pytest.approx(1.0, abs=1e-3)


def test_B1_B2_gap_shrinks():
    est = estimate_B(tf(family="power_exp", q=2, r=1))
    assert est.B1_B2_gap[-1] < 0.1 * est.B1_B2_gap[0]


# --- remainders ---------------------------------------------------------------

def test_model_remainders_vanish():
    e1, e2 = epsilons(tf(family="model", B=2), build_model(2), np.array([10.0, 1e3, 1e6]))
    assert np.all(e1 < 1e-12) and np.all(e2 < 1e-12)


def test_power_exp_eps1_at_100():
    e1, _ = epsilons(tf(family="power_exp", q=2, r=1), build_model(2), 100.0)
    assert e1 <= 0.5 * math.log(100) / 100


def test_log_exp_eps1_at_e20():
    # independent mpmath oracle (quadrature for F, findroot for phi) gives 0.0237517387529821
    t = tf(family="log_exp", q=2, r=1)
    m = build_model(2)
    e1, _ = epsilons(t, m, math.exp(20))
    assert e1 == pytest.approx(0.0237517387529821, rel=1e-9)
    # decay is slower than any power: a decade in rho barely moves it
    e1_far, _ = epsilons(t, m, math.exp(20) * 10)
    assert e1_far > 0.8 * e1


# --- verdicts ---------------------------------------------------------------

@pytest.mark.parametrize("spec, verdict", [
    ({"family": "power_exp", "q": 2, "r": 1}, "pass"),
    ({"family": "sum_exp", "q": 2, "r": 0.9}, "pass"),
    ({"family": "iter_exp", "q": 1}, "pass"),
    ({"family": "log_exp", "q": 2, "r": 1}, "fail"),
    ({"family": "iter_exp", "q": 2}, "fail"),
    ({"family": "model", "B": 2}, "pass"),
])
def test_verdicts(spec, verdict):
    rep = classify(make(spec))
    assert rep.hypothesis_verdict == verdict


@pytest.mark.parametrize("spec", [{"family": "power_exp", "q": 2, "r": 1},
                                  {"family": "log_exp", "q": 2, "r": 1},
                                  {"family": "iter_exp", "q": 2}])
def test_verdict_stable_under_refinement(spec):
    t = TransformF(make(spec))
    m = build_model(make(spec).known_B)
    coarse, _ = hypothesis_check(t, m, rho_grid(n=25))
    fine, _ = hypothesis_check(t, m, rho_grid(n=49))
    assert coarse.verdict == fine.verdict


def test_pass_means_decreasing_top_decade():
    v, samples = hypothesis_check(tf(family="power_exp", q=2, r=1), build_model(2))
    assert v.verdict == "pass"
    rho, stat = samples[:, 0], samples[:, 3]
    top = rho >= rho.max() / 10
    assert np.all(np.diff(stat[top]) < 0)


def test_report_dict_roundtrip_keys():
    d = classify(make({"family": "power_exp", "q": 2, "r": 1})).to_dict()
    assert d["B_source"] == "family" and d["hypothesis"]["verdict"] == "pass"
    assert len(d["samples"]["s"]) == len(d["samples"]["B2_inv"])


def test_custom_uses_estimate():
    rep = classify(make({"family": "custom", "a": "s^2 + log(s)", "s0": 1}))
    assert rep.B_source == "estimate"
    assert rep.B_model == pytest.approx(2.0, abs=0.05)


def test_B_override():
    rep = classify(make({"family": "power_exp", "q": 2, "r": 1}), B=3.0)
    assert rep.B_model == 3.0 and rep.B_source == "config"


def test_grid_too_short():
    with pytest.raises(ValueError, match="3 decades"):
        decade_trend(np.geomspace(10, 1000, 5), np.ones(5))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(1e-3, 1e3))
def test_decade_trend_power_laws(p, c):
    rho = rho_grid()
    assert decade_trend(rho, c * rho**-p).verdict == "pass"
    assert decade_trend(rho, c * rho**p).verdict == "fail"


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_decade_trend_flat_is_inconclusive(c):
    rho = rho_grid()
    assert decade_trend(rho, np.full(rho.shape, c)).verdict == "inconclusive"
