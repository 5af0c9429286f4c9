"""Numerical checks on a radial profile.

* ODE residual |U'' + (e^{1-rho}/4) f(U)| / ((e^{1-rho}/4) f(U)), with U''
  from local finite-difference stencils of the stored U_rho.
* Deviation from closed-form leading asymptotics and a fitted remainder order.
* The distributional identity int (u Delta phi + f(u) phi) = 0 tested with
  logarithmic cut-offs Phi_eps(r) = Phi(log r / log eps).
* Growth bounds on u, |u'|, f(u) and f(phi)F(phi).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import BPoly
from scipy.optimize import brentq

from .model import ModelProblem, log_target
from .nonlinearity import Nonlinearity, TransformF
from .shoot import RadialProfile

LOG4 = math.log(4.0)


class VerificationError(ValueError):
    pass


# --- finite differences ------------------------------------------------------

def fd_weights(x0: float, x: np.ndarray) -> np.ndarray:
    """First-derivative weights at x0 from the nodes x (any spacing)."""
    h = np.max(np.abs(x - x0))
    z = (x - x0) / h
    n = z.size
    V = np.vander(z, n, increasing=True).T  # rows: powers
    rhs = np.zeros(n)
    rhs[1] = 1.0
    return np.linalg.solve(V, rhs) / h


def derivative(x: np.ndarray, y: np.ndarray, width: int = 7) -> np.ndarray:
    """dy/dx at every node from a centred (one-sided at the ends) stencil."""
    n = x.size
    if n < width:
        raise VerificationError(f"need at least {width} nodes per segment, got {n}")
    out = np.empty(n)
    half = width // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        sl = slice(lo, lo + width)
        out[i] = fd_weights(x[i], x[sl]) @ y[sl]
    return out


def _log_forcing(nl: Nonlinearity, rho, u):
    """log of (e^{1-rho}/4) f(u)."""
    return 1.0 - rho - LOG4 + nl.log_f_ext(u)


@dataclass
class ResidualResult:
    max_rel: float
    per_segment: dict
    rel: np.ndarray


def _pieces(idx, u, s_ext):
    """Split node indices where u crosses s_ext (f is only C^1 there)."""
    side = u >= s_ext
    cuts = np.flatnonzero(side[1:] != side[:-1]) + 1
    return np.split(idx, cuts)


def ode_residual(p: RadialProfile, nl: Nonlinearity, width: int = 9) -> ResidualResult:
    """Max relative residual over interior nodes of each segment.

    Inner segments are differenced in sqrt(rho), the outer one in r.  Stencils
    never straddle u = s_ext, where the extension of f below s0 is only C^1.
    """
    rel = np.full(len(p), np.nan)
    per = {}
    s_ext = nl.s_ext if nl.s_ext is not None else -np.inf
    for tag in p.segments:
        seg = np.flatnonzero(p.segment == tag)
        worst = np.nan
        for k in _pieces(seg, p.u[seg], s_ext):
            if k.size < width:
                continue
            rho, u, ur = p.rho[k], p.u[k], p.u_rho[k]
            if tag == "outer_shot":
                x = np.exp(0.5 * (1.0 - rho))
                drho_dx = -2.0 / x
            else:
                x = np.sqrt(rho)
                drho_dx = 2.0 * x
            urr = derivative(x, ur, width) / drho_dx
            lf = _log_forcing(nl, rho, u)
            # |urr + e^{lf}| / e^{lf} = |urr e^{-lf} + 1|
            with np.errstate(over="ignore", invalid="ignore"):
                rr = np.abs(urr * np.exp(-lf) + 1.0)
            rr[0] = rr[-1] = np.nan  # interior nodes only
            rel[k] = rr
            worst = np.nanmax([worst, np.nanmax(rr)])
        if np.isnan(worst):
            raise VerificationError(f"segment {tag!r} has fewer than {width} nodes")
        per[tag] = float(worst)
    return ResidualResult(float(np.nanmax(list(per.values()))), per, rel)


# --- asymptotic expansions --------------------------------------------------------

@dataclass
class Expansion:
    name: str
    main: object  # rho -> leading term
    variable: object  # rho -> X, the large parameter of the remainder
    expected_order: float
    log_power: float  # remainder ~ X^{-alpha} (log X)^{log_power}
    exact: bool = False


def _minus_log_w(B):
    return lambda rho: -log_target_B(B, rho)


def log_target_B(B, rho):
    rho = np.asarray(rho, dtype=float)
    return math.log(B / 4.0) + np.log(rho) + 1.0 - rho


def expansion_for(nl: Nonlinearity) -> Expansion | None:
    """Leading asymptotics of the singular solution for the built-in families."""
    p = dict(nl.params)
    fam = nl.family
    if fam == "power_exp":
        q, r = p["q"], p["r"]
        c1 = (2 * q + r - 1) / q
        c0 = math.log(4 * (q - 1) / q**2)

        def main(rho):
            ell = np.asarray(rho) - 1.0
            return (ell - c1 * np.log(ell) + c0) ** (1.0 / q)
        return Expansion("power_exp", main, lambda rho: 0.5 * (np.asarray(rho) - 1.0),
                         2.0 - 1.0 / q, 1.0)
    if fam == "sum_exp":
        q, r = p["q"], p["r"]
        B = q / (q - 1)
        x = r / q
        n = math.floor(1.0 / (1.0 - x) + 1.0)
        if n < 2:
            n = 2

        def main(rho):
            # inner ~ s^q, iterating X = Lw - X^x - ...: Lw - Lw^x + x Lw^{2x-1} - ...
            # (alternating signs; exact for the k <= 1 terms, which is all that
            # n uses when r < 2q/3)
            Lw = -log_target_B(B, rho)
            inner = Lw - sum((-x) ** k * Lw ** ((k + 1) * x - k) for k in range(n - 1)) \
                - (q - 1) / q * np.log(Lw)
            return (Lw - inner**x - (q - 1) / q * np.log(Lw) + math.log(1 / q)) ** (1 / q)
        return Expansion("sum_exp", main, _minus_log_w(B), 2.0 - 1.0 / q - x, 0.0)
    if fam == "iter_exp" and p["q"] == 1:
        def main(rho):
            Lw = -log_target_B(1.0, rho)
            return np.log(Lw - np.log(Lw))
        return Expansion("iter_exp", main, _minus_log_w(1.0), 2.0, 1.0)
    if fam == "model":
        B = p["B"]
        if abs(B - 1) <= 1e-8:
            main = lambda rho: np.log(np.asarray(rho) - 1.0)
        else:
            main = lambda rho: (np.asarray(rho) - 1.0) ** (1.0 - 1.0 / B)
        return Expansion("model", main, lambda rho: 0.5 * (np.asarray(rho) - 1.0),
                         math.inf, 0.0, exact=True)
    return None


@dataclass
class FitRecord:
    name: str
    fitted_order: float | None
    expected_order: float
    passed: bool
    reliable: bool
    log_power: float
    constant: float | None
    rho_window: tuple
    max_abs_deviation: float
    note: str = ""


def fit_order(X, d, log_power=0.0):
    """Least squares for log|d| = log c - alpha log X + log_power log log X."""
    X = np.asarray(X, dtype=float)
    y = np.log(np.abs(d)) - log_power * np.log(np.log(X))
    A = np.column_stack([np.ones_like(X), -np.log(X)])
    (logc, alpha), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(alpha), float(math.exp(logc))


def expansion_compare(p: RadialProfile, exp: Expansion, rho_window=(50.0, 2000.0),
                      tol_order: float = 0.15) -> FitRecord:
    inner = (p.segment == "inner_constructed") | (p.segment == "inner_continued")
    k = inner & (p.rho >= rho_window[0]) & (p.rho <= rho_window[1])
    rho = p.rho[k]
    if rho.size < 5:
        raise VerificationError("too few inner nodes in the fit window")
    if rho.max() / rho.min() < 10 ** 1.0:
        raise VerificationError("fit window must span at least a decade of rho")
    d = p.u[k] - exp.main(rho)
    dmax = float(np.max(np.abs(d)))
    win = (float(rho.min()), float(rho.max()))
    if exp.exact:
        ok = dmax <= 1e-9 * float(np.max(np.abs(p.u[k])))
        return FitRecord(exp.name, None, exp.expected_order, ok, True, 0.0, None, win, dmax,
                         "closed form; fit skipped")
    X = exp.variable(rho)
    order = np.argsort(X)
    ad = np.abs(d[order])
    reliable = bool(np.all(d != 0) and np.all(np.diff(ad) <= 0) and np.all(np.sign(d) == np.sign(d[0])))
    alpha, c = fit_order(X, d, exp.log_power)
    passed = alpha >= exp.expected_order - tol_order
    note = "" if reliable else "|d| not monotone in the window; fit unreliable"
    return FitRecord(exp.name, alpha, exp.expected_order, bool(passed), reliable,
                     exp.log_power, c, win, dmax, note)


# --- distributional test ------------------------------------------------------------

class ProfileEvaluator:
    """Piecewise quintic Hermite interpolant of U(rho) using U, U_rho and U_rho_rho.

    U_rho_rho comes from the equation, -(e^{1-rho}/4) f(U).
    """

    def __init__(self, p: RadialProfile, nl: Nonlinearity):
        k = np.arange(len(p))
        order = np.argsort(p.rho[k])
        rho = p.rho[k][order]
        U, Ur = p.u[k][order], p.u_rho[k][order]
        Urr = -np.exp(_log_forcing(nl, rho, U))
        self.nl = nl
        self.rho_min, self.rho_max = float(rho[0]), float(rho[-1])
        self.rho_nodes = rho
        self._u_nodes = U
        self.U = BPoly.from_derivatives(rho, np.column_stack([U, Ur, Urr]))
        self.Ur = self.U.derivative()

    def rho_at_u(self, value):
        """rho with U(rho) = value, or None outside the profile's range (U increases)."""
        i = np.searchsorted(self._u_nodes, value)
        if i == 0 or i == self._u_nodes.size:
            return None
        lo, hi = self.rho_nodes[i - 1], self.rho_nodes[i]
        return brentq(lambda x: float(self.U(x)) - value, lo, hi, xtol=1e-15)

    def __call__(self, rho):
        return self.U(rho), self.Ur(rho)


def _h(z):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(z > 0, np.exp(-1.0 / np.where(z > 0, z, 1.0)), 0.0)


def _h_prime(z):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        zz = np.where(z > 0, z, 1.0)
        return np.where(z > 0, np.exp(-1.0 / zz) / zz**2, 0.0)


def _phi_cut(s):
    """Smooth step: 1 for s <= 1/2, 0 for s >= 1 (C^infinity)."""
    x = np.clip(2.0 * np.asarray(s, dtype=float) - 1.0, 0.0, 1.0)
    a, b = _h(1.0 - x), _h(x)
    return a / (a + b)


def _phi_cut_d(s):
    s = np.asarray(s, dtype=float)
    x = np.clip(2.0 * s - 1.0, 0.0, 1.0)
    a, b = _h(1.0 - x), _h(x)
    da, db = _h_prime(1.0 - x), _h_prime(x)
    d = -(da * b + a * db) / (a + b) ** 2
    return np.where((s > 0.5) & (s < 1.0), 2.0 * d, 0.0)


@dataclass(frozen=True)
class Bump:
    """Radial test function supported in r <= a: value, phi'(r), Delta phi."""

    kind: str
    a: float

    def eval(self, r):
        r = np.asarray(r, dtype=float)
        a = self.a
        x = np.clip(r / a, 0.0, 1.0)
        inside = r < a
        if self.kind == "poly3":
            y = 1 - x**2
            v, dv, d2v = y**3, -6 * x * y**2, -6 * y**2 + 24 * x**2 * y
        elif self.kind == "poly4":
            y = 1 - x**2
            v, dv, d2v = y**4, -8 * x * y**3, -8 * y**3 + 48 * x**2 * y**2
        elif self.kind == "cos2":
            c, s = np.cos(np.pi * x), np.sin(np.pi * x)
            v = ((1 + c) / 2) ** 2
            dv = -(1 + c) * np.pi * s / 2
            d2v = np.pi**2 * (s**2 - (1 + c) * c) / 2
        elif self.kind == "zero":
            v = dv = d2v = np.zeros_like(x)
        else:
            raise ValueError(f"unknown bump {self.kind!r}")
        v, dv, d2v = (np.where(inside, z, 0.0) for z in (v, dv, d2v))
        dphi = dv / a
        # Delta phi = phi'' + phi'/r; near r = 0 use phi''(0) twice
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = d2v / a**2 + np.where(x > 1e-8, dv / (a * np.maximum(r, 1e-300)), d2v / a**2)
        return v, dphi, lap


BUMPS = ("poly3", "poly4", "cos2")


@dataclass
class DistributionalRecord:
    bump: str
    support: float
    minus_log_eps: list
    J: list  # int Phi_eps (u Delta phi + f(u) phi)
    T_grad: list  # int phi grad u . grad Phi_eps
    T_cross: list  # int u grad Phi_eps . grad phi
    identity_residual: float  # max |J - (T_grad - T_cross)| / norm
    decay_exponent: float
    J_extrapolated: float
    norm: float  # int f(u) |phi|
    relative_J0: float
    passed: bool


def _gauss_panels(lo, hi, n_panels, n=12, breaks=()):
    x, w = np.polynomial.legendre.leggauss(n)
    e = np.linspace(lo, hi, n_panels + 1)
    b = np.asarray(breaks, dtype=float)
    b = b[(b > lo) & (b < hi)]
    if b.size:
        e = np.unique(np.concatenate([e, b]))
        e = e[np.concatenate([[True], np.diff(e) > 1e-12 * (hi - lo)])]
    a, b = e[:-1, None], e[1:, None]
    return (0.5 * (a + b) + 0.5 * (b - a) * x).ravel(), (0.5 * (b - a) * w).ravel()


def _ell_integrals(ev: ProfileEvaluator, bump: Bump, L: float, ell_hi: float, B: float,
                   n_panels: int = 400):
    """J, T_grad, T_cross and int f|phi| over ell = log r in [L, ell_hi] (L = log eps)."""
    # the interpolant is piecewise and f_ext has a kink at s_ext: both are panel edges
    breaks = [0.5 * (1.0 - x) for x in ev.rho_nodes]
    if ev.nl.s_ext is not None:
        rho_ext = ev.rho_at_u(ev.nl.s_ext)
        if rho_ext is not None:
            breaks.append(0.5 * (1.0 - rho_ext))
    ell, w = _gauss_panels(L, ell_hi, n_panels, n=8, breaks=breaks)
    rho = 1.0 - 2.0 * ell
    U, Ur = ev(rho)
    r = np.exp(ell)
    v, dphi, lap = bump.eval(r)
    s = ell / L
    cut = _phi_cut(s)
    dcut_dr_r = _phi_cut_d(s) / L  # r * dPhi_eps/dr
    du_dr_r = -2.0 * Ur  # r * du/dr
    log_fr2 = ev.nl.log_f_ext(U) + 2.0 * ell
    fr2 = np.exp(log_fr2)
    # dx = 2 pi r dr = 2 pi r^2 d ell
    J = 2 * np.pi * np.sum(w * cut * (U * lap * r**2 + fr2 * v))
    Tg = 2 * np.pi * np.sum(w * v * du_dr_r * dcut_dr_r)
    Tc = 2 * np.pi * np.sum(w * U * dcut_dr_r * dphi * r)
    nrm = 2 * np.pi * np.sum(w * fr2 * np.abs(v))
    return J, Tg, Tc, nrm


def distributional_test(p: RadialProfile, nl: Nonlinearity, B: float, bump: Bump,
                        minus_log_eps=None, tol_exp: float = 0.15,
                        rel_tol: float = 1e-6) -> DistributionalRecord:
    """Cut-off integrals J(eps) and their decay in -log eps."""
    ev = ProfileEvaluator(p, nl)
    ell_max_avail = 0.5 * (1.0 - ev.rho_max)  # most negative log r available
    if minus_log_eps is None:
        top = min(500.0, -ell_max_avail * 0.95)
        minus_log_eps = np.geomspace(10.0, top, 12)
    minus_log_eps = np.asarray(minus_log_eps, dtype=float)
    if np.any(-minus_log_eps < ell_max_avail):
        raise VerificationError("eps below the inner profile's range")
    if p.R is not None and bump.a >= p.R:
        raise VerificationError("test function support must lie inside B_R")
    ell_hi = math.log(bump.a)
    if 0.5 * (1.0 - ev.rho_min) < ell_hi:
        raise VerificationError("profile does not cover the test-function support")
    Js, Tg, Tc = [], [], []
    for m in minus_log_eps:
        J, g, c, _ = _ell_integrals(ev, bump, -m, ell_hi, B)
        Js.append(J)
        Tg.append(g)
        Tc.append(c)
    *_, nrm = _ell_integrals(ev, bump, -float(minus_log_eps[-1]), ell_hi, B)
    Js, Tg, Tc = map(np.array, (Js, Tg, Tc))
    if nrm == 0:
        # phi == 0: every integral vanishes identically
        return DistributionalRecord(bump.kind, bump.a, minus_log_eps.tolist(), Js.tolist(),
                                    Tg.tolist(), Tc.tolist(), 0.0, math.nan, 0.0, 0.0, 0.0,
                                    bool(np.all(Js == 0)))
    ident = float(np.max(np.abs(Js - (Tg - Tc))) / nrm)
    slope = -np.polyfit(np.log(minus_log_eps), np.log(np.abs(Tg)), 1)[0]
    # J(0+) from the last decade, linear in (-log eps)^{-1/B}
    top = minus_log_eps >= minus_log_eps.max() / 10
    z = minus_log_eps[top] ** (-1.0 / B)
    J0 = float(np.polyfit(z, Js[top], 1)[1])
    rel = abs(J0) / nrm
    passed = abs(slope - 1.0 / B) <= tol_exp and rel <= rel_tol
    return DistributionalRecord(bump.kind, bump.a, minus_log_eps.tolist(), Js.tolist(),
                                Tg.tolist(), Tc.tolist(), ident, float(slope), J0,
                                float(nrm), float(rel), bool(passed))


# --- bounds --------------------------------------------------------------------

@dataclass
class BoundVerdict:
    name: str
    sigma: float
    passed: bool
    onset_rho: float | None  # the bound holds for all rho >= onset_rho
    constant: float | None
    note: str = ""


def _onset(holds, rho):
    """Smallest rho such that ``holds`` is true at every node with larger rho."""
    order = np.argsort(rho)[::-1]
    h = holds[order]
    if not h[0]:
        return None
    bad = np.flatnonzero(~h)
    return float(rho[order][bad[0] - 1]) if bad.size else float(rho[order][-1])


def bound_checks(p: RadialProfile, nl: Nonlinearity, B: float, sigma_list=(0.1, 0.2)):
    """Growth bounds on u, |grad u| and f(u) near the singularity."""
    inner = p.segment != "outer_shot"
    rho = p.rho[inner]
    U, Ur = p.u[inner], p.u_rho[inner]
    ell2 = rho - 1.0  # -2 log r
    top = rho >= rho.max() / 10
    # an upper bound passes when it holds from some onset on, over at least the
    # top half decade; these bounds are asymptotic and may switch on late
    half = rho.max() / math.sqrt(10.0)

    def upper(name, s, q):
        on = _onset(q <= 0, rho)
        if on is None:
            return BoundVerdict(name, s, False, None, None,
                                "not active at the largest sampled rho")
        C = float(np.exp(q[rho >= on].max()))
        note = "" if on <= rho[top].min() else f"active only from rho = {on:.4g}"
        return BoundVerdict(name, s, bool(on <= half), on, C, note)

    out = []
    for s in sigma_list:
        # u <= (-2 log r)^{1 - 1/B + s}
        out.append(upper("u_upper", s,
                         np.log(np.maximum(U, 1e-300)) - (1 - 1 / B + s) * np.log(ell2)))
        # |grad u| <= 1 / (r (-2 log r)^{1/B - s});  r |u'| = 2 |U_rho|
        out.append(upper("grad_upper", s, np.log(2 * np.abs(Ur)) + (1 / B - s) * np.log(ell2)))
        # f(u) >= C / (r^2 (1 - 2 log r)^{1 + 1/B + s}) with C > 0
        q3 = nl.log_f_ext(U) + (1.0 - rho) + (1 + 1 / B + s) * np.log(rho)
        slope = float(np.polyfit(np.log(rho[top]), q3[top], 1)[0])
        C = float(np.exp(q3[top].min()))
        out.append(BoundVerdict("f_lower", s, slope >= -1e-9, float(rho[top].min()), C,
                                f"log-slope {slope:.3g} on the top decade"))
    return out


@dataclass
class BandResult:
    rho_lo: float
    rho_hi: float
    lo: float
    hi: float
    ratio: float
    passed: bool


def fF_band(t: TransformF, m: ModelProblem, rho_lo=50.0, rho_hi=5000.0, n=60,
            factor=10.0) -> BandResult:
    """rho^{1/B} f(phi)F(phi) over [rho_lo, rho_hi] stays within ``factor``."""
    from .model import phi as phi_of

    rho = np.geomspace(rho_lo, rho_hi, n)
    ph = phi_of(m, t, rho)
    val = rho ** (1.0 / m.B) * t.fF(ph)
    lo, hi = float(val.min()), float(val.max())
    return BandResult(rho_lo, rho_hi, lo, hi, hi / lo, hi / lo <= factor)


def slope_ratio(p: RadialProfile, nl: Nonlinearity, m: ModelProblem):
    """(u'/f(u)) / (v'/g(v)) at matching rho along the inner nodes."""
    k = p.segment == "inner_constructed"
    rho = p.rho[k]
    lr = (np.log(p.u_rho[k]) - nl.log_f_ext(p.u[k])
          - np.log(m.psi_prime(rho)) + m.log_g(m.psi(rho)))
    return rho, np.exp(lr)


def outer_inequality(p: RadialProfile, nl: Nonlinearity):
    """min over outer samples of (-r w') / (f(w) r^2 / 2); >= 1 expected."""
    k = p.segment == "outer_shot"
    r = p.r[k]
    w = p.u[k]
    val = -r * p.u_prime[k] / (0.5 * np.exp(nl.log_f_ext(w)) * r**2)
    return float(np.min(val))


def energy_trend(p: RadialProfile, B: float) -> dict:
    """Partial Dirichlet integrals int_{r < r_k} |grad u|^2 (informational)."""
    k = p.segment == "inner_constructed"
    rho = p.rho[k][::-1]
    f = 2.0 * p.u_rho[k][::-1] ** 2  # int |u'|^2 r dr = 2 int U_rho^2 drho
    seg = 0.5 * (f[1:] + f[:-1]) * np.diff(rho)
    tail = np.cumsum(seg[::-1])[::-1]
    slope = float(np.polyfit(np.log(rho[:-1][-20:]), np.log(tail[-20:] + 1e-300), 1)[0])
    return {"partial_energy_top": float(tail[0]), "decay_slope": slope,
            "expected_finite": bool(B < 2)}


# --- report ------------------------------------------------------------------------

@dataclass
class VerificationReport:
    residual_max_rel: float
    residual_by_segment: dict
    expansion_fits: list
    distributional: list
    bounds: list
    fF_band: dict | None
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "residual_max_rel": self.residual_max_rel,
            "residual_by_segment": self.residual_by_segment,
            "expansion_fits": [asdict(x) for x in self.expansion_fits],
            "distributional": [asdict(x) for x in self.distributional],
            "bounds": [asdict(x) for x in self.bounds],
            "fF_band": self.fF_band,
            "notes": list(self.notes),
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


CSV_COLUMNS = ("r", "rho", "u", "u_prime", "phi", "eta", "residual", "segment")


def _fmt_log(log_abs: float, sign: float = 1.0) -> str:
    """Decimal text of sign * e^{log_abs} when the float itself under/overflows."""
    e10 = float(log_abs) / math.log(10.0)
    k = math.floor(e10)
    return f"{'-' if sign < 0 else ''}{10.0 ** (e10 - k)!r}e{k}"


def profile_csv(p: RadialProfile, residual: np.ndarray | None = None) -> str:
    """RFC-4180 text (CRLF rows) with the fixed column set; NaN is an empty cell.

    r and u' leave the double range deep inside the inner segment; there they
    are written from their logarithms.
    """
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\r\n")
    wr.writerow(CSV_COLUMNS)
    res = np.full(len(p), np.nan) if residual is None else residual
    r, up, lr = p.r, p.u_prime, p.log_r
    fmt = lambda v: "" if not np.isfinite(v) else repr(float(v))
    for i in range(len(p)):
        rs = fmt(r[i]) if r[i] > 0 else _fmt_log(lr[i])
        if np.isfinite(up[i]):
            us = fmt(up[i])
        else:
            us = _fmt_log(math.log(2 * abs(p.u_rho[i])) - lr[i], -np.sign(p.u_rho[i]))
        wr.writerow([rs, fmt(p.rho[i]), fmt(p.u[i]), us, fmt(p.phi[i]), fmt(p.eta[i]),
                     fmt(res[i]), p.segment[i]])
    return buf.getvalue()


def verify_profile(p: RadialProfile, nl: Nonlinearity, t: TransformF, m: ModelProblem,
                   sigma_list=(0.1, 0.2), minus_log_eps=None, bumps=BUMPS,
                   bump_fraction: float = 0.5, expansion_window=(50.0, 2000.0),
                   rel_tol: float = 1e-6) -> VerificationReport:
    """All checks on a merged profile, collected into one report."""
    B = m.B
    notes = []
    res = ode_residual(p, nl)
    fits = []
    exp = expansion_for(nl)
    if exp is not None:
        fits.append(expansion_compare(p, exp, expansion_window))
        if nl.flags and not fits[-1].passed:
            notes.append("expansion fit outside its stated range: " + "; ".join(nl.flags))
    dist = []
    if p.R is not None:
        for kind in bumps:
            dist.append(distributional_test(p, nl, B, Bump(kind, bump_fraction * p.R),
                                            minus_log_eps, rel_tol=rel_tol))
        if nl.family != "model":
            notes.append("J(0+) is extrapolated with a pure power law in -log eps; "
                         "logarithmic corrections limit it away from the model")
    bounds = bound_checks(p, nl, B, sigma_list)
    band = asdict(fF_band(t, m))
    rho, lr = slope_ratio(p, nl, m)
    extra = {"slope_ratio_innermost": float(lr[0]), "slope_ratio_at_rho0": float(lr[-1]),
             "energy": energy_trend(p, B)}
    if p.R is not None:
        extra["outer_inequality_min"] = outer_inequality(p, nl)
    return VerificationReport(res.max_rel, res.per_segment, fits, dist, bounds, band,
                              notes, extra)
