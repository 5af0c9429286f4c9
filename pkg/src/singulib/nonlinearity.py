"""Nonlinearities f = e^{a(s)} and the transform F(s) = int_s^inf dt / f(t).

F and its companions are computed in scaled form.  With x = a(t) - a(s) the
integrals become Laplace integrals over x in [0, inf):

    H(s)  = e^{a(s)} F(s)                  = int a_1(t(x)) e^{-x} dx
    R1(s) = e^{a} int_s^inf a_1'(t) e^{-a}   = int a_2(t(x)) e^{-x} dx
    R2(s) = e^{a} int_s^inf a_2'(t) e^{-a}   = int a_3(t(x)) e^{-x} dx

so that f F = H, 1 - f'F = -a' R1 and f f'' F / f' - 1 = (a''/a') R1 + a' R2.
None of these involve subtracting nearly equal numbers, and nothing
overflows: e^{-a} only ever appears as log F = -a + log H.

The x-range is truncated at ``x_max`` (e^{-48} ~ 1e-21) and the rest is
closed with the asymptotic tail series at the point t(x_max).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import a_terms, tail_series
from .exprdsl import (Add, Const, Exp, Expression, Log, Mul, Pow, Sub, Var,
                      jet_array, parse, to_text)

log = logging.getLogger(__name__)

FAMILIES = ("power_exp", "sum_exp", "log_exp", "iter_exp", "model", "custom")
_FAMILY_KEYS = {
    "power_exp": {"q", "r"},
    "sum_exp": {"q", "r"},
    "log_exp": {"q", "r"},
    "iter_exp": {"q"},
    "model": {"B"},
    "custom": {"a"},
}
B_ONE_TOL = 1e-8


def _family_schema(family):
    num = {"type": "number"}
    props = {"family": {"const": family}, "s0": {"type": "number", "exclusiveMinimum": 0}}
    for k in sorted(_FAMILY_KEYS[family]):
        props[k] = {"type": "string", "minLength": 1} if k == "a" else num
    return {"properties": props, "required": sorted(_FAMILY_KEYS[family]),
            "additionalProperties": False}


# JSON schema of a nonlinearity spec; make() repeats the range checks
SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {"family": {"enum": list(FAMILIES)}},
    "allOf": [{"if": {"properties": {"family": {"const": f}}, "required": ["family"]},
               "then": _family_schema(f)} for f in FAMILIES],
}


class NonlinearityError(ValueError):
    pass


class InversionError(ValueError):
    pass


# --- families --------------------------------------------------------------

def _c(v):
    return Const(float(v))


def _spow(p):
    return Var() if p == 1 else Pow(Var(), float(p))


def model_exponent(B: float) -> Expression:
    """a(s) of the model nonlinearity for growth exponent B."""
    if abs(B - 1.0) <= B_ONE_TOL:
        # e^s - 2 s + log 4
        root = Add(Sub(Exp(Var()), Mul(_c(2), Var())), _c(math.log(4.0)))
        return Expression(root)
    Bp = B / (B - 1.0)
    root = Add(Add(_spow(Bp), Mul(_c(1 - 2 * Bp), Log(Var()))),
               _c(math.log(4.0 / (B * Bp))))
    return Expression(root)


def _family_exponent(family: str, p: dict) -> Expression:
    if family == "power_exp":
        q, r = p["q"], p["r"]
        root = _spow(q) if r == 0 else Add(_spow(q), Mul(_c(r), Log(Var())))
        return Expression(root)
    if family == "sum_exp":
        return Expression(Add(_spow(p["q"]), _spow(p["r"])))
    if family == "log_exp":
        q, r = p["q"], p["r"]
        logs = Log(Var()) if r == 1 else Pow(Log(Var()), float(r))
        return Expression(Mul(_spow(q), logs))
    if family == "iter_exp":
        return Expression(Exp(_spow(p["q"])))
    if family == "model":
        return model_exponent(p["B"])
    if family == "custom":
        return parse(p["a"])
    raise NonlinearityError(f"unknown family {family!r}")


def _default_s0(family: str, p: dict) -> float:
    # Smallest comfortable point where a' > 0 and a'' > 0 (so fF decreases).
    if family == "power_exp":
        q, r = p["q"], p["r"]
        need = max(-r / q, r / (q * (q - 1.0)), 0.0)
        return max(1.0, 1.25 * need ** (1.0 / q))
    if family == "sum_exp":
        q, r = p["q"], p["r"]
        need = max(r * (1.0 - r) / (q * (q - 1.0)), 0.0)
        return max(1.0, 1.25 * need ** (1.0 / (q - r)))
    if family == "log_exp":
        q, r = p["q"], p["r"]
        return 1.5 * max(1.0, math.exp(-r / q), math.exp(0.5))
    if family == "iter_exp":
        return 0.5
    if family == "model":
        B = p["B"]
        if abs(B - 1.0) <= B_ONE_TOL:
            return 1.0
        Bp = B / (B - 1.0)
        return 1.1 * ((2.0 * Bp - 1.0) / Bp) ** (1.0 / Bp)
    return 1.0


def _known_B(family: str, p: dict) -> float | None:
    if family in ("power_exp", "sum_exp", "log_exp"):
        return p["q"] / (p["q"] - 1.0)
    if family == "iter_exp":
        return 1.0
    if family == "model":
        return 1.0 if abs(p["B"] - 1.0) <= B_ONE_TOL else p["B"]
    return None


@dataclass(frozen=True)
class Nonlinearity:
    """f(s) = exp(a(s)) for s > s0, extended below ``s_ext`` for shooting.

    The extension keeps a linear in s: a_ext(s) = a(s_e) + a'(s_e)(s - s_e),
    which is C^1, positive and increasing on all of [0, s_e].
    """

    family: str
    params: tuple
    s0: float
    a: Expression
    known_B: float | None = None
    flags: tuple = ()
    f1_onset: float | None = None
    s_ext: float | None = None
    _ext: tuple = field(default=(), compare=False, repr=False)

    @property
    def spec(self) -> dict:
        out = {"family": self.family, **dict(self.params)}
        out["s0"] = self.s0
        return out

    def jet(self, s, order: int = 2, strict: bool = True) -> np.ndarray:
        return jet_array(self.a, s, order, strict)

    def log_f(self, s):
        return jet_array(self.a, s, 0)[0]

    def f(self, s):
        return np.exp(self.log_f(s))

    def log_f_ext(self, s):
        s = np.asarray(s, dtype=float)
        se, a_e, ap_e = self._ext
        hi = np.maximum(s, se)
        out = jet_array(self.a, hi, 0)[0]
        return np.where(s >= se, out, a_e + ap_e * (s - se))

    def f_ext(self, s):
        return np.exp(self.log_f_ext(s))

    def extension_record(self) -> dict:
        se, a_e, ap_e = self._ext
        return {"kind": "log-linear", "s_ext": se, "a_at_s_ext": a_e,
                "a_prime_at_s_ext": ap_e}


def _check_f1(a: Expression, s0: float):
    """Spot-check a' > 0 on a log-spaced grid; return where it first holds."""
    grid = s0 * np.geomspace(1.0 + 1e-6, 1e3, 60)
    ok = []
    for s in grid:
        try:
            d = jet_array(a, s, 1)
        except Exception:
            break
        ok.append(bool(d[1] > 0))
    if not ok:
        raise NonlinearityError(f"a(s) cannot be evaluated above s0={s0}")
    bad = [i for i, v in enumerate(ok) if not v]
    if not bad:
        return float(grid[0]), True
    if bad[-1] + 1 >= len(ok):
        return None, False
    return float(grid[bad[-1] + 1]), False


def make(spec: dict) -> Nonlinearity:
    """Build a :class:`Nonlinearity` from a JSON-style spec dict."""
    if not isinstance(spec, dict) or "family" not in spec:
        raise NonlinearityError("spec must be an object with a 'family' key")
    family = spec["family"]
    if family not in FAMILIES:
        raise NonlinearityError(f"unknown family {family!r}; expected one of {FAMILIES}")
    allowed = _FAMILY_KEYS[family] | {"family", "s0"}
    unknown = sorted(set(spec) - allowed)
    if unknown:
        raise NonlinearityError(f"unknown keys for {family}: {unknown}")
    missing = sorted(_FAMILY_KEYS[family] - set(spec))
    if missing:
        raise NonlinearityError(f"missing keys for {family}: {missing}")
    p = {}
    for k in sorted(_FAMILY_KEYS[family]):
        if k == "a":
            if not isinstance(spec[k], str):
                raise NonlinearityError("'a' must be expression text")
            p[k] = spec[k]
        else:
            try:
                p[k] = float(spec[k])
            except (TypeError, ValueError):
                raise NonlinearityError(f"parameter {k!r} must be a number") from None
    flags = []
    if family in ("power_exp", "sum_exp", "log_exp") and not p["q"] > 1:
        raise NonlinearityError(f"{family} requires q > 1")
    if family == "sum_exp":
        if not 0 < p["r"] < p["q"]:
            raise NonlinearityError("sum_exp requires 0 < r < q")
        if p["r"] >= p["q"] / 2:
            flags.append("outside sum_exp decay hypothesis (r >= q/2)")
    if family == "iter_exp" and not p["q"] >= 1:
        raise NonlinearityError("iter_exp requires q >= 1")
    if family == "model" and not p["B"] >= 1:
        raise NonlinearityError("model requires B >= 1")
    a = _family_exponent(family, p)
    s0 = float(spec["s0"]) if "s0" in spec else _default_s0(family, p)
    if not s0 > 0 and family != "iter_exp":
        raise NonlinearityError("s0 must be positive")
    onset, ok = _check_f1(a, s0)
    if onset is None:
        raise NonlinearityError("f' > 0 fails at every sampled point above s0")
    if not ok:
        flags.append(f"f' <= 0 somewhere above s0; f' > 0 holds from s = {onset:.6g}")
    # extend from where f' > 0 starts, so the extension stays increasing
    s_ext = s0 if ok else onset
    d = jet_array(a, s_ext, 1)
    ext = (s_ext, float(d[0]), float(d[1]))
    if ext[2] <= 0:
        raise NonlinearityError("a'(s) must be positive where the extension starts")
    params = tuple(sorted(p.items()))
    return Nonlinearity(family, params, s0, a, _known_B(family, p), tuple(flags),
                        onset, s_ext, ext)


def describe(nl: Nonlinearity) -> dict:
    return {"spec": nl.spec, "a": to_text(nl.a), "known_B": nl.known_B,
            "flags": list(nl.flags), "f1_onset": nl.f1_onset,
            "extension": nl.extension_record()}


# --- monotone root finding --------------------------------------------------

def solve_increasing(fun, lo, hi, x0, xtol=4e-16, maxiter=200):
    """Vectorised safeguarded Newton for increasing h(x) = 0.

    ``fun(x)`` returns (h, dh).  ``lo`` must satisfy h(lo) <= 0; ``hi`` may be
    +inf.  Non-finite h counts as positive (the root lies to the left), which
    lets overflow act as an upper bracket.  Newton steps leaving the bracket
    are replaced by bisection, or by doubling while no upper bound is known;
    so are steps that fail to halve relative to the previous one.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(np.broadcast_to(hi, lo.shape), dtype=float)
    x = np.array(np.broadcast_to(x0, lo.shape), dtype=float)
    done = np.zeros(lo.shape, dtype=bool)
    dx_old = np.full(lo.shape, np.inf)
    for _ in range(maxiter):
        h, dh = fun(x)
        bad = ~np.isfinite(h)
        pos = bad | (h > 0)
        hi = np.where(pos & ~done, np.minimum(hi, x), hi)
        lo = np.where(~pos & ~done, np.maximum(lo, x), lo)
        with np.errstate(all="ignore"):
            step = np.where(bad | (dh <= 0) | ~np.isfinite(dh), np.nan, h / dh)
            xn = x - step
        inside = (np.isfinite(xn) & (xn >= lo) & (xn <= hi)
                  & ~(np.abs(step) > 0.5 * dx_old))
        fallback = np.where(np.isfinite(hi), 0.5 * (lo + hi),
                            x + 2.0 * np.maximum(np.abs(x), 1.0))
        xn = np.where(inside, xn, fallback)
        xn = np.where(h == 0, x, xn)
        dx_old = np.abs(xn - x)
        scale = np.maximum(np.abs(x), 1.0)
        tight = np.maximum(xtol * scale, 8.0 * np.spacing(scale))
        newly = (np.abs(xn - x) <= tight) | (hi - lo <= tight) | (h == 0)
        x = np.where(done, x, xn)
        done |= newly
        if np.all(done):
            return x
    raise InversionError("root finder did not converge")


# --- transform F -----------------------------------------------------------

_X_EDGES = np.array([0.0, 0.02, 0.08, 0.25, 0.6, 1.2, 2.2, 3.7, 5.8, 8.6,
                     12.3, 17.0, 23.0, 30.0, 38.5, 48.0])


def _panel_rule(edges, n):
    g, w = np.polynomial.legendre.leggauss(n)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (b - a) * g + 0.5 * (a + b)
    wx = 0.5 * (b - a) * w
    return x.ravel(), wx.ravel()


class TransformF:
    """F(s) = int_s^inf e^{-a} with companions, evaluated in scaled form."""

    def __init__(self, nl: Nonlinearity, n_gauss: int = 10, rel_tol: float = 1e-12,
                 abs_tol: float = 0.0):
        self.nl = nl
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.n_gauss = n_gauss
        self.x_max = float(_X_EDGES[-1])
        self._x, self._w = _panel_rule(_X_EDGES, n_gauss)
        self._wx = self._w * np.exp(-self._x)

    # inner inversion t(x) with a(t) - a(s) = x
    def _tau(self, s, a_s, ap_s, x):
        a = self.nl.a
        target = np.log1p(x)

        def fun(t):
            d = jet_array(a, t, 1, strict=False)
            D = d[0] - a_s
            with np.errstate(all="ignore"):
                return np.log1p(D) - target, d[1] / (1.0 + D)

        lo = np.broadcast_to(s, x.shape)
        x0 = s + x / ap_s
        return solve_increasing(fun, lo, np.inf, x0)

    def scaled(self, s, which=("H", "R1", "R2")):
        """Scaled integrals at points ``s`` (array); dict of arrays."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s <= self.nl.s0):
            raise ValueError(f"F is only defined above s0={self.nl.s0}")
        d = jet_array(self.nl.a, s, 3)
        if np.any(d[1] <= 0):
            raise ValueError("a' must be positive at evaluation points")
        a_s, ap_s = d[0][:, None], d[1][:, None]
        xs = np.append(self._x, self.x_max)
        tau = self._tau(s[:, None], a_s, ap_s, np.broadcast_to(xs, (s.size, xs.size)))
        order = 3 if "R2" in which else (2 if "R1" in which else 1)
        dt = jet_array(self.nl.a, tau[:, :-1], order)
        an = _a_low(dt, order)
        out = {"s": s, "jet": d}
        dx = jet_array(self.nl.a, tau[:, -1], 5)
        tail_terms = a_terms(dx)
        tail_value, _, ok = tail_series(dx)
        ex = math.exp(-self.x_max)
        if "H" in which:
            out["H"] = an[0] @ self._wx if an[0].ndim == 1 else an[0] @ self._wx
            out["H"] = out["H"] + ex * np.where(ok, tail_value, tail_terms[0])
        if "R1" in which:
            out["R1"] = an[1] @ self._wx + ex * np.where(ok, tail_terms[1:4].sum(0), tail_terms[1])
        if "R2" in which:
            out["R2"] = an[2] @ self._wx + ex * np.where(ok, tail_terms[2:4].sum(0), tail_terms[2])
        return out

    # public scalar/array API
    def log_F(self, s):
        r = self.scaled(s, ("H",))
        out = -r["jet"][0] + np.log(r["H"])
        return _unwrap(out, s)

    def F_of(self, s):
        return _unwrap(np.exp(np.atleast_1d(self.log_F(s))), s)

    def fF(self, s):
        return _unwrap(self.scaled(s, ("H",))["H"], s)

    def ratios(self, s) -> dict:
        """log F, fF, f'F, 1 - f'F and f f''F/f' - 1 at ``s`` (arrays)."""
        r = self.scaled(s)
        d = r["jet"]
        H, R1, R2 = r["H"], r["R1"], r["R2"]
        return {
            "s": r["s"],
            "logF": -d[0] + np.log(H),
            "fF": H,
            "fpF": d[1] * H,
            "one_minus_fpF": -d[1] * R1,
            "ffppF_over_fp_minus_one": (d[2] / d[1]) * R1 + d[1] * R2,
            "jet": d,
        }

    def log_F_inv(self, L):
        """Solve log F(s) = L for s (array-valued L)."""
        L = np.atleast_1d(np.asarray(L, dtype=float))
        nl = self.nl
        s_lo = nl.s0 * (1 + 1e-9) + 1e-12
        L_lo = float(self.log_F(s_lo))
        if np.any(L >= L_lo):
            raise InversionError(
                f"w out of range: need log w < log F(s0+) = {L_lo:.6g}")

        def fun(s):
            s = np.asarray(s, dtype=float)
            h = np.full(s.shape, np.inf)
            dh = np.ones(s.shape)
            ok = np.isfinite(s) & (s > nl.s0)
            if np.any(ok):
                try:
                    r = self.scaled(s[ok], ("H",))
                    h[ok] = L[ok] - (-r["jet"][0] + np.log(r["H"]))
                    dh[ok] = 1.0 / r["H"]
                except Exception:
                    # overflow beyond the root: treat as upper bound
                    for i in np.flatnonzero(ok):
                        try:
                            r = self.scaled(s[i:i + 1], ("H",))
                            h[i] = L[i] - (-r["jet"][0][0] + np.log(r["H"][0]))
                            dh[i] = 1.0 / r["H"][0]
                        except Exception:
                            h[i] = np.inf
            return h, dh

        x0 = self._guess(L, s_lo)
        return solve_increasing(fun, np.full(L.shape, s_lo), np.inf, x0, xtol=1e-15)

    def _guess(self, L, s_lo):
        # leading order: a(s) + log a'(s) = -L, solved on a alone
        a = self.nl.a

        def fun(s):
            d = jet_array(a, np.maximum(s, s_lo), 2, strict=False)
            with np.errstate(all="ignore"):
                h = d[0] + np.log(np.abs(d[1])) + L
                dh = d[1] + d[2] / d[1]
            return h, dh

        try:
            g = solve_increasing(fun, np.full(L.shape, s_lo), np.inf,
                                 np.full(L.shape, s_lo + 1.0), xtol=1e-10)
        except InversionError:
            return np.full(L.shape, s_lo + 1.0)
        return np.maximum(g, s_lo)

    def F_inv(self, w):
        w = np.asarray(w, dtype=float)
        if np.any(w <= 0):
            raise InversionError("w must be positive")
        return _unwrap(self.log_F_inv(np.log(w)), w)


def _a_low(d, order):
    d1 = d[1]
    out = [1.0 / d1]
    # huge d1 (iter_exp) underflows these to 0, which is the right limit
    with np.errstate(over="ignore", invalid="ignore"):
        if order >= 2:
            out.append(-d[2] / d1**3)
        if order >= 3:
            out.append((3.0 * d[2]**2 - d1 * d[3]) / d1**5)
    return out


def _unwrap(out, like):
    out = np.asarray(out)
    if np.ndim(like) == 0:
        return float(out.ravel()[0])
    return out.reshape(np.shape(like))


def F_of(t: TransformF, s):
    return t.F_of(s)


def F_inv(t: TransformF, w):
    return t.F_inv(w)
