"""Correction of the approximate solution in Emden-Fowler variables.

With rho = 1 - 2 log r the radial equation u'' + u'/r + f(u) = 0 becomes
U'' + (e^{1-rho}/4) f(U) = 0.  Writing U = phi + eta with
phi(rho) = F^{-1}[(B/4) rho e^{1-rho}] gives

    eta'' + (1/(B rho) + 3/(16 rho^2)) eta = -(I + L eta + N[eta]),

whose homogeneous part has the solutions rho^{1/4} cos / sin(k sqrt(rho)),
k = 2/sqrt(B).  Variation of parameters from infinity gives the fixed point
form eta = T[eta] with

    T[eta](rho) = sqrt(B) int_rho^inf (rho tau)^{1/4}
                  sin(k (sqrt(rho) - sqrt(tau))) (I + L eta + N[eta]) dtau.

In t = sqrt(tau) the kernel has a fixed period, so T is computed by
panel-wise spectral cumulative quadrature on a grid uniform in sqrt(rho).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from .classify import hypothesis_check, signed_remainders
from .exprdsl import jet_array
from .model import ModelProblem
from .nonlinearity import TransformF

NOISE_REL = 1e-11  # signed remainders below this (relative) are round-off
EXT_FACTOR = 16.0  # I-only extension of the quadrature beyond rho_max
TAYLOR_SWITCH = 1e-3


class ConstructionError(RuntimeError):
    pass


class HypothesisViolation(ConstructionError):
    pass


def ef_map(r):
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r > 1)):
        raise ValueError("ef_map needs 0 < r <= 1")
    out = 1.0 - 2.0 * np.log(r)
    return float(out) if out.ndim == 0 else out


def ef_unmap(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 1):
        raise ValueError("ef_unmap needs rho >= 1")
    out = np.exp(0.5 * (1.0 - rho))
    return float(out) if out.ndim == 0 else out


# --- panel quadrature ------------------------------------------------------

@dataclass(frozen=True)
class _PanelRule:
    n: int
    x: np.ndarray  # Gauss-Legendre nodes on [-1, 1]
    w: np.ndarray
    Q: np.ndarray  # Q[i] . g = int_{x_i}^{1} p(x) dx for the interpolant p of g
    E1: np.ndarray  # value at x = 1
    D1: np.ndarray  # derivative at x = 1
    D: np.ndarray  # derivative at the nodes


def _panel_rule(n: int) -> _PanelRule:
    x, w = npleg.leggauss(n)
    Vinv = np.linalg.inv(npleg.legvander(x, n - 1))
    eye = np.eye(n)
    ints = [npleg.legint(eye[m]) for m in range(n)]
    A = np.array([[npleg.legval(1.0, c) - npleg.legval(xi, c) for c in ints] for xi in x])
    E1 = npleg.legvander(np.array([1.0]), n - 1)[0]
    D1 = np.array([npleg.legval(1.0, npleg.legder(eye[m])) for m in range(n)])
    Dn = np.array([[npleg.legval(xi, npleg.legder(eye[m])) for m in range(n)] for xi in x])
    return _PanelRule(n, x, w, A @ Vinv, E1 @ Vinv, D1 @ Vinv, Dn @ Vinv)


def _edges(a: float, b: float, h: float) -> np.ndarray:
    n = max(1, math.ceil((b - a) / h - 1e-12))
    return np.linspace(a, b, n + 1)


@dataclass(frozen=True)
class EFGrid:
    """Nodes uniform in sqrt(rho): Gauss panels of width <= pi sqrt(B)/4."""

    rho0: float
    rho_max: float
    B: float
    n_gauss: int
    edges: np.ndarray  # panel edges in t = sqrt(rho), up to sqrt(EXT_FACTOR rho_max)
    n_active_panels: int

    @classmethod
    def build(cls, rho0: float, rho_max: float, B: float, n_gauss: int = 8,
              ext_factor: float = EXT_FACTOR):
        if not 1 < rho0 < rho_max:
            raise ValueError("need 1 < rho0 < rho_max")
        h = math.pi * math.sqrt(B) / 4.0
        inner = _edges(math.sqrt(rho0), math.sqrt(rho_max), h)
        outer = _edges(math.sqrt(rho_max), math.sqrt(ext_factor * rho_max), h)
        edges = np.concatenate([inner, outer[1:]])
        return cls(float(rho0), float(rho_max), float(B), n_gauss, edges, len(inner) - 1)

    @property
    def rule(self) -> _PanelRule:
        return _panel_rule(self.n_gauss)

    @property
    def t_all(self) -> np.ndarray:
        x = _panel_rule(self.n_gauss).x
        lo, hi = self.edges[:-1, None], self.edges[1:, None]
        return (0.5 * (lo + hi) + 0.5 * (hi - lo) * x[None, :]).ravel()

    @property
    def n_active(self) -> int:
        return self.n_active_panels * self.n_gauss

    @property
    def nodes(self) -> np.ndarray:
        """Active rho nodes in (rho0, rho_max)."""
        return self.t_all[: self.n_active] ** 2

    @property
    def max_spacing_t(self) -> float:
        t = self.t_all[: self.n_active]
        return float(np.max(np.diff(np.concatenate([[self.edges[0]], t,
                                                    [self.edges[self.n_active_panels]]]))))


# --- operators --------------------------------------------------------------

def _pointwise(t: TransformF, m: ModelProblem, rho) -> dict:
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    sr = signed_remainders(t, m, rho)
    r = sr["ratios"]
    z = m.at_psi(rho)
    d1 = np.where(np.abs(sr["d1"]) <= NOISE_REL * np.abs(z["B1_inv"]), 0.0, sr["d1"])
    d2 = np.where(np.abs(sr["d2"]) <= NOISE_REL * np.abs(z["B2_inv"]), 0.0, sr["d2"])
    fF = r["fF"]
    lam = z["minus_logG"]
    I = fF * (1.0 - 1.0 / rho) ** 2 * d1 / (-lam)
    L = -3.0 / (16.0 * rho**2) - r["one_minus_fpF"] / (m.B * rho)
    return {"rho": rho, "phi": sr["phi"], "fF": fF, "jet": r["jet"], "I": I, "L": L,
            "eps1": np.abs(d1), "eps2": np.abs(d2)}


def _unwrap(x, like):
    return float(x[0]) if np.ndim(like) == 0 else x


def op_I(t: TransformF, m: ModelProblem, rho):
    """phi'' + (e^{1-rho}/4) f(phi), via the signed B1 remainder."""
    return _unwrap(_pointwise(t, m, rho)["I"], rho)


def op_L(t: TransformF, m: ModelProblem, rho):
    """-3/(16 rho^2) + (e^{1-rho}/4)(f'(phi)F(phi) - 1)/F(phi)."""
    return _unwrap(_pointwise(t, m, rho)["L"], rho)


def _N(a_expr, phi, jet, fF, rho, B, eta):
    """(e^{1-rho}/4)(f(phi+eta) - f(phi) - f'(phi) eta), in units of f(phi)."""
    eta = np.asarray(eta, dtype=float)
    d1, d2, d3 = jet[1], jet[2], jet[3]
    small = np.abs(d1 * eta) < TAYLOR_SWITCH
    with np.errstate(all="ignore"):
        # Taylor form of expm1(da) - a' eta for small steps
        da = d1 * eta + d2 * eta**2 / 2 + d3 * eta**3 / 6
        br_small = (d2 * eta**2 / 2 + d3 * eta**3 / 6 + da**2 / 2 + da**3 / 6
                    + da**4 / 24)
    br = br_small
    big = ~small
    if np.any(big):
        x = phi[big] + eta[big]
        if np.any(x <= 0) or np.any(~np.isfinite(x)):
            raise ConstructionError("phi + eta left the domain of f")
        a_new = jet_array(a_expr, x, 0, strict=False)[0]
        a_old = jet_array(a_expr, phi[big], 0)[0]
        dab = a_new - a_old
        if np.any(~np.isfinite(dab)) or np.any(dab > 700):
            raise ConstructionError("f(phi + eta) overflow")
        br = br_small.copy()
        br[big] = np.expm1(dab) - d1[big] * eta[big]
    return fF / (B * rho) * br


def op_N(t: TransformF, m: ModelProblem, eta, rho):
    p = _pointwise(t, m, rho)
    out = _N(t.nl.a, p["phi"], p["jet"], p["fF"], p["rho"], m.B,
             np.broadcast_to(np.asarray(eta, dtype=float), p["rho"].shape).copy())
    return _unwrap(out, rho)


# --- the integral operator ---------------------------------------------------

class CorrectionProblem:
    """All eta-independent data on an EFGrid (active nodes plus extension)."""

    def __init__(self, t: TransformF, m: ModelProblem, grid: EFGrid):
        self.t, self.m, self.grid = t, m, grid
        self.rule = grid.rule
        self.t_all = grid.t_all
        p = _pointwise(t, m, self.t_all**2)
        self.rho_all = p["rho"]
        self.p = p
        na = grid.n_active
        self.na = na
        eps = p["eps1"] + p["eps2"]
        self.env_all = np.maximum.accumulate(eps[::-1])[::-1]
        self.weight = p["fF"][:na] * self.env_all[:na]
        self.k = 2.0 / math.sqrt(m.B)

    @property
    def rho(self):
        return self.rho_all[: self.na]

    @property
    def phi(self):
        return self.p["phi"][: self.na]

    def source(self, eta, with_N: bool = True):
        p, na = self.p, self.na
        S = p["I"].copy()
        S[:na] += p["L"][:na] * eta
        if with_N:
            S[:na] += _N(self.t.nl.a, p["phi"][:na], p["jet"][:, :na], p["fF"][:na],
                         p["rho"][:na], self.m.B, eta)
        return S

    def norm(self, eta) -> float:
        eta = np.asarray(eta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(eta == 0, 0.0, np.abs(eta) / self.weight)
        return float(np.max(q)) if q.size else 0.0


@dataclass
class TResult:
    T: np.ndarray
    T_prime: np.ndarray
    tail: float  # |int over (sqrt(rho_ext), inf)| estimate, both quadratures


def apply_T(prob: CorrectionProblem, eta, with_N: bool = True) -> TResult:
    """T[eta] and its rho-derivative at the active nodes."""
    rule, k = prob.rule, prob.k
    tt = prob.t_all
    S = prob.source(np.asarray(eta, dtype=float), with_N)
    w = 2.0 * tt**1.5 * S
    gc = np.cos(k * tt) * w
    gs = np.sin(k * tt) * w
    n = rule.n
    P = len(prob.grid.edges) - 1
    half = 0.5 * np.diff(prob.grid.edges)[:, None]
    gc_p, gs_p = gc.reshape(P, n), gs.reshape(P, n)
    tot_c = half[:, 0] * (gc_p @ rule.w)
    tot_s = half[:, 0] * (gs_p @ rule.w)
    # w and w' at the far edge for the integration-by-parts tail
    T_end = prob.grid.edges[-1]
    w_last = w.reshape(P, n)[-1]
    wT = float(rule.E1 @ w_last)
    wpT = float(rule.D1 @ w_last) / half[-1, 0]
    tail_c = -math.sin(k * T_end) * wT / k - math.cos(k * T_end) * wpT / k**2
    tail_s = math.cos(k * T_end) * wT / k - math.sin(k * T_end) * wpT / k**2
    right_c = np.concatenate([np.cumsum(tot_c[::-1])[::-1][1:], [0.0]]) + tail_c
    right_s = np.concatenate([np.cumsum(tot_s[::-1])[::-1][1:], [0.0]]) + tail_s
    Cc = (half * (gc_p @ rule.Q.T) + right_c[:, None]).ravel()[: prob.na]
    Cs = (half * (gs_p @ rule.Q.T) + right_s[:, None]).ravel()[: prob.na]
    rho = prob.rho
    sq = np.sqrt(rho)
    sn, cs = np.sin(k * sq), np.cos(k * sq)
    T = math.sqrt(prob.m.B) * rho**0.25 * (sn * Cc - cs * Cs)
    Tp = T / (4.0 * rho) + rho**-0.25 * (cs * Cc + sn * Cs)
    return TResult(T, Tp, abs(tail_c) + abs(tail_s))


# --- Picard iteration --------------------------------------------------------

@dataclass
class CorrectionField:
    grid: EFGrid
    rho: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    eta_prime: np.ndarray
    fF: np.ndarray
    weight: np.ndarray
    weighted_norm: float
    converged: bool
    iterations: int
    iteration_history: list  # step-norm ratios
    step_norms: list
    fixed_point_residual: float
    tail: float
    tail_weighted: float
    rho0_history: list = field(default_factory=list)
    hypothesis: str = "unchecked"
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rho0": self.grid.rho0, "rho_max": self.grid.rho_max, "B": self.grid.B,
            "n_nodes": int(self.rho.size), "n_gauss": self.grid.n_gauss,
            "weighted_norm": self.weighted_norm, "converged": self.converged,
            "iterations": self.iterations,
            "iteration_history": [float(x) for x in self.iteration_history],
            "step_norms": [float(x) for x in self.step_norms],
            "fixed_point_residual": self.fixed_point_residual,
            "tail": self.tail, "tail_weighted": self.tail_weighted,
            "rho0_history": [float(x) for x in self.rho0_history],
            "hypothesis": self.hypothesis, "notes": list(self.notes),
        }


def _picard(prob: CorrectionProblem, tol: float, max_iter: int):
    eta = np.zeros(prob.na)
    eta_p = np.zeros(prob.na)
    ratios, steps = [], []
    tail = 0.0
    for _ in range(max_iter):
        res = apply_T(prob, eta)
        step = prob.norm(res.T - eta)
        if steps:
            ratios.append(step / steps[-1] if steps[-1] > 0 else 0.0)
        steps.append(step)
        eta, eta_p, tail = res.T, res.T_prime, res.tail
        if not np.all(np.isfinite(eta)):
            return eta, eta_p, ratios, steps, tail, "non-finite iterate"
        if step <= tol:
            return eta, eta_p, ratios, steps, tail, None
        if len(ratios) >= 3 and ratios[-1] >= 1 and ratios[-2] >= 1:
            return eta, eta_p, ratios, steps, tail, "no contraction"
    return eta, eta_p, ratios, steps, tail, "iteration budget exhausted"


def solve_correction(t: TransformF, m: ModelProblem, rho0: float = 50.0,
                     rho_max: float = 2000.0, tol: float = 1e-8, max_iter: int = 30,
                     n_gauss: int = 8, check: bool = True, max_escalations: int = 5,
                     hypothesis: str | None = None) -> CorrectionField:
    """Picard iteration eta_{k+1} = T[eta_k] from eta_0 = 0.

    rho0 is raised by 1.5x (at most ``max_escalations`` times) when the
    iteration does not contract.
    """
    if check and hypothesis is None:
        hypothesis = hypothesis_check(t, m)[0].verdict
    hypothesis = hypothesis or "unchecked"
    if hypothesis == "fail":
        raise HypothesisViolation(
            "decay hypothesis violated: rho^{1/2}(eps1+eps2) does not tend to 0")
    if hypothesis == "inconclusive":
        warnings.warn("decay hypothesis inconclusive; construction may not be justified")
    history = []
    reason = None
    for _ in range(max_escalations + 1):
        history.append(rho0)
        if rho0 >= rho_max:
            break
        grid = EFGrid.build(rho0, rho_max, m.B, n_gauss)
        prob = CorrectionProblem(t, m, grid)
        try:
            eta, eta_p, ratios, steps, tail, reason = _picard(prob, tol, max_iter)
        except ConstructionError as exc:
            reason = str(exc)
        if reason is None:
            res = apply_T(prob, eta)
            field_ = CorrectionField(
                grid, prob.rho, prob.phi, eta, eta_p, prob.p["fF"][: prob.na], prob.weight,
                prob.norm(eta), True, len(steps), ratios, steps, prob.norm(res.T - eta),
                tail, _tail_weighted(prob, tail), history, hypothesis)
            return field_
        rho0 *= 1.5
    raise ConstructionError(
        f"no contraction for rho0 in {[round(x, 3) for x in history]}: {reason}")


def _tail_weighted(prob: CorrectionProblem, tail: float) -> float:
    """Largest contribution of the far tail to T, in weighted-norm units."""
    if tail == 0:
        return 0.0
    rho = prob.rho
    with np.errstate(divide="ignore"):
        q = math.sqrt(prob.m.B) * rho**0.25 * tail / prob.weight
    return float(np.max(q))


# --- assembly -------------------------------------------------------------------

def assemble_inner(t: TransformF, m: ModelProblem, c: CorrectionField):
    """Inner segment u = phi + eta with U_rho = phi' + eta'."""
    from .shoot import RadialProfile

    if not c.converged:
        raise ConstructionError("correction field did not converge")
    rho = c.rho[::-1]
    phi = c.phi[::-1]
    eta = c.eta[::-1]
    phi_p = c.fF[::-1] * (1.0 - 1.0 / rho)
    u_rho = phi_p + c.eta_prime[::-1]
    return RadialProfile.from_rho(rho, phi + eta, u_rho, "inner_constructed",
                                  phi=phi, eta=eta)
