"""Model problems with explicit singular solutions.

For B > 1 (B' = B/(B-1)):
    g(s) = 4/(B B') s^{1-2B'} e^{s^{B'}},   G(s) = (B/4)(s^{B'} + 1) e^{-s^{B'}},
    v(r) = (-2 log r)^{1/B'}.
For B = 1:
    g(s) = 4 e^{e^s} / e^{2s},   G(s) = (1/4)(e^s + 1) e^{-e^s},
    v(r) = log(-2 log r).

In both cases -Delta v = g(v) in the punctured unit disc and G(v(r)) equals
(B/4) r^2 (log(1/r^2) + 1).  With u = s^{B'} (resp. e^s) every functional
of g used downstream is a rational function of u plus a logarithm, which
lets us evaluate them without cancellation; at s = psi(rho) one has
u = rho - 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nonlinearity import B_ONE_TOL, Nonlinearity, TransformF, make


@dataclass(frozen=True)
class ModelProblem:
    B: float
    Bprime: float  # math.inf on the B = 1 branch
    double_exp: bool

    # --- exponent variable u(s) ---------------------------------------
    def u_of_s(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(s) if self.double_exp else s ** self.Bprime

    def log_g(self, s):
        s = np.asarray(s, dtype=float)
        if self.double_exp:
            return np.exp(s) - 2.0 * s + math.log(4.0)
        k = self.Bprime
        return s**k + (1.0 - 2.0 * k) * np.log(s) + math.log(4.0 / (self.B * k))

    def g(self, s):
        return np.exp(self.log_g(s))

    def log_G(self, s):
        u = self.u_of_s(s)
        return math.log(self.B / 4.0) + np.log1p(u) - u

    def G(self, s):
        return np.exp(self.log_G(s))

    # --- explicit solution ------------------------------------------------
    def v(self, r):
        ell = -2.0 * np.log(np.asarray(r, dtype=float))
        return np.log(ell) if self.double_exp else ell ** (1.0 / self.Bprime)

    def v_prime(self, r):
        r = np.asarray(r, dtype=float)
        ell = -2.0 * np.log(r)
        if self.double_exp:
            return -2.0 / (r * ell)
        k = self.Bprime
        return -(2.0 / k) * ell ** (1.0 / k - 1.0) / r

    def v_second(self, r):
        r = np.asarray(r, dtype=float)
        ell = -2.0 * np.log(r)
        if self.double_exp:
            return 2.0 / (r**2 * ell) - 4.0 / (r**2 * ell**2)
        k = self.Bprime
        return ((2.0 / k) * ell ** (1.0 / k - 1.0)
                + (4.0 / k) * (1.0 / k - 1.0) * ell ** (1.0 / k - 2.0)) / r**2

    def psi(self, rho):
        u = np.asarray(rho, dtype=float) - 1.0
        return np.log(u) if self.double_exp else u ** (1.0 / self.Bprime)

    def psi_prime(self, rho):
        u = np.asarray(rho, dtype=float) - 1.0
        if self.double_exp:
            return 1.0 / u
        k = self.Bprime
        return u ** (1.0 / k - 1.0) / k

    # --- functionals, as functions of u ----------------------------------
    def _Lambda(self, u):
        # -log G
        return u - np.log1p(u) - math.log(self.B / 4.0)

    def _one_minus_gpG(self, u):
        return 1.0 / (self.B * u) + (1.0 + 1.0 / self.B) / u**2

    def _E(self, u):
        # g g'' G / g' - 1
        if self.double_exp:
            return (u + 4.0) / (u**2 * (u - 2.0))
        k = self.Bprime
        return ((k - 1.0) * u + 2.0 * (2.0 * k - 1.0)) / (u**2 * (k * u + 1.0 - 2.0 * k))

    def functionals_u(self, u) -> dict:
        u = np.asarray(u, dtype=float)
        lam = self._Lambda(u)
        omg = self._one_minus_gpG(u)
        E = self._E(u)
        return {"minus_logG": lam, "one_minus_gpG": omg, "E": E,
                "B1_inv": lam * omg, "B2_inv": (1.0 - omg) * lam**2 * E}

    def functionals(self, s) -> dict:
        return self.functionals_u(self.u_of_s(s))

    def at_psi(self, rho) -> dict:
        return self.functionals_u(np.asarray(rho, dtype=float) - 1.0)

    def nonlinearity(self) -> Nonlinearity:
        return make({"family": "model", "B": self.B})


def build_model(B: float) -> ModelProblem:
    B = float(B)
    if not B >= 1.0:
        raise ValueError(f"model requires B >= 1, got {B}")
    if abs(B - 1.0) <= B_ONE_TOL:
        return ModelProblem(1.0, math.inf, True)
    return ModelProblem(B, B / (B - 1.0), False)


def log_G_of_v(m: ModelProblem, r):
    """log of (B/4) r^2 (log(1/r^2) + 1)."""
    r = np.asarray(r, dtype=float)
    return math.log(m.B / 4.0) + 2.0 * np.log(r) + np.log1p(-2.0 * np.log(r))


def G_of_v(m: ModelProblem, r, check: bool = True):
    """(B/4) r^2 (log(1/r^2) + 1), cross-checked against G(v(r))."""
    r = np.asarray(r, dtype=float)
    if np.any((r <= 0) | (r >= 1)):
        raise ValueError("G_of_v needs 0 < r < 1")
    value = np.exp(log_G_of_v(m, r))
    if check:
        direct = m.G(m.v(r))
        rel = np.max(np.abs(direct - value) / value)
        if rel > 1e-12:
            raise AssertionError(f"G(v(r)) identity violated: rel err {rel:.3e}")
    return float(value) if value.ndim == 0 else value


def log_target(m: ModelProblem, rho):
    """log of F(phi(rho)) = G(psi(rho)) = (B/4) rho e^{1 - rho}."""
    rho = np.asarray(rho, dtype=float)
    return math.log(m.B / 4.0) + np.log(rho) + 1.0 - rho


def phi(m: ModelProblem, t: TransformF, rho):
    """phi(rho) = F^{-1}[(B/4) rho e^{1-rho}]."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 1):
        raise ValueError("phi needs rho > 1")
    out = t.log_F_inv(np.atleast_1d(log_target(m, rho)))
    return float(out[0]) if rho.ndim == 0 else out.reshape(rho.shape)
