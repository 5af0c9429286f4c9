"""Radial profiles and the outward shot to a Dirichlet radius.

Profiles are stored against rho = 1 - 2 log r because r underflows long
before the inner segment ends (rho ~ 1500 already gives r < 1e-300).  The
derivative is kept as U_rho = dU/drho; u'(r) = -2 U_rho / r follows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .nonlinearity import Nonlinearity

LOG4 = math.log(4.0)


class ShootingError(RuntimeError):
    pass


@dataclass
class RadialProfile:
    rho: np.ndarray  # strictly decreasing, so r is increasing
    u: np.ndarray
    u_rho: np.ndarray
    segment: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    r0: float | None = None
    R: float | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_rho(cls, rho, u, u_rho, tag, phi=None, eta=None, **kw):
        rho = np.asarray(rho, dtype=float)
        n = rho.size
        nan = np.full(n, np.nan)
        return cls(rho, np.asarray(u, dtype=float), np.asarray(u_rho, dtype=float),
                   np.array([tag] * n, dtype=object),
                   nan.copy() if phi is None else np.asarray(phi, dtype=float),
                   nan.copy() if eta is None else np.asarray(eta, dtype=float), **kw)

    @classmethod
    def from_r(cls, r, u, up, tag, **kw):
        r = np.asarray(r, dtype=float)
        return cls.from_rho(1.0 - 2.0 * np.log(r), u, -0.5 * r * np.asarray(up), tag, **kw)

    @property
    def r(self) -> np.ndarray:
        return np.exp(0.5 * (1.0 - self.rho))

    @property
    def log_r(self) -> np.ndarray:
        return 0.5 * (1.0 - self.rho)

    @property
    def u_prime(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return -2.0 * self.u_rho * np.exp(0.5 * (self.rho - 1.0))

    def __len__(self):
        return self.rho.size

    def select(self, tag) -> "RadialProfile":
        k = self.segment == tag
        return RadialProfile(self.rho[k], self.u[k], self.u_rho[k], self.segment[k],
                             self.phi[k], self.eta[k], self.r0, self.R, dict(self.meta))

    @property
    def segments(self) -> list:
        seen = []
        for s in self.segment:
            if s not in seen:
                seen.append(s)
        return seen

    def check(self):
        if not np.all(np.diff(self.rho) < 0):
            raise ShootingError("profile nodes must be strictly ordered")


def concat(*parts: RadialProfile, **kw) -> RadialProfile:
    """Join segments ordered by increasing r; a shared end node is kept once."""
    keep = [parts[0]]
    for p in parts[1:]:
        prev = keep[-1]
        if len(p) and len(prev) and p.rho[0] >= prev.rho[-1]:
            k = p.rho < prev.rho[-1]
            p = RadialProfile(p.rho[k], p.u[k], p.u_rho[k], p.segment[k], p.phi[k],
                              p.eta[k], meta=p.meta)
        keep.append(p)
    cat = lambda name: np.concatenate([getattr(p, name) for p in keep])
    out = RadialProfile(cat("rho"), cat("u"), cat("u_rho"), cat("segment"), cat("phi"),
                        cat("eta"), **kw)
    out.check()
    return out


# --- inner continuation in rho ---------------------------------------------

def _rhs_rho(nl: Nonlinearity):
    def rhs(rho, y):
        return [y[1], -math.exp(1.0 - rho - LOG4 + float(nl.log_f_ext(y[0])))]
    return rhs


def continue_inner(nl: Nonlinearity, rho_start: float, U: float, U_rho: float,
                   rho_end: float, tol: float = 1e-13, dt: float = 0.02) -> RadialProfile:
    """Integrate U'' = -(e^{1-rho}/4) f(U) from rho_start down to rho_end.

    Samples are uniform in sqrt(rho), matching the inner grid's grading.
    """
    if rho_end >= rho_start:
        raise ValueError("continuation runs towards smaller rho")
    ts = np.sqrt(rho_start)
    te = np.sqrt(rho_end)
    n = max(8, math.ceil((ts - te) / dt))
    rho_eval = np.linspace(ts, te, n + 1) ** 2
    rho_eval[0], rho_eval[-1] = rho_start, rho_end
    # node to node, so that every sample is a step end point and not a value
    # of the dense interpolant (whose derivative is noisier)
    rhs = _rhs_rho(nl)
    y = np.empty((2, rho_eval.size))
    y[:, 0] = U, U_rho
    for i in range(rho_eval.size - 1):
        sol = solve_ivp(rhs, (rho_eval[i], rho_eval[i + 1]), y[:, i], method="DOP853",
                        rtol=tol, atol=tol * max(1.0, abs(U)) * 1e-3)
        if not sol.success:
            raise ShootingError(f"inner continuation failed: {sol.message}")
        y[:, i + 1] = sol.y[:, -1]
    return RadialProfile.from_rho(rho_eval, y[0], y[1], "inner_continued")


# --- outer shot in r ------------------------------------------------------------

@dataclass
class Trajectory:
    r: np.ndarray
    w: np.ndarray
    wp: np.ndarray
    sol: object
    r0: float
    r_end: float


def integrate_radial(nl: Nonlinearity, r0: float, u0: float, up0: float, r_stop: float,
                     tol: float = 1e-12, f=None, events=None, n_out: int = 400) -> Trajectory:
    """Solve w'' = -w'/r - f(w) on [r0, r_stop] with DOP853 and dense output.

    ``f`` overrides the (extended) nonlinearity; it takes and returns floats.
    """
    if not r0 > 0 or not r_stop > r0:
        raise ValueError("need 0 < r0 < r_stop")
    fun = f if f is not None else (lambda w: math.exp(float(nl.log_f_ext(w))))
    scale = max(abs(u0), 1.0)

    def rhs(r, y):
        return [y[1], -y[1] / r - fun(y[0])]

    def blowup(r, y):
        return 1e200 - abs(y[1])
    blowup.terminal = True

    ev = [blowup] + list(events or [])
    sol = solve_ivp(rhs, (r0, r_stop), [u0, up0], method="DOP853", dense_output=True,
                    rtol=tol, atol=tol * scale, events=ev)
    if sol.status == -1:
        raise ShootingError(f"radial integration failed: {sol.message}")
    if sol.t_events[0].size:
        raise ShootingError("blow-up of |w'| during radial integration")
    r_end = float(sol.t[-1])
    rr = np.linspace(r0, r_end, n_out)
    y = sol.sol(rr)
    return Trajectory(rr, y[0], y[1], sol, r0, r_end)


def find_dirichlet_radius(nl: Nonlinearity, r0: float, u0: float, up0: float,
                          tol: float = 1e-12, n_out: int = 1600):
    """First R > r0 with w(R) = 0, and the trajectory on [r0, R]."""
    if not up0 < 0:
        raise ShootingError("shooting needs u'(r0) < 0")
    if not u0 > 0:
        raise ShootingError("shooting needs u(r0) > 0")
    # (r w')' = -r f < 0 gives w <= u0 + r0 up0 log(r/r0): a zero before r_budget
    r_budget = r0 * math.exp(min(u0 / (r0 * -up0), 600.0)) * 1.01

    def hit(r, y):
        return y[0]
    hit.terminal = True
    hit.direction = -1
    tr = integrate_radial(nl, r0, u0, up0, r_budget, tol, events=[hit])
    ev = tr.sol.t_events[1]
    if not ev.size:
        raise ShootingError(f"no sign change of w before r = {r_budget:.6g}")
    # the event is already located on the dense output; polish with brentq
    R = float(ev[0])
    w = lambda r: float(tr.sol.sol(r)[0])
    lo = float(tr.sol.t[-2]) if tr.sol.t.size > 1 else r0
    if w(R) != 0 and w(lo) * w(R) < 0:
        R = brentq(w, lo, R, xtol=1e-15 * R, rtol=4 * np.finfo(float).eps, maxiter=200)
    rr = np.linspace(r0, R, n_out)
    y = sample_path(nl, r0, u0, up0, rr, tol)
    out = Trajectory(rr, y[0], y[1], tr.sol, r0, R)
    if np.any(out.wp[1:] >= 0):
        raise ShootingError("w' >= 0 somewhere on (r0, R]")
    return R, out


def sample_path(nl: Nonlinearity, r0, u0, up0, rr, tol=1e-13, f=None):
    """(w, w') at the nodes rr, integrating node to node from r0 = rr[0]."""
    fun = f if f is not None else (lambda w: math.exp(float(nl.log_f_ext(w))))
    scale = max(abs(u0), 1.0)

    def rhs(r, y):
        return [y[1], -y[1] / r - fun(y[0])]
    y = np.empty((2, len(rr)))
    y[:, 0] = u0, up0
    for i in range(len(rr) - 1):
        sol = solve_ivp(rhs, (rr[i], rr[i + 1]), y[:, i], method="DOP853", rtol=tol,
                        atol=tol * scale)
        if not sol.success:
            raise ShootingError(f"radial integration failed: {sol.message}")
        y[:, i + 1] = sol.y[:, -1]
    return y


def recheck_boundary(nl: Nonlinearity, r0, u0, up0, R, tol=3e-14) -> float:
    """|w(R)| from an independent, tighter integration without events."""
    tr = integrate_radial(nl, r0, u0, up0, R, tol, n_out=2)
    return float(abs(tr.w[-1]))


def assemble_full(inner: RadialProfile, outer: Trajectory, R: float,
                  meta: dict | None = None) -> RadialProfile:
    """Inner segment(s) on (0, r0], shot on [r0, R]; u' continuous at r0."""
    r0 = outer.r0
    ri = float(inner.r[-1])
    if abs(ri - r0) > 1e-12 * r0:
        raise ShootingError(f"inner profile ends at r={ri:.15g}, shot starts at {r0:.15g}")
    mism_u = abs(inner.u[-1] - outer.w[0])
    mism_up = abs(inner.u_prime[-1] - outer.wp[0])
    if mism_u > 1e-9 * max(1.0, abs(outer.w[0])) or \
            mism_up > 1e-9 * max(1.0, abs(outer.wp[0])):
        raise ShootingError(f"mismatch at r0: du={mism_u:.3e}, du'={mism_up:.3e}")
    out = RadialProfile.from_r(outer.r, outer.w, outer.wp, "outer_shot")
    m = dict(inner.meta)
    m.update(meta or {})
    return concat(inner, out, r0=r0, R=R, meta=m)


def extend(nl: Nonlinearity, inner: RadialProfile, r0: float = 0.05, tol: float = 1e-13,
           n_out: int = 1600) -> RadialProfile:
    """Continue the inner segment to r0, shoot to the Dirichlet radius, merge."""
    rho_r0 = 1.0 - 2.0 * math.log(r0)
    rho_in = float(inner.rho[-1])
    parts = [inner]
    if rho_r0 < rho_in:
        cont = continue_inner(nl, rho_in, float(inner.u[-1]), float(inner.u_rho[-1]), rho_r0)
        parts.append(cont)
    elif rho_r0 > rho_in:
        raise ShootingError(f"r0 = {r0} lies inside the inner segment (rho0 = {rho_in:.4g})")
    body = concat(*parts, meta=dict(inner.meta))
    u0 = float(body.u[-1])
    up0 = float(body.u_prime[-1])
    R, tr = find_dirichlet_radius(nl, r0, u0, up0, tol, n_out)
    w_R = recheck_boundary(nl, r0, u0, up0, R)
    meta = {"extension": nl.extension_record(), "w_R_recheck": w_R,
            "u_r0": u0, "u_prime_r0": up0}
    return assemble_full(body, tr, R, meta)
