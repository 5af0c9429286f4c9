"""Growth exponents A and B, remainders eps1/eps2 and the decay test.

    1/B1[f](s) = (-log F)(1 - f'F)
    1/B2[f](s) = f'F (-log F)^2 (f f'' F / f' - 1)

Both tend to 1/B.  The remainders compare these functionals of f at
phi(rho) with those of the model g at psi(rho); the construction needs
rho^{1/2} (eps1 + eps2) -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exprdsl import jet_array
from .model import ModelProblem, build_model, phi
from .nonlinearity import Nonlinearity, TransformF, solve_increasing

ZERO_EPS = 1e-10  # eps1 + eps2 below this everywhere counts as identically zero
DEFAULT_RHO_GRID = (1e2, 1e8, 25)


class ClassificationError(ValueError):
    pass


def b_functionals(t: TransformF, s):
    """(1/B1[f](s), 1/B2[f](s)); arrays in, arrays out."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    r = t.ratios(s_arr)
    if np.any(r["logF"] >= 0):
        bad = s_arr[r["logF"] >= 0][0]
        raise ClassificationError(f"F(s) >= 1 at s={bad:.6g}; sample further out")
    omf = r["one_minus_fpF"]
    if np.all(omf == 0):
        raise ClassificationError("sub-exponential borderline: 1 − f′F ≡ 0")
    lam = -r["logF"]
    b1 = lam * omf
    b2 = r["fpF"] * lam**2 * r["ffppF_over_fp_minus_one"]
    if np.ndim(s) == 0:
        return float(b1[0]), float(b2[0])
    return b1, b2


def signed_remainders(t: TransformF, m: ModelProblem, rho) -> dict:
    """Signed differences of the functionals of f at phi and g at psi."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    ph = phi(m, t, rho)
    r = t.ratios(ph)
    z = m.at_psi(rho)
    lam = -r["logF"]
    b1 = lam * r["one_minus_fpF"]
    b2 = r["fpF"] * lam**2 * r["ffppF_over_fp_minus_one"]
    return {"rho": rho, "phi": ph, "ratios": r,
            "d1": b1 - z["B1_inv"], "d2": b2 - z["B2_inv"]}


def epsilons(t: TransformF, m: ModelProblem, rho):
    """(eps1, eps2) at rho."""
    out = signed_remainders(t, m, rho)
    e1, e2 = np.abs(out["d1"]), np.abs(out["d2"])
    if np.ndim(rho) == 0:
        return float(e1[0]), float(e2[0])
    return e1, e2


# --- B estimation ---------------------------------------------------------

def s_for_a(nl: Nonlinearity, A):
    """Solve a(s) = A for s > s0."""
    A = np.atleast_1d(np.asarray(A, dtype=float))

    def fun(s):
        d = jet_array(nl.a, s, 1, strict=False)
        return d[0] - A, d[1]

    lo = np.full(A.shape, nl.s0 * (1 + 1e-9) + 1e-12)
    return solve_increasing(fun, lo, np.inf, lo + 1.0, xtol=1e-13)


@dataclass
class BEstimate:
    B_estimate: float | None
    A_estimate: float
    B2_inv_limit: float | None
    B1_B2_gap: np.ndarray
    samples: np.ndarray  # columns s, 1/B1, 1/B2
    converged: bool
    note: str = ""


def estimate_B(t: TransformF, n: int = 24, a_range=(50.0, 1e12), n_fit: int = 6) -> BEstimate:
    """Extrapolate 1/B2[f] to s = inf, linearly in 1/log s over the top samples."""
    nl = t.nl
    a_s0 = float(jet_array(nl.a, np.array([nl.s0 * 1.01 + 1e-12]), 0)[0, 0])
    A_lo = max(a_range[0], a_s0 + 10.0)
    s = s_for_a(nl, np.geomspace(A_lo, max(a_range[1], 1e3 * A_lo), n))
    b1, b2 = b_functionals(t, s)
    fpF = t.ratios(s[-1:])["fpF"][0]
    samples = np.column_stack([s, b1, b2])
    gap = np.abs(b1 - b2)

    x = 1.0 / np.log(s[-n_fit:])
    y = b2[-n_fit:]
    if not np.all(np.isfinite(y)) or np.any(x <= 0):
        return BEstimate(None, float(fpF), None, gap, samples, False, "non-finite samples")
    c1, c0 = np.polyfit(x, y, 1)
    resid = np.max(np.abs(np.polyval([c1, c0], x) - y))
    tail = y[-1]
    notes = []
    ok = True
    if not c0 > 0:
        ok, notes = False, notes + ["extrapolated 1/B2 not positive"]
    if abs(c0 - tail) > 0.25 * abs(tail):
        ok, notes = False, notes + ["extrapolation correction exceeds 25%"]
    if resid > 0.05 * abs(c0):
        ok, notes = False, notes + ["samples not linear in 1/log s"]
    if not ok:
        return BEstimate(None, float(fpF), float(c0), gap, samples, False, "; ".join(notes))
    B = 1.0 / c0
    if B < 1 - 0.05:
        notes.append("B < 1: growth condition violated")
    return BEstimate(float(B), float(fpF), float(c0), gap, samples, True, "; ".join(notes))


# --- hypothesis check -----------------------------------------------------

@dataclass
class HypothesisVerdict:
    verdict: str  # pass | fail | inconclusive
    first_decade: float
    last_decade: float
    last_slope: float
    note: str = ""


def rho_grid(lo=DEFAULT_RHO_GRID[0], hi=DEFAULT_RHO_GRID[1], n=DEFAULT_RHO_GRID[2]):
    return np.geomspace(lo, hi, n)


def decade_trend(rho, stat) -> HypothesisVerdict:
    rho = np.asarray(rho, dtype=float)
    stat = np.asarray(stat, dtype=float)
    if rho.max() / rho.min() < 10**3 * (1 - 1e-12):
        raise ValueError("rho grid must span at least 3 decades")
    if np.all(stat <= ZERO_EPS * np.sqrt(rho)):
        return HypothesisVerdict("pass", 0.0, 0.0, 0.0, "remainders vanish to round-off")
    first = rho <= rho.min() * 10 * (1 + 1e-12)
    last = rho >= rho.max() / 10 * (1 - 1e-12)
    with np.errstate(divide="ignore"):
        ls = np.log(np.maximum(stat, 1e-300))
    m_first = float(np.exp(ls[first].mean()))
    m_last = float(np.exp(ls[last].mean()))
    slope = float(np.polyfit(np.log(rho[last]), ls[last], 1)[0])
    if m_first >= 2 * m_last and slope < 0:
        v = "pass"
    elif m_last >= 2 * m_first and slope > 0:
        v = "fail"
    else:
        v = "inconclusive"
    return HypothesisVerdict(v, m_first, m_last, slope)


def hypothesis_check(t: TransformF, m: ModelProblem, rho=None):
    """Decade trend of rho^{1/2}(eps1 + eps2); returns (verdict, samples)."""
    rho = rho_grid() if rho is None else np.asarray(rho, dtype=float)
    e1, e2 = epsilons(t, m, rho)
    stat = np.sqrt(rho) * (e1 + e2)
    samples = np.column_stack([rho, e1, e2, stat])
    return decade_trend(rho, stat), samples


# --- report ---------------------------------------------------------------

@dataclass
class ClassificationReport:
    spec: dict
    A_estimate: float
    B_estimate: float | None
    B_model: float
    B_source: str
    samples: np.ndarray
    epsilon_samples: np.ndarray
    hypothesis: HypothesisVerdict
    estimate_note: str = ""
    flags: list = field(default_factory=list)

    @property
    def hypothesis_verdict(self) -> str:
        return self.hypothesis.verdict

    def to_dict(self) -> dict:
        h = self.hypothesis
        return {
            "spec": self.spec,
            "A_estimate": self.A_estimate,
            "B_estimate": self.B_estimate,
            "B_model": self.B_model,
            "B_source": self.B_source,
            "estimate_note": self.estimate_note,
            "flags": list(self.flags),
            "hypothesis": {"verdict": h.verdict, "first_decade": h.first_decade,
                           "last_decade": h.last_decade, "last_slope": h.last_slope,
                           "note": h.note},
            "samples": {"s": self.samples[:, 0].tolist(),
                        "B1_inv": self.samples[:, 1].tolist(),
                        "B2_inv": self.samples[:, 2].tolist()},
            "epsilon_samples": {"rho": self.epsilon_samples[:, 0].tolist(),
                                "eps1": self.epsilon_samples[:, 1].tolist(),
                                "eps2": self.epsilon_samples[:, 2].tolist(),
                                "stat": self.epsilon_samples[:, 3].tolist()},
        }


def model_B(nl: Nonlinearity, est: BEstimate, override: float | None = None):
    """B for the comparison model: override, then family value, then estimate."""
    if override is not None:
        return float(override), "config"
    if nl.known_B is not None:
        return float(nl.known_B), "family"
    if est.B_estimate is None:
        raise ClassificationError(f"could not estimate B: {est.note}")
    return max(1.0, est.B_estimate), "estimate"


def classify(nl: Nonlinearity, t: TransformF | None = None, B: float | None = None,
             rho=None) -> ClassificationReport:
    t = TransformF(nl) if t is None else t
    est = estimate_B(t)
    Bm, src = model_B(nl, est, B)
    m = build_model(Bm)
    verdict, eps = hypothesis_check(t, m, rho)
    flags = list(nl.flags)
    if not math.isclose(est.A_estimate, 1.0, abs_tol=1e-3):
        flags.append(f"f'F at largest sample = {est.A_estimate:.6g}, not near 1")
    return ClassificationReport(nl.spec, est.A_estimate, est.B_estimate, Bm, src,
                                est.samples, eps, verdict, est.note, flags)
