"""Asymptotic expansions of F(s) = int_s^inf e^{-a} for f = e^{a(s)}.

The sequence a_1 = 1/a', a_{n+1} = a_n'/a' gives, by repeated integration by
parts,

    F(s) = (a_1 + a_2 + a_3 + a_4 + ...) e^{-a(s)}

whenever a_{n+1}/a_n -> 0.  The closed forms below were obtained once by
symbolic differentiation of the recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exprdsl import Expression, jet_array

TAIL_GUARD = 0.25


class TailGuardError(ValueError):
    """The point is too small for the truncated series to be trusted."""


def a_terms(d) -> np.ndarray:
    """a_1..a_5 from raw derivatives d = (a, a', ..., a^(5)); shape (5, ...)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _a_terms(d)


def _a_terms(d):
    d1 = d[1]
    # x_k = d_k / d1^k keeps every term O(1) when a' is huge
    x2 = d[2] / d1**2
    x3 = (d[3] / d1**2) / d1
    x4 = ((d[4] / d1**2) / d1) / d1
    x5 = (((d[5] / d1**2) / d1) / d1) / d1
    a1 = 1.0 / d1
    a2 = -x2 / d1
    a3 = (3.0 * x2**2 - x3) / d1
    a4 = -(x4 - 10.0 * x2 * x3 + 15.0 * x2**3) / d1
    a5 = -(x5 - 15.0 * x2 * x4 - 10.0 * x3**2 + 105.0 * x2**2 * x3
           - 105.0 * x2**4) / d1
    return np.array([a1, a2, a3, a4, a5])


def _checked_jet(a: Expression, s):
    d = jet_array(a, s, 5)
    if np.any(d[1] <= 0):
        raise ValueError(f"a'(s) must be positive; got {d[1]!r} at s={s!r}")
    return d


def a_sequence(a: Expression, s):
    """Return (a_1, ..., a_5) at ``s``."""
    return a_terms(_checked_jet(a, s))


def tail_series(d):
    """Scaled tail e^{a} F ~ a1+a2+a3+a4 and its error estimate, from a jet.

    Returns (value, err, guard_ok) without the e^{-a} factor, so callers can
    stay in log space.
    """
    an = a_terms(d)
    value = an[0] + an[1] + an[2] + an[3]
    err = np.where(an[3] != 0, 2.0 * np.abs(an[4]), np.abs(an[3]))
    guard_ok = np.abs(an[1] / an[0]) <= TAIL_GUARD
    return value, err, guard_ok


def F_tail(a: Expression, s: float):
    """Four-term asymptotic value of F(s) and a heuristic error estimate.

    The estimate is twice the first omitted term; the remainder is only known
    to be o(a_4), so this is a majorant by convention, not a bound.
    """
    d = _checked_jet(a, s)
    value, err, ok = tail_series(d)
    if not np.all(ok):
        raise TailGuardError(f"|a2/a1| > {TAIL_GUARD} at s={s}; integrate further out")
    scale = np.exp(-d[0])
    return float(value * scale), float(err * scale)


@dataclass(frozen=True)
class ExpansionRatios:
    logF: float
    fF: float
    fpF: float
    ffppF_over_fp: float


def expansion_ratios(a: Expression, s: float) -> ExpansionRatios:
    """Leading terms of log F, fF, f'F and f f'' F / f'."""
    d = _checked_jet(a, s)
    _, _, ok = tail_series(d)
    if not np.all(ok):
        raise TailGuardError(f"|a2/a1| > {TAIL_GUARD} at s={s}")
    d0, d1, d2, d3 = (float(x) for x in d[:4])
    return ExpansionRatios(
        logF=-d0 - np.log(d1),
        fF=1.0 / d1,
        fpF=1.0 - d2 / d1**2 + (3.0 * d2**2 - d1 * d3) / d1**4,
        ffppF_over_fp=1.0 + (2.0 * d2**2 - d1 * d3) / d1**4,
    )
