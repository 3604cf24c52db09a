"""Closed-form equilibria of the built-in ``section8`` problem.

An equilibrium flow is characterized by the scalar ``p`` solving
``p = m + bhat(p) / lam`` where ``m`` is the initial mean and
``lam = 1/(T - t0)``.  One side is piecewise quadratic and the other linear,
so the fixed points split into four families indexed by ``lam`` with three
sub-regimes each (one, two or three roots) separated by the saturation
threshold ``m1`` and the fold threshold ``m2``.  This module enumerates the
roots exactly and exposes the minimal/maximal selectors; it is the oracle the
numerical pipeline is validated against.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import CaseConsistencyError
from .modelspec import bhat_section8

__all__ = [
    "LAMBDA_SMALL_TIME",
    "LAMBDA_C3_HI",
    "BOUNDARY_TOL",
    "m1",
    "m2",
    "phi_minus",
    "phi_plus",
    "phi_hat",
    "ScalarCase",
    "classify",
    "RootSet",
    "solve_roots",
    "root_count",
    "minimal_p",
    "maximal_p",
    "minimal_p_one_sided",
    "maximal_p_one_sided",
    "minimal_p_one_sided_in_lambda",
    "closed_value",
    "write_case_table",
]

LAMBDA_SMALL_TIME = 2.0           # unique fixed point for lam >= 2
LAMBDA_C3_HI = 4.0 - 2.0 * math.sqrt(2.0)
BOUNDARY_TOL = 1e-12              # routing band around |m| = m2
_CLAMP_TOL = 1e-12                # discriminant clamp at tangency


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return lam


def m1(lam: float) -> float:
    """Saturation threshold: beyond |m| = m1 the extreme root sits on a flat drift branch."""
    lam = _check_lambda(lam)
    return 2.0 - 2.0 / lam


def m2(lam: float) -> float:
    """Fold threshold: for lam < 2 two fixed points collide at |m| = m2."""
    lam = _check_lambda(lam)
    return lam / 2.0 + 2.0 / lam - 2.0


def _sqrt_disc(d: float, what: str) -> float:
    if d < -_CLAMP_TOL:
        raise CaseConsistencyError(
            f"negative discriminant {d:.3e} in {what}; case misclassified"
        )
    return math.sqrt(max(d, 0.0))


def phi_minus(lam: float, m: float) -> float:
    """sqrt((lam-2)^2 - 2*lam*m), clamped to 0 within 1e-12 of tangency."""
    lam = _check_lambda(lam)
    return _sqrt_disc((lam - 2.0) ** 2 - 2.0 * lam * m, "phi_minus")


def phi_plus(lam: float, m: float) -> float:
    """sqrt((lam-2)^2 + 2*lam*m), clamped to 0 within 1e-12 of tangency."""
    lam = _check_lambda(lam)
    return _sqrt_disc((lam - 2.0) ** 2 + 2.0 * lam * m, "phi_plus")


def phi_hat(lam: float, m: float, p: float) -> float:
    """One application of the reduced scalar map: m + bhat(p)/lam."""
    lam = _check_lambda(lam)
    return m + bhat_section8(p) / lam


@dataclass(frozen=True)
class ScalarCase:
    """Classification of a (lam, m) pair into its root-structure regime."""

    lam: float
    m: float
    m1: float
    m2: float
    label: str

    @property
    def n_roots(self) -> int:
        if self.label == "C1" or self.label.endswith(".1"):
            return 1
        if self.label.endswith(".2"):
            return 2
        return 3


def classify(lam: float, m: float) -> ScalarCase:
    """Case label for (lam, m); |m| within 1e-12 of m2 routes to the fold case."""
    lam = _check_lambda(lam)
    m = float(m)
    m1v, m2v = m1(lam), m2(lam)
    if lam >= LAMBDA_SMALL_TIME:
        return ScalarCase(lam, m, m1v, m2v, "C1")
    if lam > LAMBDA_C3_HI:
        family = "C2"
    elif lam > 1.0:
        family = "C3"
    else:
        family = "C4"
    gap = abs(m) - m2v
    if abs(gap) <= BOUNDARY_TOL:
        sub = ".2"
    elif gap > 0:
        sub = ".1"
    else:
        sub = ".3"
    return ScalarCase(lam, m, m1v, m2v, family + sub)


def _case_roots(lam: float, m: float, lam_b: float, m_b: float) -> tuple[str, list[float]]:
    """Root formulas evaluated at (lam, m) with all branch conditions taken
    at (lam_b, m_b).

    Separating the two lets one-sided limits evaluate an adjacent regime's
    formulas exactly at the boundary point.
    """
    case = classify(lam_b, m_b)
    label = case.label
    m1b, m2b = case.m1, case.m2
    lin_lo = m - 2.0 / lam
    lin_hi = m + 2.0 / lam

    if label == "C1":
        if m_b < -m1b:
            roots = [lin_lo]
        elif m_b < 0.0:
            roots = [lam - 2.0 - phi_minus(lam, m)]
        elif m_b < m1b:
            roots = [2.0 - lam + phi_plus(lam, m)]
        else:
            roots = [lin_hi]
    elif label == "C2.1":
        if m_b < -m1b:
            roots = [lin_lo]
        elif m_b < 0.0:
            roots = [lam - 2.0 - phi_minus(lam, m)]
        elif m_b < m1b:
            roots = [2.0 - lam + phi_plus(lam, m)]
        else:
            roots = [lin_hi]
    elif label in ("C2.2", "C3.2", "C4.2"):
        if m_b < 0.0:
            lower = lam - 2.0 - phi_minus(lam, m) if label == "C2.2" else lin_lo
            roots = [lower, 2.0 - lam]
        else:
            upper = 2.0 - lam + phi_plus(lam, m) if label == "C2.2" else lin_hi
            roots = [lam - 2.0, upper]
    elif label == "C2.3":
        if m_b <= 0.0:
            roots = [
                lam - 2.0 - phi_minus(lam, m),
                2.0 - lam - phi_plus(lam, m),
                2.0 - lam + phi_plus(lam, m),
            ]
        else:
            roots = [
                lam - 2.0 - phi_minus(lam, m),
                lam - 2.0 + phi_minus(lam, m),
                2.0 - lam + phi_plus(lam, m),
            ]
    elif label in ("C3.1", "C4.1"):
        roots = [lin_lo] if m_b < 0.0 else [lin_hi]
    elif label == "C3.3":
        if m_b <= -m1b:
            roots = [lin_lo, 2.0 - lam - phi_plus(lam, m), 2.0 - lam + phi_plus(lam, m)]
        elif m_b <= 0.0:
            roots = [
                lam - 2.0 - phi_minus(lam, m),
                2.0 - lam - phi_plus(lam, m),
                2.0 - lam + phi_plus(lam, m),
            ]
        elif m_b <= m1b:
            roots = [
                lam - 2.0 - phi_minus(lam, m),
                lam - 2.0 + phi_minus(lam, m),
                2.0 - lam + phi_plus(lam, m),
            ]
        else:
            roots = [lam - 2.0 - phi_minus(lam, m), lam - 2.0 + phi_minus(lam, m), lin_hi]
    elif label == "C4.3":
        if m_b <= m1b:
            roots = [lin_lo, 2.0 - lam - phi_plus(lam, m), 2.0 - lam + phi_plus(lam, m)]
        elif m_b < 0.0:
            roots = [lin_lo, lin_hi, 2.0 - lam - phi_plus(lam, m)]
        elif m_b <= -m1b:
            roots = [lin_lo, lin_hi, lam - 2.0 + phi_minus(lam, m)]
        else:
            roots = [lam - 2.0 - phi_minus(lam, m), lam - 2.0 + phi_minus(lam, m), lin_hi]
    else:  # pragma: no cover
        raise CaseConsistencyError(f"unhandled case label {label}")
    return label, sorted(roots)


_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class RootSet:
    """All fixed points at one (lam, m), with the extreme selectors."""

    lam: float
    m: float
    case: ScalarCase
    roots: tuple[float, ...]

    def __post_init__(self):
        if not 1 <= len(self.roots) <= 3:
            raise CaseConsistencyError(f"expected 1-3 roots, got {len(self.roots)}")
        if list(self.roots) != sorted(self.roots):
            raise CaseConsistencyError("roots must be sorted")
        for r in self.roots:
            res = abs(r - phi_hat(self.lam, self.m, r))
            if res > _RESIDUAL_TOL:
                raise CaseConsistencyError(
                    f"root {r!r} of case {self.case.label} at "
                    f"(lam={self.lam!r}, m={self.m!r}) has residual {res:.3e}"
                )

    @property
    def p_min(self) -> float:
        return self.roots[0]

    @property
    def p_max(self) -> float:
        return self.roots[-1]


def solve_roots(lam: float, m: float) -> RootSet:
    """Enumerate every fixed point of the scalar map at (lam, m).

    Inputs within 1e-12 of the fold |m| = m2 are snapped onto it so the
    two-root tangency formulas apply and residuals stay at rounding level.
    """
    lam = _check_lambda(lam)
    m = float(m)
    m_eff = m
    if lam < LAMBDA_SMALL_TIME:
        m2v = m2(lam)
        if abs(abs(m) - m2v) <= BOUNDARY_TOL:
            m_eff = math.copysign(m2v, m)
    label, roots = _case_roots(lam, m_eff, lam, m_eff)
    return RootSet(lam, m_eff, classify(lam, m_eff), tuple(roots))


def root_count(lam: float, m: float) -> int:
    return len(solve_roots(lam, m).roots)


def minimal_p(lam: float, m: float) -> float:
    """Smallest fixed point (gradient of the minimal-equilibrium value)."""
    return solve_roots(lam, m).p_min


def maximal_p(lam: float, m: float) -> float:
    """Largest fixed point (gradient of the maximal-equilibrium value)."""
    return solve_roots(lam, m).p_max


def _one_sided(lam, m, side, selector, axis):
    lam = _check_lambda(lam)
    m = float(m)
    if side not in ("below", "above"):
        raise ValueError("side must be 'below' or 'above'")
    if axis == "m":
        delta = 1e-9 * max(1.0, abs(m))
        m_b = m - delta if side == "below" else m + delta
        lam_b = lam
    elif axis == "lambda":
        delta = 1e-9 * max(1.0, lam)
        lam_b = lam - delta if side == "below" else lam + delta
        m_b = m
    else:
        raise ValueError("axis must be 'm' or 'lambda'")
    _, roots = _case_roots(lam, m, lam_b, m_b)
    return roots[0] if selector == "min" else roots[-1]


def minimal_p_one_sided(lam: float, m: float, side: str) -> float:
    """Limit of ``minimal_p(lam, .)`` as the mean tends to ``m`` from one side.

    The adjacent regime is identified at a perturbed mean and its branch
    formulas are evaluated exactly at ``m``, so the returned limit carries no
    perturbation error.
    """
    return _one_sided(lam, m, side, "min", "m")


def maximal_p_one_sided(lam: float, m: float, side: str) -> float:
    return _one_sided(lam, m, side, "max", "m")


def minimal_p_one_sided_in_lambda(lam: float, m: float, side: str) -> float:
    """Limit of ``minimal_p(., m)`` in ``lam``; ``lam`` increases with the start time."""
    return _one_sided(lam, m, side, "min", "lambda")


def closed_value(lam: float, m: float, x: float, selector: str) -> float:
    """Equilibrium value x*p + p^2/(2*lam) for the chosen extreme selector."""
    if selector == "min":
        p = minimal_p(lam, m)
    elif selector == "max":
        p = maximal_p(lam, m)
    else:
        raise ValueError("selector must be 'min' or 'max'")
    return x * p + p * p / (2.0 * lam)


def write_case_table(path, lams, ms) -> None:
    """CSV of root sets over a (lam, m) lattice."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["lambda", "m", "case", "n_roots", "root1", "root2", "root3", "p_min", "p_max"]
        )
        for lam in lams:
            for m in ms:
                rs = solve_roots(lam, m)
                roots = [f"{r:.17g}" for r in rs.roots] + [""] * (3 - len(rs.roots))
                writer.writerow(
                    [f"{lam:.17g}", f"{m:.17g}", rs.case.label, len(rs.roots)]
                    + roots
                    + [f"{rs.p_min:.17g}", f"{rs.p_max:.17g}"]
                )
