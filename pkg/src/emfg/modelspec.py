"""Problem data (terminal reward G, generator H, population drift bhat).

Every evaluator is closed form and vectorized over the state/costate
arguments; the measure argument is an :class:`EmpiricalMeasure`.  A numeric
lint pass probes the standing monotonicity and boundedness assumptions the
equilibrium construction relies on, reporting failures instead of raising.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import EmpiricalMeasure, mean

__all__ = [
    "ProblemSpec",
    "bhat_section8",
    "get_problem",
    "registry_names",
    "ProbePlan",
    "LintCheck",
    "LintReport",
    "lint_assumptions",
]


@dataclass(frozen=True)
class ProblemSpec:
    """Data triple (G, H, bhat) plus the derivative evaluators the solver needs.

    ``drift_sup`` is a bound on ``|bhat|`` when one exists; it seeds the
    extreme Picard iterates.
    """

    name: str
    G: Callable
    dxG: Callable
    H: Callable
    dxH: Callable
    dpH: Callable
    bhat: Callable
    params: dict = field(default_factory=dict)
    drift_sup: float | None = None


def bhat_section8(p):
    """Piecewise population drift of the built-in ``section8`` problem.

    Constant -2 below p = -2, then 2p + p^2/2, then 2p - p^2/2 on [0, 2),
    constant 2 from p = 2 on.  Continuous, nondecreasing, bounded in [-2, 2].
    """
    p = np.asarray(p, dtype=float)
    out = np.where(
        p < -2.0,
        -2.0,
        np.where(
            p < 0.0,
            2.0 * p + 0.5 * p * p,
            np.where(p < 2.0, 2.0 * p - 0.5 * p * p, 2.0),
        ),
    )
    if out.ndim == 0:
        return float(out)
    return out


def _section8(**params) -> ProblemSpec:
    if params:
        raise ValueError(f"section8 takes no parameters, got {sorted(params)}")
    return ProblemSpec(
        name="section8",
        G=lambda x, mu: np.asarray(x, dtype=float) * mean(mu),
        dxG=lambda x, mu: np.full_like(np.asarray(x, dtype=float), mean(mu)),
        H=lambda x, p, mu: 0.5 * np.asarray(p, dtype=float) ** 2,
        dxH=lambda x, p, mu: np.zeros_like(np.asarray(x, dtype=float)),
        dpH=lambda x, p, mu: np.asarray(p, dtype=float),
        bhat=lambda x, p, mu: bhat_section8(p),
        drift_sup=2.0,
    )


def _section8_tilt(alpha: float = 0.5, **params) -> ProblemSpec:
    """``section8`` with a convex terminal tilt alpha*sqrt(1+x^2).

    The tilt makes the value gradient genuinely state dependent while keeping
    every monotonicity assumption intact (alpha >= 0).
    """
    if params:
        raise ValueError(f"section8_tilt takes only 'alpha', got {sorted(params)}")
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")

    def G(x, mu):
        x = np.asarray(x, dtype=float)
        return x * mean(mu) + alpha * np.sqrt(1.0 + x * x)

    def dxG(x, mu):
        x = np.asarray(x, dtype=float)
        return mean(mu) + alpha * x / np.sqrt(1.0 + x * x)

    return ProblemSpec(
        name="section8_tilt",
        G=G,
        dxG=dxG,
        H=lambda x, p, mu: 0.5 * np.asarray(p, dtype=float) ** 2,
        dxH=lambda x, p, mu: np.zeros_like(np.asarray(x, dtype=float)),
        dpH=lambda x, p, mu: np.asarray(p, dtype=float),
        bhat=lambda x, p, mu: bhat_section8(p),
        params={"alpha": alpha},
        drift_sup=2.0,
    )


_REGISTRY: dict[str, Callable[..., ProblemSpec]] = {
    "section8": _section8,
    "section8_tilt": _section8_tilt,
}


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


def get_problem(name: str, **params) -> ProblemSpec:
    """Look up a registered problem by name, passing parameters through."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; registered: {registry_names()}"
        ) from None
    return factory(**params)


# ---------------------------------------------------------------------------
# assumption lint
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbePlan:
    """Finite probe set for the assumption lint.

    Measure pairs are built by adding a nonnegative shift to the sorted base
    samples (a comonotone coupling), which produces dominance-comparable pairs
    by construction.
    """

    xs: np.ndarray
    ps: np.ndarray
    base_measure: EmpiricalMeasure
    shifts: tuple[float, ...] = (0.25, 1.0)
    fd_step: float = 1e-5
    grad_bound: float = 50.0

    @classmethod
    def default(cls) -> "ProbePlan":
        base = EmpiricalMeasure.from_samples(np.linspace(-2.0, 2.0, 33))
        return cls(
            xs=np.linspace(-3.0, 3.0, 13),
            ps=np.linspace(-3.0, 3.0, 25),
            base_measure=base,
        )

    def measure_pairs(self) -> list[tuple[EmpiricalMeasure, EmpiricalMeasure]]:
        return [(self.base_measure, self.base_measure.shift(s)) for s in self.shifts]


@dataclass(frozen=True)
class LintCheck:
    assumption: str
    probe: str
    passed: bool
    margin: float
    note: str = ""


@dataclass(frozen=True)
class LintReport:
    checks: tuple[LintCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[LintCheck]:
        return [c for c in self.checks if not c.passed]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["assumption", "probe", "passed", "margin", "note"])
            for c in self.checks:
                writer.writerow(
                    [c.assumption, c.probe, int(c.passed), f"{c.margin:.17g}", c.note]
                )


_MONO_TOL = 1e-10  # slack for flat branches under float evaluation


def _min_increment(values: np.ndarray) -> float:
    return float(np.min(np.diff(values))) if values.size > 1 else 0.0


def lint_assumptions(spec: ProblemSpec, plan: ProbePlan | None = None) -> LintReport:
    """Probe the monotonicity/boundedness assumptions at a finite grid.

    Failures are reported with their worst margin, never raised; boundedness
    of the terminal-reward derivatives is only checked over the probe set and
    flagged as local.
    """
    plan = plan or ProbePlan.default()
    checks: list[LintCheck] = []
    mu0 = plan.base_measure
    pairs = plan.measure_pairs()

    def add(assumption, probe, margin, note=""):
        checks.append(
            LintCheck(assumption, probe, bool(margin >= -_MONO_TOL), float(margin), note)
        )

    # bhat increasing in p (at every probe x, base measure)
    m = min(
        _min_increment(np.asarray(spec.bhat(np.full_like(plan.ps, x), plan.ps, mu0)))
        for x in plan.xs
    )
    add("bhat_increasing_p", f"p in [{plan.ps[0]:g},{plan.ps[-1]:g}]", m)

    # bhat increasing in mu (comonotone-shift pairs)
    m = min(
        float(np.min(np.asarray(spec.bhat(plan.xs, p, mu2)) - np.asarray(spec.bhat(plan.xs, p, mu1))))
        for p in plan.ps
        for mu1, mu2 in pairs
    )
    add("bhat_increasing_mu", f"shifts {list(plan.shifts)}", m)

    # dpH increasing in p and in mu
    m = min(
        _min_increment(np.asarray(spec.dpH(np.full_like(plan.ps, x), plan.ps, mu0)))
        for x in plan.xs
    )
    add("dpH_increasing_p", f"p in [{plan.ps[0]:g},{plan.ps[-1]:g}]", m)
    m = min(
        float(np.min(np.asarray(spec.dpH(plan.xs, p, mu2)) - np.asarray(spec.dpH(plan.xs, p, mu1))))
        for p in plan.ps
        for mu1, mu2 in pairs
    )
    add("dpH_increasing_mu", f"shifts {list(plan.shifts)}", m)

    # dxG increasing in x and in mu
    m = _min_increment(np.asarray(spec.dxG(plan.xs, mu0)))
    add("dxG_increasing_x", f"x in [{plan.xs[0]:g},{plan.xs[-1]:g}]", m)
    m = min(
        float(np.min(np.asarray(spec.dxG(plan.xs, mu2)) - np.asarray(spec.dxG(plan.xs, mu1))))
        for mu1, mu2 in pairs
    )
    add("dxG_increasing_mu", f"shifts {list(plan.shifts)}", m)

    # |dxG| and |dxxG| bounded over the probe set only; the bound cannot be
    # uniform over all measures for rewards linear in the mean.
    dxg = np.asarray(spec.dxG(plan.xs, mu0))
    add(
        "dxG_bounded",
        f"|dxG| <= {plan.grad_bound:g}",
        plan.grad_bound - float(np.max(np.abs(dxg))),
        note="local probe bound only",
    )
    h = plan.fd_step
    dxxg = (np.asarray(spec.dxG(plan.xs + h, mu0)) - np.asarray(spec.dxG(plan.xs - h, mu0))) / (2 * h)
    add(
        "dxxG_bounded",
        f"|dxxG| <= {plan.grad_bound:g}",
        plan.grad_bound - float(np.max(np.abs(dxxg))),
        note="local probe bound only",
    )

    return LintReport(tuple(checks))
