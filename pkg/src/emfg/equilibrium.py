"""Nash field, fixed-point residual, and the monotone Picard constructions.

The minimal (maximal) equilibrium is reached by iterating the Nash field from
an ensemble shifted a bounded-drift offset below (above) the initial samples.
Under pinned noise each iterate must dominate its predecessor particle by
particle and step by step; that ordering is audited exactly on every
iteration and a violation aborts the run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import AuditError, MonotoneAuditError
from .forward import ParticleEnsemble, PinnedNoise, make_noise, pushforward, simulate
from .hjb import GridConfig, GridFunction, solve_hjb, suggest_domain
from .measures import EmpiricalMeasure, MeasureFlow
from .modelspec import ProblemSpec

__all__ = [
    "PicardConfig",
    "PicardTrace",
    "nash_field",
    "mfe_residual",
    "picard_iterate",
    "minimal_mfe",
    "maximal_mfe",
    "FlowCheckReport",
    "flow_property_check",
]

FROM_BELOW = "from-below"
FROM_ABOVE = "from-above"


@dataclass(frozen=True)
class PicardConfig:
    """Iteration budget, tolerances, and the extreme-seed drift offset.

    ``drift_bound`` is the seed offset L; when unset it defaults to
    ``spec.drift_sup * max(1, T - t0)``, the smallest constant offset that
    stays below (above) every Nash-field output over the whole horizon.
    """

    max_iter: int = 100
    tau_picard: float = 1e-3
    tau_mfe: float = 5e-3
    drift_bound: float | None = None
    stall_window: int = 5
    stall_rel_improvement: float = 0.01
    store_iterates: str = "ends"  # "ends" keeps seed and final pair, "all" keeps every iterate

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tau_picard <= 0 or self.tau_mfe <= 0:
            raise ValueError("tolerances must be positive")
        if self.store_iterates not in ("ends", "all"):
            raise ValueError("store_iterates must be 'ends' or 'all'")

    def resolve_offset(self, spec: ProblemSpec, horizon: float) -> float:
        if self.drift_bound is not None:
            return float(self.drift_bound)
        if spec.drift_sup is None:
            raise ValueError(
                f"problem {spec.name!r} has no drift_sup; set PicardConfig.drift_bound"
            )
        return float(spec.drift_sup) * max(1.0, float(horizon))


@dataclass
class PicardTrace:
    """Record of one monotone Picard run.

    ``residuals[n]`` is the sup-over-time Wasserstein distance between
    iterates n and n+1; ``audit_margins[n]`` is the worst per-particle,
    per-step gap of the ordering between them (>= 0 when the audit passed,
    NaN when no direction was audited).  ``flows``/``grids`` retain the
    iterate pairs selected by the storage policy (indices in
    ``retained_indices``).
    """

    direction: str
    residuals: list[float]
    means_at_T: list[float]
    audit_margins: list[float]
    iterations_used: int
    converged: bool
    stalled: bool
    final_flow: MeasureFlow
    final_grid: GridFunction
    final_ensemble: ParticleEnsemble | None
    flows: list[MeasureFlow] = field(repr=False, default_factory=list)
    grids: list[GridFunction] = field(repr=False, default_factory=list)
    retained_indices: list[int] = field(default_factory=list)

    @property
    def iterates(self) -> list[tuple[MeasureFlow, GridFunction]]:
        return list(zip(self.flows, self.grids))

    def summary_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "residual", "mean_at_T"])
            for n, m_T in enumerate(self.means_at_T):
                res = f"{self.residuals[n - 1]:.17g}" if 1 <= n <= len(self.residuals) else ""
                writer.writerow([n, res, f"{m_T:.17g}"])


def _flow_distance(a: MeasureFlow, b: MeasureFlow) -> float:
    """sup over grid times of the slice Wasserstein distances."""
    d = a.values - b.values
    return float(np.sqrt(np.mean(d * d, axis=1)).max())


def nash_field(
    spec: ProblemSpec,
    grid: GridConfig,
    mu: EmpiricalMeasure,
    nu: MeasureFlow,
    noise: PinnedNoise,
) -> MeasureFlow:
    """One response step: solve the value PDE under frozen ``nu``, simulate
    from ``mu`` with the induced drift, and push the particles forward."""
    gf = solve_hjb(spec, nu, grid)
    ens = simulate(spec, gf, nu, mu, noise)
    return pushforward(ens)


def mfe_residual(
    spec: ProblemSpec,
    grid: GridConfig,
    mu: EmpiricalMeasure,
    nu: MeasureFlow,
    noise: PinnedNoise,
) -> float:
    """Fixed-point defect of ``nu``: sup_t W2 between the response and ``nu``."""
    return _flow_distance(nash_field(spec, grid, mu, nu, noise), nu)


def _audit_ordering(prev: np.ndarray, curr: np.ndarray, direction: str, iteration: int) -> float:
    """Exact per-particle ordering check between successive iterates."""
    gaps = curr - prev if direction == FROM_BELOW else prev - curr
    margin = float(gaps.min())
    if margin < 0.0:
        flat = int(np.argmin(gaps))
        particle, time_index = np.unravel_index(flat, gaps.shape)
        raise MonotoneAuditError(iteration, int(time_index), int(particle), margin)
    return margin


def picard_iterate(
    spec: ProblemSpec,
    grid: GridConfig,
    mu: EmpiricalMeasure,
    cfg: PicardConfig,
    noise: PinnedNoise,
    seed_paths: np.ndarray,
    direction: str | None = None,
) -> PicardTrace:
    """Iterate the Nash field from an explicit seed ensemble.

    ``direction`` selects the exact pathwise ordering audited between
    successive iterates (None skips the audit, for seeds that are not
    extreme).  Non-convergence within the budget is reported on the trace,
    not raised.
    """
    seed_paths = np.asarray(seed_paths, dtype=float)
    ens = ParticleEnsemble(grid.times, seed_paths, noise)
    flow = pushforward(ens)

    residuals: list[float] = []
    means: list[float] = [float(flow.values[-1].mean())]
    margins: list[float] = []
    flows: list[MeasureFlow] = []
    grids: list[GridFunction] = []
    retained: list[int] = []
    keep_all = cfg.store_iterates == "all"

    prev_paths = seed_paths
    converged = False
    stalled = False
    iterations = 0
    gf = None
    for n in range(cfg.max_iter):
        gf = solve_hjb(spec, flow, grid)
        if keep_all or n == 0:
            flows.append(flow)
            grids.append(gf)
            retained.append(n)
        ens = simulate(spec, gf, flow, mu, noise)
        if direction in (FROM_BELOW, FROM_ABOVE):
            margins.append(_audit_ordering(prev_paths, ens.paths, direction, n + 1))
        else:
            margins.append(float("nan"))
        new_flow = pushforward(ens)
        residuals.append(_flow_distance(new_flow, flow))
        means.append(float(new_flow.values[-1].mean()))
        prev_paths = ens.paths
        flow = new_flow
        iterations = n + 1
        if residuals[-1] <= cfg.tau_picard:
            converged = True
            break
        w = cfg.stall_window
        if len(residuals) > w and residuals[-1] > residuals[-1 - w] * (1.0 - cfg.stall_rel_improvement):
            stalled = True
            break

    final_grid = solve_hjb(spec, flow, grid)
    flows.append(flow)
    grids.append(final_grid)
    retained.append(iterations)

    return PicardTrace(
        direction=direction or "free",
        residuals=residuals,
        means_at_T=means,
        audit_margins=margins,
        iterations_used=iterations,
        converged=converged,
        stalled=stalled,
        final_flow=flow,
        final_grid=final_grid,
        final_ensemble=ens,
        flows=flows,
        grids=grids,
        retained_indices=retained,
    )


def _extreme_seed_paths(
    mu: EmpiricalMeasure, noise: PinnedNoise, offset: float
) -> np.ndarray:
    """Seed ensemble: initial samples shifted by ``offset`` plus the pinned
    Brownian paths (drift-free)."""
    return mu.samples[:, None] + offset + noise.cumulative()


def minimal_mfe(
    spec: ProblemSpec,
    grid: GridConfig,
    mu: EmpiricalMeasure,
    cfg: PicardConfig,
    noise: PinnedNoise,
) -> PicardTrace:
    """Monotone iteration from below; the limit is the minimal equilibrium."""
    offset = cfg.resolve_offset(spec, grid.T - grid.t0)
    seed = _extreme_seed_paths(mu, noise, -offset)
    return picard_iterate(spec, grid, mu, cfg, noise, seed, direction=FROM_BELOW)


def maximal_mfe(
    spec: ProblemSpec,
    grid: GridConfig,
    mu: EmpiricalMeasure,
    cfg: PicardConfig,
    noise: PinnedNoise,
) -> PicardTrace:
    """Monotone iteration from above; the limit is the maximal equilibrium."""
    offset = cfg.resolve_offset(spec, grid.T - grid.t0)
    seed = _extreme_seed_paths(mu, noise, +offset)
    return picard_iterate(spec, grid, mu, cfg, noise, seed, direction=FROM_ABOVE)


@dataclass(frozen=True)
class FlowCheckReport:
    """Restart-consistency report for the minimal equilibrium."""

    t0: float
    t1: float
    discrepancy: float
    noise_floor: float
    tau_flow: float
    passed: bool
    base_converged: bool
    restart_converged: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["t0", "t1", "discrepancy", "noise_floor", "tau_flow", "passed",
                 "base_converged", "restart_converged"]
            )
            writer.writerow(
                [f"{self.t0:.17g}", f"{self.t1:.17g}", f"{self.discrepancy:.17g}",
                 f"{self.noise_floor:.17g}", f"{self.tau_flow:.17g}", int(self.passed),
                 int(self.base_converged), int(self.restart_converged)]
            )


def flow_property_check(
    spec: ProblemSpec,
    grid: GridConfig,
    mu: EmpiricalMeasure,
    cfg: PicardConfig,
    t1: float,
    seed,
    antithetic: bool = True,
    padding: float = 0.0,
) -> FlowCheckReport:
    """Restart the minimal-equilibrium construction at ``t1`` from the slice
    the base run reaches there, with fresh noise, and compare the tails.

    The pass threshold is three times the Monte Carlo noise floor, estimated
    as the sup-W2 spread between two independent-seed replicas of the
    restart.  ``t1 == t0`` degenerates to the base run itself (discrepancy 0).
    """
    ss = np.random.SeedSequence(seed)
    base_key, key_a, key_b = ss.spawn(3)
    n = mu.n
    noise = make_noise(base_key, n, grid.n_time_steps, grid.dt, antithetic=antithetic)
    base = minimal_mfe(spec, grid, mu, cfg, noise)

    k1 = int(np.argmin(np.abs(grid.times - t1)))
    if abs(grid.times[k1] - t1) > 1e-9:
        raise ValueError(f"t1={t1} is not a grid time")
    if k1 == grid.n_time_steps:
        raise ValueError("t1 must be strictly before T")
    if k1 == 0:
        return FlowCheckReport(
            t0=grid.t0, t1=grid.t0, discrepancy=0.0, noise_floor=0.0, tau_flow=0.0,
            passed=True, base_converged=base.converged, restart_converged=base.converged,
        )

    mu1 = base.final_flow.measure_at(k1)
    offset = cfg.resolve_offset(spec, grid.T - grid.t0)
    lo, hi = suggest_domain(mu1, grid.T - t1, offset, padding)
    restart_grid = GridConfig(
        t0=float(grid.times[k1]), T=grid.T,
        n_time_steps=grid.n_time_steps - k1, n_space_nodes=grid.n_space_nodes,
        x_lo=lo, x_hi=hi, theta=grid.theta, c1=grid.c1, c2=grid.c2,
    )
    m_rest = restart_grid.n_time_steps
    rest_a = minimal_mfe(
        spec, restart_grid, mu1, cfg, make_noise(key_a, n, m_rest, restart_grid.dt, antithetic)
    )
    rest_b = minimal_mfe(
        spec, restart_grid, mu1, cfg, make_noise(key_b, n, m_rest, restart_grid.dt, antithetic)
    )

    tail = base.final_flow.values[k1:]
    d = tail - rest_a.final_flow.values
    discrepancy = float(np.sqrt(np.mean(d * d, axis=1)).max())
    d = rest_a.final_flow.values - rest_b.final_flow.values
    floor = float(np.sqrt(np.mean(d * d, axis=1)).max())
    tau_flow = 3.0 * floor
    return FlowCheckReport(
        t0=grid.t0, t1=float(grid.times[k1]), discrepancy=discrepancy,
        noise_floor=floor, tau_flow=tau_flow, passed=bool(discrepancy <= tau_flow),
        base_converged=base.converged,
        restart_converged=rest_a.converged and rest_b.converged,
    )
