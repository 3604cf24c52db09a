"""Euler-Maruyama particle simulation under pinned common random numbers.

The Brownian increments are drawn once per scenario from a counter-based
generator and reused across every simulation of a Picard run, which turns the
distributional order statements of the theory into pathwise, per-particle
checks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GridMismatchError, NonFiniteError
from .hjb import GridFunction
from .measures import EmpiricalMeasure, MeasureFlow
from .modelspec import ProblemSpec

__all__ = ["PinnedNoise", "make_noise", "ParticleEnsemble", "euler_paths", "simulate", "pushforward"]

_TIME_ATOL = 1e-9


@dataclass(frozen=True)
class PinnedNoise:
    """Brownian increments, N particles by M steps, fixed for a whole run."""

    increments: np.ndarray = field(repr=False)
    dt: float
    seed: object = None
    antithetic: bool = False

    def __post_init__(self):
        arr = np.asarray(self.increments, dtype=float)
        if arr.ndim != 2:
            raise ValueError("increments must be (n_particles, n_steps)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("increments must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "increments", arr)

    @property
    def n_particles(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    def cumulative(self) -> np.ndarray:
        """Brownian path values at the grid nodes, zero at the start."""
        out = np.zeros((self.n_particles, self.n_steps + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out


def make_noise(
    seed, n_particles: int, n_steps: int, dt: float, antithetic: bool = True
) -> PinnedNoise:
    """Draw pinned increments from a Philox stream keyed by ``seed``.

    With ``antithetic`` the particles are mirrored in pairs, which removes
    the Monte Carlo error of ensemble means for state-independent drifts.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    scale = np.sqrt(dt)
    if antithetic:
        if n_particles % 2:
            raise ValueError("antithetic noise requires an even particle count")
        half = rng.standard_normal((n_particles // 2, n_steps)) * scale
        inc = np.concatenate([half, -half], axis=0)
    else:
        inc = rng.standard_normal((n_particles, n_steps)) * scale
    return PinnedNoise(inc, float(dt), seed=seed, antithetic=antithetic)


@dataclass(frozen=True)
class ParticleEnsemble:
    """Particle paths on a uniform grid, first column sorted ascending."""

    times: np.ndarray
    paths: np.ndarray = field(repr=False)
    noise: PinnedNoise

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        paths = np.asarray(self.paths, dtype=float)
        if paths.shape != (paths.shape[0], times.size):
            raise ValueError("paths must be (n_particles, len(times))")
        if np.any(np.diff(paths[:, 0]) < 0):
            raise ValueError("initial column must be sorted ascending")
        times.flags.writeable = False
        paths.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "paths", paths)

    @property
    def n_particles(self) -> int:
        return self.paths.shape[0]

    @property
    def t0(self) -> float:
        return float(self.times[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["particle", "time_index", "value"])
            for i in range(self.n_particles):
                for k in range(self.times.size):
                    writer.writerow([i, k, f"{self.paths[i, k]:.17g}"])


def euler_paths(
    drift: Callable[[int, np.ndarray], np.ndarray],
    init: np.ndarray,
    noise: PinnedNoise,
) -> np.ndarray:
    """Explicit Euler recursion ``x += drift(k, x)*dt + dB_k`` for all particles.

    ``drift`` receives the step index and the current state vector.  Raises
    :class:`NonFiniteError` naming the first offending particle and step.
    """
    init = np.asarray(init, dtype=float)
    if init.shape != (noise.n_particles,):
        raise GridMismatchError(
            f"init has {init.size} samples but noise carries {noise.n_particles} particles"
        )
    n, m = noise.n_particles, noise.n_steps
    paths = np.empty((n, m + 1))
    x = init.copy()
    paths[:, 0] = x
    dt = noise.dt
    for k in range(m):
        b = np.asarray(drift(k, x), dtype=float)
        if b.shape == ():
            b = np.full(n, float(b))
        bad = ~np.isfinite(b)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonFiniteError(f"non-finite drift at step {k}, particle {i} (state {x[i]!r})")
        x = x + b * dt + noise.increments[:, k]
        bad = ~np.isfinite(x)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NonFiniteError(f"non-finite state at step {k + 1}, particle {i}")
        paths[:, k + 1] = x
    return paths


def simulate(
    spec: ProblemSpec,
    gf: GridFunction,
    nu: MeasureFlow,
    init: EmpiricalMeasure,
    noise: PinnedNoise,
) -> ParticleEnsemble:
    """Simulate the controlled state equation with drift ``bhat(x, dxv, nu_t)``.

    The value gradient comes from ``gf`` (solved under the same frozen flow
    ``nu``), evaluated at the current grid time; no temporal interpolation is
    needed because the simulation reuses the solver grid.
    """
    times = gf.times
    if nu.times.size != times.size or not np.allclose(nu.times, times, rtol=0.0, atol=_TIME_ATOL):
        raise GridMismatchError("frozen flow grid does not match the value grid")
    if noise.n_steps != times.size - 1:
        raise GridMismatchError(
            f"noise has {noise.n_steps} steps but the grid has {times.size - 1}"
        )
    if abs(noise.dt - gf.dt) > _TIME_ATOL:
        raise GridMismatchError("noise step size does not match the grid")
    if init.n != noise.n_particles:
        raise GridMismatchError(
            f"init has {init.n} samples but noise carries {noise.n_particles} particles"
        )

    def drift(k: int, x: np.ndarray) -> np.ndarray:
        p = gf.dxv_at_index(k, x)
        return np.asarray(spec.bhat(x, p, nu.measure_at(k)), dtype=float)

    paths = euler_paths(drift, init.samples, noise)
    return ParticleEnsemble(times, paths, noise)


def pushforward(ens: ParticleEnsemble) -> MeasureFlow:
    """Empirical law flow of the ensemble: every time slice sorted ascending."""
    return MeasureFlow(ens.times, np.sort(ens.paths.T, axis=1))
