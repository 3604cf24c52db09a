"""Backward finite-difference solver for the value PDE under a frozen flow.

The diffusion term is treated implicitly with a Crank-Nicolson weight and
tridiagonal solves; the nonlinear drift term is explicit with a central
gradient and an upwind fallback.  Boundaries impose zero curvature (linear
tails), which is the least-committal truncation for a problem posed on the
whole line with a bounded value gradient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import AuditError, CflError, GridMismatchError, NonFiniteError
from .measures import EmpiricalMeasure, MeasureFlow
from .modelspec import ProblemSpec

__all__ = ["GridConfig", "GridFunction", "solve_hjb", "suggest_domain"]

_TIME_ATOL = 1e-9


@dataclass(frozen=True)
class GridConfig:
    """Uniform space-time lattice and scheme parameters.

    ``n_time_steps + 1`` time nodes on [t0, T], ``n_space_nodes + 1`` space
    nodes on [x_lo, x_hi].  ``theta`` is the implicitness weight of the
    diffusion term (0.5 = Crank-Nicolson, 1 = fully implicit, 0 = explicit).
    ``c1``/``c2`` are the configured gradient/curvature bounds.
    """

    t0: float
    T: float
    n_time_steps: int
    n_space_nodes: int
    x_lo: float
    x_hi: float
    theta: float = 0.5
    c1: float = 10.0
    c2: float = 100.0

    def __post_init__(self):
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")
        if self.n_time_steps < 1 or self.n_space_nodes < 2:
            raise ValueError("need at least 1 time step and 2 space intervals")
        if not self.x_hi > self.x_lo:
            raise ValueError("x_hi must exceed x_lo")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.n_time_steps + 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.n_space_nodes + 1)

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.n_time_steps

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_space_nodes


def suggest_domain(
    mu: EmpiricalMeasure, horizon: float, drift_bound: float, padding: float = 0.0
) -> tuple[float, float]:
    """Spatial domain covering the particle support plus Brownian spillover."""
    reach = 4.0 * np.sqrt(horizon) + drift_bound * horizon + padding
    return float(mu.samples[0] - reach), float(mu.samples[-1] + reach)


@dataclass(frozen=True)
class GridFunction:
    """Value and value-gradient lattices with bilinear interpolation.

    Queries beyond the spatial domain extrapolate the gradient as a constant
    (justified by the gradient bound) and the gradient is clamped to
    [-c1, c1].
    """

    times: np.ndarray
    xs: np.ndarray
    v: np.ndarray = field(repr=False)
    dxv: np.ndarray = field(repr=False)
    c1: float

    def __post_init__(self):
        for name in ("times", "xs", "v", "dxv"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.v.shape != (self.times.size, self.xs.size) or self.v.shape != self.dxv.shape:
            raise ValueError("lattice shapes inconsistent with grid")

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def _time_weights(self, t: float) -> tuple[int, float]:
        if t < self.t0 - _TIME_ATOL or t > self.T + _TIME_ATOL:
            raise ValueError(f"t={t} outside [{self.t0}, {self.T}]")
        s = (t - self.t0) / self.dt
        k = int(np.clip(np.floor(s), 0, self.times.size - 2))
        return k, float(s - k)

    def dxv_at_index(self, k: int, x) -> np.ndarray:
        """Gradient row ``k`` interpolated at ``x`` (clamped, constant tails)."""
        out = np.interp(x, self.xs, self.dxv[k])
        return np.clip(out, -self.c1, self.c1)

    def eval_dxv(self, t: float, x):
        """Bilinear interpolation of the gradient lattice at (t, x)."""
        k, w = self._time_weights(t)
        row = (1.0 - w) * self.dxv[k] + w * self.dxv[k + 1]
        out = np.interp(x, self.xs, row)
        out = np.clip(out, -self.c1, self.c1)
        return float(out) if np.isscalar(x) else out

    def eval_v(self, t: float, x):
        """Bilinear interpolation of the value lattice at (t, x)."""
        k, w = self._time_weights(t)
        row = (1.0 - w) * self.v[k] + w * self.v[k + 1]
        out = np.interp(x, self.xs, row)
        return float(out) if np.isscalar(x) else out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "v", "dxv"])
            for k, t in enumerate(self.times):
                for j, x in enumerate(self.xs):
                    writer.writerow(
                        [f"{t:.17g}", f"{x:.17g}", f"{self.v[k, j]:.17g}", f"{self.dxv[k, j]:.17g}"]
                    )


def _central_gradient(w: np.ndarray, dx: float) -> np.ndarray:
    g = np.empty_like(w)
    g[1:-1] = (w[2:] - w[:-2]) / (2.0 * dx)
    g[0] = (w[1] - w[0]) / dx
    g[-1] = (w[-1] - w[-2]) / dx
    return g


def _second_diff(w: np.ndarray, dx: float) -> np.ndarray:
    # boundary rows zero: zero-curvature (linear tail) condition
    d2 = np.zeros_like(w)
    d2[1:-1] = (w[2:] - 2.0 * w[1:-1] + w[:-2]) / (dx * dx)
    return d2


def solve_hjb(spec: ProblemSpec, nu: MeasureFlow, grid: GridConfig) -> GridFunction:
    """March the value PDE backward from the terminal reward under frozen ``nu``.

    The frozen flow must live on the same time grid.  Raises
    :class:`CflError` when the diffusion term is run explicitly with
    ``dt > dx**2``, and :class:`NonFiniteError` naming the first bad node if
    the march blows up.
    """
    times = grid.times
    if nu.times.size != times.size or not np.allclose(nu.times, times, rtol=0.0, atol=_TIME_ATOL):
        raise GridMismatchError("flow time grid does not match the solver grid")
    dt, dx, theta = grid.dt, grid.dx, grid.theta
    if theta == 0.0 and dt > dx * dx:
        raise CflError(
            f"explicit diffusion requires dt <= dx^2, got dt={dt:.6g} > dx^2={dx * dx:.6g}"
        )

    xs = grid.xs
    n_t, n_x = times.size, xs.size
    v = np.empty((n_t, n_x))
    v[-1] = np.asarray(spec.G(xs, nu.measure_at(n_t - 1)), dtype=float)

    if theta > 0.0:
        r = theta * dt / (2.0 * dx * dx)
        ab = np.zeros((3, n_x))
        ab[1, :] = 1.0
        ab[1, 1:-1] = 1.0 + 2.0 * r
        ab[0, 2:] = -r       # superdiagonal entries of rows 1..n_x-2
        ab[2, :-2] = -r      # subdiagonal entries of rows 1..n_x-2

    for k in range(n_t - 2, -1, -1):
        w = v[k + 1]
        mu_k1 = nu.measure_at(k + 1)
        grad = _central_gradient(w, dx)
        a = np.asarray(spec.dpH(xs, grad, mu_k1), dtype=float)
        fast = np.abs(a) * dt / dx > 1.0
        if np.any(fast):
            fwd = np.empty_like(w)
            fwd[:-1] = (w[1:] - w[:-1]) / dx
            fwd[-1] = fwd[-2]
            bwd = np.empty_like(w)
            bwd[1:] = (w[1:] - w[:-1]) / dx
            bwd[0] = bwd[1]
            grad = np.where(fast, np.where(a > 0.0, fwd, bwd), grad)
        hval = np.asarray(spec.H(xs, grad, mu_k1), dtype=float)
        rhs = w + dt * (0.5 * (1.0 - theta) * _second_diff(w, dx) + hval)
        v[k] = solve_banded((1, 1), ab, rhs) if theta > 0.0 else rhs
        if not np.all(np.isfinite(v[k])):
            j = int(np.flatnonzero(~np.isfinite(v[k]))[0])
            raise NonFiniteError(
                f"non-finite value at t={times[k]:.6g}, x={xs[j]:.6g} "
                f"(time index {k}, space index {j})"
            )

    dxv = np.gradient(v, dx, axis=1, edge_order=1)
    bound = grid.c1 + 10.0 * dx
    worst = float(np.max(np.abs(dxv)))
    if worst > bound:
        raise AuditError(
            f"value gradient bound violated: max |dxv| = {worst:.6g} > c1 + 10*dx = {bound:.6g}"
        )
    return GridFunction(times, xs, v, dxv, grid.c1)
