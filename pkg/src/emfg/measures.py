"""Empirical measures on the real line and the stochastic-dominance order.

A measure is a uniform-weight sample vector kept sorted; a flow attaches one
such measure to every node of a uniform time grid.  On the line the quantile
coupling is optimal, so the 2-Wasserstein distance and the dominance check
both reduce to order-statistic comparisons and require equal sample counts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError

__all__ = [
    "EmpiricalMeasure",
    "MeasureFlow",
    "mean",
    "wasserstein2",
    "dominates",
    "flow_dominates",
    "resample",
]

_TIME_ATOL = 1e-9


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform-weight probability measure given by sorted finite samples."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("samples must be a non-empty 1-d array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if np.any(np.diff(arr) < 0):
            raise ValueError("samples must be sorted ascending")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_samples(cls, values) -> "EmpiricalMeasure":
        """Build a measure from unsorted values (stable sort, ties preserved)."""
        arr = np.sort(np.asarray(values, dtype=float), kind="stable")
        return cls(arr)

    @property
    def n(self) -> int:
        return self.samples.size

    def shift(self, c: float) -> "EmpiricalMeasure":
        """Translate every sample by ``c``."""
        return EmpiricalMeasure(self.samples + c)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["value"])
            for v in self.samples:
                writer.writerow([f"{v:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalMeasure":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls.from_samples([float(r[0]) for r in rows[1:]])


@dataclass(frozen=True)
class MeasureFlow:
    """One empirical measure per node of a uniform time grid.

    ``values[k]`` holds the sorted samples of the measure at ``times[k]``;
    all rows share the same sample count.
    """

    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("times must contain at least two grid points")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=_TIME_ATOL):
            raise ValueError("times must be uniformly spaced")
        if values.shape != (times.size, values.shape[1]) or values.shape[1] < 1:
            raise ValueError("values must be (len(times), n_samples)")
        if not np.all(np.isfinite(values)):
            raise ValueError("flow values must be finite")
        if np.any(np.diff(values, axis=1) < 0):
            raise ValueError("each time slice must be sorted ascending")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def measure_at(self, k: int) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.values[k])

    @property
    def measures(self) -> list[EmpiricalMeasure]:
        return [self.measure_at(k) for k in range(self.times.size)]

    def means(self) -> np.ndarray:
        """Mean of every time slice."""
        return self.values.mean(axis=1)

    @classmethod
    def constant(cls, times, mu: EmpiricalMeasure) -> "MeasureFlow":
        """Flow frozen at ``mu`` on the given grid."""
        times = np.asarray(times, dtype=float)
        return cls(times, np.tile(mu.samples, (times.size, 1)))

    def restrict(self, k: int) -> "MeasureFlow":
        """Sub-flow on ``times[k:]``."""
        return MeasureFlow(self.times[k:], self.values[k:])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_index", "time", "sample_index", "value"])
            for k, t in enumerate(self.times):
                for i, v in enumerate(self.values[k]):
                    writer.writerow([k, f"{t:.17g}", i, f"{v:.17g}"])


def mean(mu: EmpiricalMeasure) -> float:
    """Arithmetic mean of the samples (the mean functional of the measure)."""
    return float(np.mean(mu.samples))


def _check_equal_n(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> None:
    if mu1.n != mu2.n:
        raise GridMismatchError(
            f"sample counts differ ({mu1.n} vs {mu2.n}); resample one measure first"
        )


def wasserstein2(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> float:
    """2-Wasserstein distance via the quantile coupling (equal sample counts)."""
    _check_equal_n(mu1, mu2)
    diff = mu1.samples - mu2.samples
    return float(np.sqrt(np.mean(diff * diff)))


def dominates(mu1: EmpiricalMeasure, mu2: EmpiricalMeasure) -> bool:
    """True iff ``mu1`` is below ``mu2`` in first-order stochastic dominance.

    On the line the quantile coupling witnesses the ordered coupling, so the
    check is order-statistic-wise ``<=`` (non-strict).
    """
    _check_equal_n(mu1, mu2)
    return bool(np.all(mu1.samples <= mu2.samples))


def flow_dominates(nu1: MeasureFlow, nu2: MeasureFlow) -> bool:
    """True iff dominance holds at every grid time of the two flows."""
    if nu1.values.shape != nu2.values.shape:
        raise GridMismatchError(
            f"flow shapes differ ({nu1.values.shape} vs {nu2.values.shape})"
        )
    if not np.allclose(nu1.times, nu2.times, rtol=0.0, atol=_TIME_ATOL):
        raise GridMismatchError("flow time grids differ")
    return bool(np.all(nu1.values <= nu2.values))


def resample(mu: EmpiricalMeasure, n: int) -> EmpiricalMeasure:
    """Inverse-CDF resampling at uniform quantile midpoints ``(i + 1/2)/n``.

    With ``n == mu.n`` this is the identity, which keeps the quantile coupling
    exact for measures that already share a sample count.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    q = (np.arange(n) + 0.5) / n
    idx = np.ceil(q * mu.n).astype(int) - 1
    idx = np.clip(idx, 0, mu.n - 1)
    return EmpiricalMeasure(mu.samples[idx])
