"""Exception hierarchy shared across the solver modules."""


class EmfgError(Exception):
    """Base class for all errors raised by this package."""


class GridMismatchError(EmfgError):
    """Sample counts or time/space grids of two objects do not line up."""


class CflError(EmfgError):
    """Step sizes violate the stability constraint of the selected scheme."""


class NonFiniteError(EmfgError):
    """A NaN or infinity appeared during a numerical march."""


class AuditError(EmfgError):
    """A run-time invariant audit failed (ordering, bounds, sandwich)."""


class MonotoneAuditError(AuditError):
    """Successive Picard iterates violated the expected pathwise ordering."""

    def __init__(self, iteration: int, time_index: int, particle: int, gap: float):
        self.iteration = iteration
        self.time_index = time_index
        self.particle = particle
        self.gap = gap
        super().__init__(
            f"monotone iteration audit failed at iteration {iteration}, "
            f"time index {time_index}, particle {particle} (gap {gap:.3e})"
        )


class CaseConsistencyError(EmfgError):
    """Closed-form case classification is inconsistent (e.g. negative discriminant)."""


class ConfigError(EmfgError):
    """Scenario configuration could not be parsed or validated."""
