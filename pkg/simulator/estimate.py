"""Monte Carlo estimate container shared by the path, moment and benchmark modules."""

from dataclasses import dataclass
import math

import numpy as np

from common.constants import Z_95, SimulationError


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo mean with its standard error.

    Attributes:
        value: Sample mean.
        std_error: Standard error of the mean (0 for a deterministic estimate).
        n_paths: Number of simulated paths behind the estimate.
    """

    value: float
    std_error: float
    n_paths: int

    @property
    def ci95(self) -> tuple[float, float]:
        """Two-sided 95% normal confidence interval."""
        half = Z_95 * self.std_error
        return (self.value - half, self.value + half)

    def covers(self, x: float, z: float = Z_95) -> bool:
        """True when x lies within z standard errors of the estimate."""
        return abs(x - self.value) <= z * self.std_error

    def agrees_with(self, other: "McEstimate", z: float = Z_95) -> bool:
        """True when two independent estimates differ by less than z joint standard errors."""
        joint = math.hypot(self.std_error, other.std_error)
        return abs(self.value - other.value) <= z * joint


def fold_pairs(values: np.ndarray, antithetic: bool) -> np.ndarray:
    """Average antithetic pairs (paths 2i and 2i+1); identity otherwise."""
    values = np.asarray(values, dtype=float)
    if not antithetic:
        return values
    if values.shape[0] % 2:
        raise SimulationError("An antithetic batch must hold an even number of paths.")
    return values.reshape(-1, 2, *values.shape[1:]).mean(axis=1)


def estimate_from_samples(values: np.ndarray, antithetic: bool) -> McEstimate:
    """Mean and standard error of per-path samples, folding antithetic pairs first."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise SimulationError("Cannot estimate from an empty batch.")
    folded = fold_pairs(values, antithetic)
    n = folded.shape[0]
    std_error = float(np.std(folded, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(value=float(np.mean(values)), std_error=std_error, n_paths=int(values.shape[0]))
