# randomness.py – quick statistical checks on key-derived bits and hop indices
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from sim_modules.errors import DomainError, InsufficientDataError

MIN_SUITE_BITS = 100


@dataclass(frozen=True)
class RandomnessRecord:
    n_bits: int
    monobit_z: float
    runs_z: float
    serial_corr: float

    def p_values(self):
        """Two-sided normal p-values; an undefined statistic counts as p = 0."""
        serial_z = self.serial_corr * math.sqrt(self.n_bits)
        values = {}
        for name, z in (("monobit", self.monobit_z), ("runs", self.runs_z), ("serial", serial_z)):
            values[name] = float(2.0 * stats.norm.sf(abs(z))) if math.isfinite(z) else 0.0
        return values

    def passed(self, alpha=0.01):
        return all(p > alpha for p in self.p_values().values())

    def to_dict(self):
        record = asdict(self)
        record["p_values"] = self.p_values()
        return record


def randomness_suite(bits):
    """
    Monobit z-score, Wald–Wolfowitz runs-test z-score and lag-1 serial correlation.
    Statistics that are undefined for the input (e.g. a constant sequence) come back as NaN.
    """
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    if n < MIN_SUITE_BITS:
        raise InsufficientDataError(f"randomness suite needs at least {MIN_SUITE_BITS} bits, got {n}")

    ones = int(bits.sum())
    zeros = n - ones
    monobit_z = (2 * ones - n) / math.sqrt(n)

    runs = 1 + int(np.count_nonzero(np.diff(bits)))
    expected = 2.0 * ones * zeros / n + 1.0
    variance = (expected - 1.0) * (expected - 2.0) / (n - 1)
    runs_z = (runs - expected) / math.sqrt(variance) if variance > 0 else float("nan")

    centered = bits - bits.mean()
    denom = float(np.dot(centered, centered))
    serial_corr = float(np.dot(centered[:-1], centered[1:]) / denom) if denom > 0 else float("nan")

    return RandomnessRecord(n_bits=n, monobit_z=float(monobit_z), runs_z=float(runs_z), serial_corr=serial_corr)


@dataclass(frozen=True)
class UniformityResult:
    n_samples: int
    n_channels: int
    chi2: float
    dof: int
    p_value: float
    missing_channels: int


def index_uniformity(indices, n_channels):
    """Chi-square goodness of fit of hop indices against the uniform distribution over N bins."""
    indices = np.asarray(indices, dtype=np.int64)
    if n_channels < 2:
        raise DomainError("uniformity needs at least two channels")
    if indices.size == 0 or indices.min() < 0 or indices.max() >= n_channels:
        raise DomainError(f"indices must be non-empty and lie in 0..{n_channels - 1}")

    counts = np.bincount(indices, minlength=n_channels)
    chi2, p_value = stats.chisquare(counts)
    return UniformityResult(
        n_samples=int(indices.size),
        n_channels=int(n_channels),
        chi2=float(chi2),
        dof=int(n_channels - 1),
        p_value=float(p_value),
        missing_channels=int(np.count_nonzero(counts == 0)),
    )
