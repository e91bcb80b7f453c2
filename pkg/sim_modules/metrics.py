# metrics.py – swept-parameter results and their CSV form
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "swept_param", "value_us", "hop_interval_us", "metric",
    "mean", "ci95_low", "ci95_high", "peak_over_phase", "trials", "seed",
]
METHOD_COLUMN = "method"
Z95 = 1.96

DETECT_METRIC = "detect_prob"
SER_METRIC = "ser"


@dataclass(frozen=True)
class MetricRow:
    swept_param: str
    value_us: int
    hop_interval_us: int
    metric: str
    mean: float
    ci95_low: float
    ci95_high: float
    peak_over_phase: float
    trials: int
    seed: int
    std_error: float = 0.0
    method: str = None
    degenerate_ci: bool = False


def summarize_trials(values):
    """
    Mean and normal-approximation 95% CI over per-trial estimates.
    Returns (mean, std_error, low, high, degenerate); one trial collapses the CI to the point.
    """
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if values.size < 2:
        return mean, 0.0, mean, mean, True
    std_error = float(values.std(ddof=1) / math.sqrt(values.size))
    return mean, std_error, mean - Z95 * std_error, mean + Z95 * std_error, False


@dataclass
class MetricSeries:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def has_method(self):
        return any(row.method is not None for row in self.rows)

    def extend(self, other):
        self.rows.extend(other.rows)
        return self

    def to_frame(self):
        columns = CSV_COLUMNS + ([METHOD_COLUMN] if self.has_method else [])
        return pd.DataFrame([asdict(row) for row in self.rows], columns=columns)

    def write_csv(self, path):
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        degenerate = [row.value_us for row in self.rows if row.degenerate_ci]
        if degenerate:
            logger.warning("%s: single-trial rows have a degenerate CI at values %s", path, degenerate)
        logger.info("wrote %d rows to %s", len(self.rows), path)


def read_series_csv(path):
    """Reads a measured or ideal series CSV back as a DataFrame; a file missing any series column is rejected."""
    df = pd.read_csv(path)
    missing = [col for col in CSV_COLUMNS if col not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return df
