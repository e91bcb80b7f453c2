# hopplan.py – turns delivered key bytes into the hop schedule shared by transmitter and receiver
# Each key byte is one hop: index = byte mod N, looked up in the channel table for its frequency.
# Times are integer microseconds throughout so 5 ms and 1 ms intervals stay exact.

import functools
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from sim_modules.errors import DomainError, EmptyScheduleError

logger = logging.getLogger(__name__)

MAX_CHANNELS = 256
DEFAULT_BASE_FREQ_HZ = 2.400e9
DEFAULT_SPACING_HZ = 1.0e6
DEFAULT_N_CHANNELS = 128

TABLE_COLUMNS = ["index", "freq_hz"]
SCHEDULE_COLUMNS = ["start_us", "duration_us", "index", "freq_hz"]


@dataclass(frozen=True, eq=False)
class ChannelPlan:
    base_freq_hz: float
    spacing_hz: float
    n_channels: int
    table: np.ndarray

    def frequency(self, index):
        return float(self.table[index])

    def nearest_index(self, freq_hz):
        """Quantizes a frequency to the closest channel in the table."""
        pos = int(np.searchsorted(self.table, freq_hz))
        if pos == 0:
            return 0
        if pos >= self.n_channels:
            return self.n_channels - 1
        below, above = self.table[pos - 1], self.table[pos]
        return pos - 1 if freq_hz - below <= above - freq_hz else pos

    def to_frame(self):
        return pd.DataFrame({"index": np.arange(self.n_channels), "freq_hz": self.table})


def _check_channel_count(n_channels):
    if not 1 <= int(n_channels) <= MAX_CHANNELS:
        raise DomainError(f"n_channels must be in 1..{MAX_CHANNELS} (one key byte per hop), got {n_channels}")


def build_channel_table(base_freq_hz=DEFAULT_BASE_FREQ_HZ, spacing_hz=DEFAULT_SPACING_HZ,
                        n_channels=DEFAULT_N_CHANNELS):
    """
    Uniform channel grid: table[i] = base_freq_hz + i·spacing_hz.
    This is the lookup that interprets each hop index as a center frequency.
    """
    _check_channel_count(n_channels)
    if spacing_hz <= 0:
        raise DomainError(f"spacing_hz must be positive, got {spacing_hz}")
    table = float(base_freq_hz) + np.arange(int(n_channels), dtype=np.float64) * float(spacing_hz)
    return ChannelPlan(base_freq_hz=float(base_freq_hz), spacing_hz=float(spacing_hz),
                       n_channels=int(n_channels), table=table)


def load_channel_table(path):
    """
    Loads an explicit table from CSV with header `index,freq_hz` (indices 0..N-1, contiguous).
    Non-uniform tables are allowed; spacing_hz then reports the smallest gap.
    """
    df = pd.read_csv(path)
    if list(df.columns) != TABLE_COLUMNS:
        raise DomainError(f"{path}: expected header {','.join(TABLE_COLUMNS)}, got {','.join(map(str, df.columns))}")

    df = df.sort_values("index")
    indices = df["index"].to_numpy()
    _check_channel_count(len(indices))
    if not np.array_equal(indices, np.arange(len(indices))):
        raise DomainError(f"{path}: indices must be 0..{len(indices) - 1} without gaps")

    table = df["freq_hz"].to_numpy(dtype=np.float64)
    gaps = np.diff(table)
    if np.any(gaps <= 0):
        raise DomainError(f"{path}: frequencies must be strictly increasing")

    spacing = float(gaps.min()) if gaps.size else 1.0
    return ChannelPlan(base_freq_hz=float(table[0]), spacing_hz=spacing, n_channels=len(table), table=table)


def save_channel_table(plan, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    plan.to_frame().to_csv(path, index=False)


def index_bias_ratio(n_channels):
    """Max/min bin probability of byte mod N for uniform bytes; 1.0 exactly when N divides 256."""
    _check_channel_count(n_channels)
    return -(-MAX_CHANNELS // n_channels) / (MAX_CHANNELS // n_channels)


@functools.lru_cache(maxsize=None)
def _warn_bias(n_channels):
    logger.warning("N=%d does not divide 256: byte mod N is biased (max/min bin ratio %.4f)",
                   n_channels, index_bias_ratio(n_channels))


@dataclass(frozen=True, eq=False)
class HopSchedule:
    starts: np.ndarray
    durations: np.ndarray
    indices: np.ndarray
    hop_interval_us: int

    def __len__(self):
        return int(self.indices.size)

    @property
    def start_us(self):
        return int(self.starts[0])

    @property
    def end_us(self):
        return int(self.starts[-1] + self.durations[-1])

    @property
    def span_us(self):
        return self.end_us - self.start_us

    @property
    def entries(self):
        return list(zip(self.starts.tolist(), self.durations.tolist(), self.indices.tolist()))

    def index_at(self, times_us):
        """Channel index in use at each instant (times must fall inside the schedule)."""
        hop = (np.asarray(times_us, dtype=np.int64) - self.start_us) // self.hop_interval_us
        return self.indices[hop]

    def to_frame(self, plan):
        return pd.DataFrame({
            "start_us": self.starts,
            "duration_us": self.durations,
            "index": self.indices,
            "freq_hz": plan.table[self.indices],
        })


def derive_hop_schedule(key_octets, plan, hop_interval_us, start_us=0):
    octets = np.frombuffer(bytes(key_octets), dtype=np.uint8)
    if octets.size == 0:
        raise EmptyScheduleError("cannot derive a hop schedule from an empty key")
    if int(hop_interval_us) <= 0:
        raise DomainError(f"hop_interval_us must be positive, got {hop_interval_us}")
    if MAX_CHANNELS % plan.n_channels:
        _warn_bias(plan.n_channels)

    hop_interval_us = int(hop_interval_us)
    count = octets.size
    return HopSchedule(
        starts=int(start_us) + np.arange(count, dtype=np.int64) * hop_interval_us,
        durations=np.full(count, hop_interval_us, dtype=np.int64),
        indices=octets.astype(np.int64) % plan.n_channels,
        hop_interval_us=hop_interval_us,
    )


@dataclass(frozen=True)
class SyncReport:
    full_match: bool
    entry: int = None
    field: str = None

    def to_dict(self):
        return {"full_match": self.full_match, "entry": self.entry, "field": self.field}


def verify_sync(tx, rx):
    """
    Compares two schedules and reports the first divergence (entry, field), or a full match.
    """
    if tx.hop_interval_us != rx.hop_interval_us:
        return SyncReport(full_match=False, entry=None, field="hop_interval_us")

    common = min(len(tx), len(rx))
    first = None
    for field, a, b in (("start_us", tx.starts, rx.starts),
                        ("duration_us", tx.durations, rx.durations),
                        ("index", tx.indices, rx.indices)):
        diff = np.flatnonzero(a[:common] != b[:common])
        if diff.size and (first is None or diff[0] < first[0]):
            first = (int(diff[0]), field)

    if first is not None:
        return SyncReport(full_match=False, entry=first[0], field=first[1])
    if len(tx) != len(rx):
        return SyncReport(full_match=False, entry=common, field="length")
    return SyncReport(full_match=True)


def dump_schedule_csv(schedule, plan, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    schedule.to_frame(plan).to_csv(path, index=False)
    logger.info("wrote %d hop entries to %s", len(schedule), path)
