# airsim.py – discrete-time FHSS link with a synchronized receiver, a spectral-peak eavesdropper
# and a narrowband jammer. Produces the measured detection-probability and symbol-error curves.

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from tqdm import tqdm

from sim_modules.errors import DomainError, QkdFhssError, SweepPointError
from sim_modules.hopplan import build_channel_table, derive_hop_schedule
from sim_modules.metrics import DETECT_METRIC, SER_METRIC, MetricRow, MetricSeries, summarize_trials
from sim_modules.seeds import trial_seed

logger = logging.getLogger(__name__)

DEFAULT_SYMBOL_DURATION_US = 500
DEFAULT_SIR_DB = -20.0  # jammer ~20 dB above the hopping signal; recorded only

SAMPLING_MODES = ("random", "contiguous")
JAM_STRATEGIES = ("uniform_random", "sweep", "follow")
SWEPT_PARAMS = ("detection_period_us", "jamming_period_us")

# rows per vectorised batch; bounds the (batch x channels) energy matrix
_BATCH = 4096


@dataclass(frozen=True)
class SymbolConfig:
    symbol_duration_us: int = DEFAULT_SYMBOL_DURATION_US
    symbols_per_hop: int = 10

    def __post_init__(self):
        if self.symbol_duration_us <= 0 or self.symbols_per_hop <= 0:
            raise DomainError("symbol_duration_us and symbols_per_hop must be positive")

    @classmethod
    def for_hop(cls, hop_interval_us, symbol_duration_us=DEFAULT_SYMBOL_DURATION_US):
        if symbol_duration_us <= 0 or hop_interval_us % symbol_duration_us:
            raise DomainError(f"symbol duration {symbol_duration_us} us must divide hop interval {hop_interval_us} us")
        return cls(symbol_duration_us=int(symbol_duration_us),
                   symbols_per_hop=int(hop_interval_us // symbol_duration_us))

    @property
    def hop_interval_us(self):
        return self.symbol_duration_us * self.symbols_per_hop


@dataclass(frozen=True)
class EveConfig:
    detection_period_us: int
    phase_us: int = 0
    noise_power: float = 0.0
    sampling: str = "random"

    def __post_init__(self):
        if self.detection_period_us <= 0:
            raise DomainError(f"detection period must be positive, got {self.detection_period_us}")
        if not 0 <= self.phase_us < self.detection_period_us:
            raise DomainError(f"phase {self.phase_us} us outside [0, {self.detection_period_us})")
        if self.noise_power < 0:
            raise DomainError("noise_power must be >= 0")
        if self.sampling not in SAMPLING_MODES:
            raise DomainError(f"sampling must be one of {SAMPLING_MODES}")


@dataclass(frozen=True)
class JamConfig:
    jamming_period_us: int
    phase_us: int = 0
    strategy: str = "uniform_random"
    sir_db: float = DEFAULT_SIR_DB
    adjacency: str = "clamp"

    def __post_init__(self):
        if self.jamming_period_us <= 0:
            raise DomainError(f"jamming period must be positive, got {self.jamming_period_us}")
        if not 0 <= self.phase_us < self.jamming_period_us:
            raise DomainError(f"phase {self.phase_us} us outside [0, {self.jamming_period_us})")
        if self.strategy not in JAM_STRATEGIES:
            raise DomainError(f"strategy must be one of {JAM_STRATEGIES}")
        if self.adjacency != "clamp":
            raise DomainError("only clamped adjacency (no wraparound) is modeled")


@dataclass(frozen=True)
class LinkReport:
    symbols: int
    errors: int

    @property
    def ser(self):
        return self.errors / self.symbols if self.symbols else 0.0


@dataclass(frozen=True)
class DetectionReport:
    windows: int
    successes: int

    @property
    def probability(self):
        return self.successes / self.windows if self.windows else 0.0


@dataclass(frozen=True)
class JamReport:
    symbols: int
    errors: int
    sir_db: float = DEFAULT_SIR_DB

    @property
    def ser(self):
        return self.errors / self.symbols if self.symbols else 0.0


def _symbol_grid(tx, sym):
    if tx.hop_interval_us % sym.symbol_duration_us:
        raise DomainError(f"symbol duration {sym.symbol_duration_us} us does not divide hop interval {tx.hop_interval_us} us")
    count = tx.span_us // sym.symbol_duration_us
    starts = tx.start_us + np.arange(count, dtype=np.int64) * sym.symbol_duration_us
    return starts, tx.index_at(starts)


def _covered(first, last):
    """Expands inclusive ranges [first, last] into a padded matrix plus a validity mask."""
    width = int((last - first).max()) + 1
    grid = first[:, None] + np.arange(width, dtype=np.int64)
    return grid, grid <= last[:, None]


def run_link(tx, rx, sym):
    """
    A symbol decodes iff the receiver sits on the transmitted channel for the whole symbol.
    """
    if tx.start_us != rx.start_us or tx.end_us != rx.end_us:
        raise DomainError(f"schedules cover different spans: tx [{tx.start_us}, {tx.end_us}) vs rx [{rx.start_us}, {rx.end_us})")

    starts, tx_index = _symbol_grid(tx, sym)
    errors = 0
    for lo in range(0, starts.size, _BATCH):
        t0 = starts[lo:lo + _BATCH]
        f = tx_index[lo:lo + _BATCH]
        first = (t0 - rx.start_us) // rx.hop_interval_us
        last = (t0 + sym.symbol_duration_us - 1 - rx.start_us) // rx.hop_interval_us
        hops, valid = _covered(first, last)
        rx_index = rx.indices[np.minimum(hops, len(rx) - 1)]
        decoded = np.all((rx_index == f[:, None]) | ~valid, axis=1)
        errors += int(np.count_nonzero(~decoded))
    return LinkReport(symbols=int(starts.size), errors=errors)


def run_eavesdropper(tx, plan, eve, seed=0):
    """
    Spectral-peak interception. Per window of length T_d the energy on each channel is its
    occupancy time (plus optional Gaussian noise of std noise_power·T_d); the reported peak is
    the argmax, ties going to the lowest index. A window succeeds when the peak equals the
    channel on air at the window's last microsecond.
    """
    t_d = int(eve.detection_period_us)
    t_h = tx.hop_interval_us
    n_channels = plan.n_channels
    if t_d > tx.span_us:
        raise DomainError(f"detection period {t_d} us exceeds the schedule span {tx.span_us} us")

    rng = np.random.default_rng(seed)
    n_windows = (tx.span_us - eve.phase_us) // t_d
    if eve.sampling == "contiguous":
        starts = tx.start_us + eve.phase_us + np.arange(n_windows, dtype=np.int64) * t_d
    else:
        # each window gets its own phase against the hop grid
        starts = tx.start_us + np.sort(rng.integers(0, tx.span_us - t_d + 1, size=n_windows))

    successes = 0
    for lo in range(0, n_windows, _BATCH):
        a = starts[lo:lo + _BATCH]
        b = a + t_d
        first = (a - tx.start_us) // t_h
        last = (b - 1 - tx.start_us) // t_h
        hops, valid = _covered(first, last)
        hop_start = tx.start_us + hops * t_h
        overlap = np.minimum(b[:, None], hop_start + t_h) - np.maximum(a[:, None], hop_start)
        overlap = np.where(valid, overlap, 0).astype(np.float64)
        channels = tx.indices[np.minimum(hops, len(tx) - 1)]

        rows = a.size
        flat = (np.arange(rows)[:, None] * n_channels + channels).ravel()
        energy = np.bincount(flat, weights=overlap.ravel(), minlength=rows * n_channels).reshape(rows, n_channels)
        if eve.noise_power > 0:
            energy += rng.normal(size=energy.shape) * eve.noise_power * t_d

        peak = energy.argmax(axis=1)
        successes += int(np.count_nonzero(peak == tx.indices[last]))

    return DetectionReport(windows=int(n_windows), successes=successes)


def run_jammer(tx, plan, jam, sym, seed=0):
    """
    One jammer channel per dwell of length T_j starting at phase_us. A symbol is lost iff at
    any instant of it the jammer sits on f-1, f or f+1 (clamped at band edges, no wraparound).
    No FEC is applied.
    """
    starts, tx_index = _symbol_grid(tx, sym)
    n_channels = plan.n_channels
    t_j = int(jam.jamming_period_us)
    if jam.strategy == "follow":
        return JamReport(symbols=int(starts.size), errors=int(starts.size), sir_db=jam.sir_db)

    offset = tx.start_us + jam.phase_us
    first = (starts - offset) // t_j
    last = (starts + sym.symbol_duration_us - 1 - offset) // t_j
    base = int(first.min())
    n_dwells = int(last.max()) - base + 1

    rng = np.random.default_rng(seed)
    if jam.strategy == "uniform_random":
        dwell_channel = rng.integers(0, n_channels, size=n_dwells)
    else:
        dwell_channel = (int(rng.integers(0, n_channels)) + np.arange(n_dwells)) % n_channels

    errors = 0
    for lo in range(0, starts.size, _BATCH):
        dwells, valid = _covered(first[lo:lo + _BATCH], last[lo:lo + _BATCH])
        channel = dwell_channel[np.minimum(dwells - base, n_dwells - 1)]
        hit = valid & (np.abs(channel - tx_index[lo:lo + _BATCH, None]) <= 1)
        errors += int(np.count_nonzero(hit.any(axis=1)))
    return JamReport(symbols=int(starts.size), errors=errors, sir_db=jam.sir_db)


@dataclass(frozen=True)
class SweepConfig:
    hop_interval_us: int = 5000
    plan: object = field(default_factory=build_channel_table)
    symbol_duration_us: int = DEFAULT_SYMBOL_DURATION_US
    windows_per_trial: int = 1000
    symbols_per_trial: int = 10000
    noise_power: float = 0.0
    strategy: str = "uniform_random"
    sir_db: float = DEFAULT_SIR_DB
    # None draws a fresh dwell phase per trial; a fixed value pins the jammer grid
    jam_phase_us: int = None

    @property
    def symbol_config(self):
        return SymbolConfig.for_hop(self.hop_interval_us, self.symbol_duration_us)


def _fresh_schedule(base, n_hops, rng):
    key = rng.integers(0, 256, size=n_hops, dtype=np.uint8).tobytes()
    return derive_hop_schedule(key, base.plan, base.hop_interval_us)


def _detection_trial(base, detection_period_us, seed):
    rng = np.random.default_rng(seed)
    n_hops = math.ceil((base.windows_per_trial + 1) * detection_period_us / base.hop_interval_us) + 1
    tx = _fresh_schedule(base, n_hops, rng)
    phase = int(rng.integers(0, detection_period_us))
    eve_seed = int(rng.integers(0, 2 ** 63))

    averaged = run_eavesdropper(tx, base.plan, EveConfig(detection_period_us, phase, base.noise_power, "random"), eve_seed)
    fixed = run_eavesdropper(tx, base.plan, EveConfig(detection_period_us, phase, base.noise_power, "contiguous"), eve_seed)
    return averaged.probability, fixed.probability


def _jamming_trial(base, jamming_period_us, seed):
    rng = np.random.default_rng(seed)
    sym = base.symbol_config
    n_hops = math.ceil(base.symbols_per_trial / sym.symbols_per_hop)
    tx = _fresh_schedule(base, n_hops, rng)
    if base.jam_phase_us is None:
        phase = int(rng.integers(0, jamming_period_us))
    else:
        phase = int(base.jam_phase_us) % jamming_period_us
    jam_seed = int(rng.integers(0, 2 ** 63))

    jam = JamConfig(jamming_period_us, phase, base.strategy, base.sir_db)
    ser = run_jammer(tx, base.plan, jam, sym, jam_seed).ser
    return ser, ser


def _run_trials(trial_fn, trials, seed, parallel):
    seeds = [trial_seed(seed, i) for i in range(trials)]
    if parallel > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(trial_fn, seeds))
    return [trial_fn(s) for s in seeds]


def sweep_metric(base, swept_param, values, trials, seed, parallel=1, progress=False):
    """
    Runs `trials` independent seeded trials per swept value, each with fresh key material and
    a random phase. Trial i always uses seed + i, so parallel and serial runs agree.
    Rows keep the order of `values`.
    """
    if swept_param not in SWEPT_PARAMS:
        raise DomainError(f"swept parameter must be one of {SWEPT_PARAMS}, got {swept_param}")
    if not values:
        raise DomainError("sweep needs at least one value")
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")

    if swept_param == "detection_period_us":
        runner, metric = _detection_trial, DETECT_METRIC
    else:
        runner, metric = _jamming_trial, SER_METRIC
        SymbolConfig.for_hop(base.hop_interval_us, base.symbol_duration_us)

    series = MetricSeries()
    label = f"{metric} T_h={base.hop_interval_us}us"
    for value in tqdm(values, desc=label, disable=not progress):
        try:
            results = _run_trials(partial(runner, base, int(value)), trials, seed, parallel)
        except QkdFhssError as exc:
            raise SweepPointError(swept_param, value, exc) from exc

        mean, std_error, low, high, degenerate = summarize_trials([r[0] for r in results])
        series.rows.append(MetricRow(
            swept_param=swept_param,
            value_us=int(value),
            hop_interval_us=int(base.hop_interval_us),
            metric=metric,
            mean=mean,
            ci95_low=low,
            ci95_high=high,
            peak_over_phase=float(max(r[1] for r in results)),
            trials=int(trials),
            seed=int(seed),
            std_error=std_error,
            degenerate_ci=degenerate,
        ))
        logger.debug("%s %s=%s mean=%.5f se=%.5f", metric, swept_param, value, mean, std_error)
    return series
