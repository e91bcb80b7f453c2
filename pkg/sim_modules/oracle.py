# oracle.py – independent "theoretical ideal" curves for the detection and jamming experiments,
# plus the linear-complexity predictor that separates algorithmic hop patterns from key-derived ones.
# Nothing here calls into airsim: the ideals are rebuilt from the adversary definitions alone.

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from sim_modules.errors import DomainError
from sim_modules.metrics import DETECT_METRIC, SER_METRIC, Z95, MetricRow, MetricSeries

logger = logging.getLogger(__name__)

CLOSED_FORM = "closed_form"
MONTE_CARLO = "monte_carlo"
ENUMERATION = "enumeration"

MIN_MC_TRIALS = 10_000
PEAK_PHASES = 32
_MC_BATCH = 8192

# x^16 + x^5 + x^3 + x^2 + 1
DEFAULT_LFSR_DEGREE = 16
DEFAULT_LFSR_EXPONENTS = (5, 3, 2, 0)


@dataclass(frozen=True)
class IdealPoint:
    params: dict
    mean: float
    std_error: float
    method: str
    peak: float = None
    exact: Fraction = None


def _binomial_se(p, trials):
    # a zero-variance sample still only resolves the mean to 1/trials
    return max(math.sqrt(p * (1.0 - p) / trials), 0.5 / trials)


def _detection_mc(hop_interval_us, detection_period_us, n_channels, offsets, rng):
    """
    Success indicator per window. `offsets` is each window's start measured from the start of
    the hop it opens in; channels per hop are i.i.d. uniform.
    """
    t_h, t_d = hop_interval_us, detection_period_us
    end = offsets + t_d
    n_seg = (end - 1) // t_h + 1
    width = int(n_seg.max())
    seg = np.arange(width, dtype=np.int64)
    occupancy = np.minimum(end[:, None], (seg + 1) * t_h) - np.maximum(offsets[:, None], seg * t_h)
    valid = seg[None, :] < n_seg[:, None]
    occupancy = np.where(valid, occupancy, 0)

    channel = rng.integers(0, n_channels, size=(offsets.size, width))
    same = (channel[:, :, None] == channel[:, None, :]) & valid[:, None, :]
    energy = (same * occupancy[:, None, :]).sum(axis=2)
    energy = np.where(valid, energy, -1)

    best = energy.max(axis=1)
    peak = np.where(energy == best[:, None], channel, n_channels).min(axis=1)
    final = channel[np.arange(offsets.size), n_seg - 1]
    return peak == final


def _detection_given_offset(t_h, t_d, n_channels, offsets):
    """Exact success probability for windows no longer than a hop, per start offset."""
    first = t_h - offsets
    final = offsets + t_d - t_h
    inside = final <= 0
    distinct = 1.0 - 1.0 / n_channels
    # a tie goes to the lower index, which is the final channel half the time
    tie = (1.0 / n_channels) + distinct / 2.0
    return np.where(inside, 1.0, np.where(final > first, 1.0, np.where(final < first, 1.0 / n_channels, tie)))


def _detection_peak(t_h, t_d, n_channels, trials, rng):
    """Worst case over the eavesdropper's phase for back-to-back windows."""
    cycle = t_h // math.gcd(t_d, t_h)
    phases = np.unique(np.linspace(0, t_h, PEAK_PHASES, endpoint=False).astype(np.int64))
    best = 0.0
    for phase in phases:
        if t_d <= t_h:
            offsets = (phase + np.arange(cycle, dtype=np.int64) * t_d) % t_h
            value = float(_detection_given_offset(t_h, t_d, n_channels, offsets).mean())
        else:
            per_phase = max(1000, trials // len(phases))
            offsets = (phase + rng.integers(0, cycle, size=per_phase) * t_d) % t_h
            value = float(_detection_mc(t_h, t_d, n_channels, offsets, rng).mean())
        best = max(best, value)
    return best


def ideal_detection_probability(hop_interval_us, detection_period_us, n_channels, trials=100_000, seed=0,
                                method=None):
    """
    Ideal interception probability of the occupancy-peak detector: i.i.d. uniform channels,
    uniform window phase, success when the peak matches the channel at window end.
    Closed form P = 1 − (T_d / 2T_h)·(1 − 1/N) while T_d ≤ T_h, Monte Carlo beyond.
    `method="monte_carlo"` samples even where the closed form applies.
    """
    t_h, t_d, n = int(hop_interval_us), int(detection_period_us), int(n_channels)
    if t_h <= 0 or t_d <= 0 or n <= 0:
        raise DomainError("hop interval, detection period and channel count must be positive")
    params = {"hop_interval_us": t_h, "detection_period_us": t_d, "n_channels": n}
    rng = np.random.default_rng(seed)

    if t_d <= t_h and method != MONTE_CARLO:
        mean = 1.0 - (t_d / (2.0 * t_h)) * (1.0 - 1.0 / n)
        peak = _detection_peak(t_h, t_d, n, trials, rng)
        return IdealPoint(params=params, mean=mean, std_error=0.0, method=CLOSED_FORM, peak=peak)

    if trials < MIN_MC_TRIALS:
        raise DomainError(f"Monte Carlo needs at least {MIN_MC_TRIALS} trials, got {trials}")
    successes = 0
    for lo in range(0, trials, _MC_BATCH):
        size = min(_MC_BATCH, trials - lo)
        offsets = rng.integers(0, t_h, size=size)
        successes += int(np.count_nonzero(_detection_mc(t_h, t_d, n, offsets, rng)))
    mean = successes / trials
    peak = _detection_peak(t_h, t_d, n, trials, rng)
    return IdealPoint(params=params, mean=mean, std_error=_binomial_se(mean, trials), method=MONTE_CARLO, peak=peak)


def _adjacent_counts(n_channels):
    """|{f-1, f, f+1} ∩ [0, N-1]| for every signal channel f."""
    f = np.arange(n_channels)
    return np.minimum(f + 1, n_channels - 1) - np.maximum(f - 1, 0) + 1


def hit_probability(dwells, n_channels, strategy="uniform_random"):
    """
    Exact probability that a symbol overlapping `dwells` jammer dwells is lost, over all
    (jammer, signal) channel pairs. Returned as a Fraction.
    """
    n = int(n_channels)
    k = int(dwells)
    if strategy == "uniform_random":
        # dwells draw independently given the signal channel f
        total = sum(n ** k - (n - int(a)) ** k for a in _adjacent_counts(n))
        return Fraction(total, n ** (k + 1))
    if strategy == "sweep":
        start = np.arange(n)[:, None]
        f = np.arange(n)[None, :]
        hit = np.zeros((n, n), dtype=bool)
        for step in range(min(k, n)):
            hit |= np.abs((start + step) % n - f) <= 1
        return Fraction(int(hit.sum()), n * n)
    if strategy == "follow":
        return Fraction(1)
    raise DomainError(f"unknown jammer strategy {strategy}")


def _dwells_per_symbol(offsets, symbol_duration_us, jamming_period_us):
    return (offsets + symbol_duration_us - 1) // jamming_period_us + 1


def _jamming_enumeration(t_j, d, n, strategy, phase):
    """Exact SER for a pinned dwell grid: average over the periodic symbol/dwell offset cycle."""
    cycle = t_j // math.gcd(d, t_j)
    offsets = (np.arange(cycle, dtype=np.int64) * d - phase) % t_j
    dwells, counts = np.unique(_dwells_per_symbol(offsets, d, t_j), return_counts=True)
    exact = sum(hit_probability(k, n, strategy) * int(c) for k, c in zip(dwells, counts)) / cycle
    return Fraction(exact)


def _jamming_mc(t_j, d, n, strategy, trials, rng, phase=None):
    cycle = t_j // math.gcd(d, t_j)
    errors = 0
    for lo in range(0, trials, _MC_BATCH):
        size = min(_MC_BATCH, trials - lo)
        if phase is None:
            offsets = rng.integers(0, t_j, size=size)
        else:
            offsets = (rng.integers(0, cycle, size=size) * d - phase) % t_j
        dwells = _dwells_per_symbol(offsets, d, t_j)
        width = int(dwells.max())
        valid = np.arange(width)[None, :] < dwells[:, None]
        signal = rng.integers(0, n, size=size)
        if strategy == "uniform_random":
            jammer = rng.integers(0, n, size=(size, width))
        elif strategy == "sweep":
            jammer = (rng.integers(0, n, size=size)[:, None] + np.arange(width)[None, :]) % n
        else:
            jammer = np.repeat(signal[:, None], width, axis=1)
        hit = valid & (np.abs(jammer - signal[:, None]) <= 1)
        errors += int(np.count_nonzero(hit.any(axis=1)))
    return errors / trials


def ideal_jamming_ser(hop_interval_us, jamming_period_us, symbol_duration_us, n_channels,
                      strategy="uniform_random", trials=100_000, seed=0, phase_us=None, method=None):
    """
    Ideal jamming SER under the overlap-or-adjacent hit rule with clamped band edges.

    A pinned dwell grid (`phase_us` given) is enumerated exactly; a random phase is Monte Carlo.
    `method="monte_carlo"` forces sampling for a pinned grid too. The peak is the worst case
    over an evenly spaced grid of phases.
    """
    t_h, t_j, d, n = int(hop_interval_us), int(jamming_period_us), int(symbol_duration_us), int(n_channels)
    if min(t_h, t_j, d, n) <= 0:
        raise DomainError("periods, symbol duration and channel count must be positive")
    if t_h % d:
        raise DomainError(f"symbol duration {d} us does not divide hop interval {t_h} us")
    params = {"hop_interval_us": t_h, "jamming_period_us": t_j, "symbol_duration_us": d,
              "symbols_per_hop": t_h // d, "n_channels": n, "strategy": strategy}

    phases = np.unique(np.linspace(0, t_j, PEAK_PHASES, endpoint=False).astype(np.int64))
    peak = float(max(_jamming_enumeration(t_j, d, n, strategy, int(p)) for p in phases))

    if method is None:
        method = ENUMERATION if phase_us is not None else MONTE_CARLO
    if method == ENUMERATION:
        if phase_us is None:
            raise DomainError("enumeration needs a pinned phase")
        exact = _jamming_enumeration(t_j, d, n, strategy, int(phase_us) % t_j)
        return IdealPoint(params=params, mean=float(exact), std_error=0.0, method=ENUMERATION, peak=peak, exact=exact)

    if trials < MIN_MC_TRIALS:
        raise DomainError(f"Monte Carlo needs at least {MIN_MC_TRIALS} trials, got {trials}")
    rng = np.random.default_rng(seed)
    mean = _jamming_mc(t_j, d, n, strategy, trials, rng, phase=phase_us)
    return IdealPoint(params=params, mean=mean, std_error=_binomial_se(mean, trials), method=MONTE_CARLO, peak=peak)


def _ideal_row(swept_param, value, hop_interval_us, metric, point, trials, seed):
    return MetricRow(
        swept_param=swept_param,
        value_us=int(value),
        hop_interval_us=int(hop_interval_us),
        metric=metric,
        mean=point.mean,
        ci95_low=point.mean - Z95 * point.std_error,
        ci95_high=point.mean + Z95 * point.std_error,
        peak_over_phase=point.peak,
        trials=int(trials) if point.method == MONTE_CARLO else 0,
        seed=int(seed),
        std_error=point.std_error,
        method=point.method,
    )


def ideal_series(hop_interval_us, n_channels, detection_values=(), jamming_values=(),
                 symbol_duration_us=500, strategy="uniform_random", trials=100_000, seed=0, jam_phase_us=None):
    """Ideal counterparts of a detection sweep and a jamming sweep, in the measured CSV layout plus `method`."""
    series = MetricSeries()
    for value in detection_values:
        point = ideal_detection_probability(hop_interval_us, value, n_channels, trials, seed)
        series.rows.append(_ideal_row("detection_period_us", value, hop_interval_us, DETECT_METRIC, point, trials, seed))
    for value in jamming_values:
        point = ideal_jamming_ser(hop_interval_us, value, symbol_duration_us, n_channels,
                                  strategy, trials, seed, phase_us=jam_phase_us)
        series.rows.append(_ideal_row("jamming_period_us", value, hop_interval_us, SER_METRIC, point, trials, seed))
    return series


@dataclass(frozen=True)
class PredictabilityReport:
    linear_complexity: int
    next_symbol_accuracy: float
    sequence_length: int
    training_complexity: int = 0
    connection_polynomial: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "linear_complexity": self.linear_complexity,
            "next_symbol_accuracy": self.next_symbol_accuracy,
            "sequence_length": self.sequence_length,
            "training_complexity": self.training_complexity,
        }


def berlekamp_massey(bits):
    """
    Shortest LFSR over GF(2) generating `bits`.
    Returns (L, c) where bit i of the integer c is the coefficient c_i of the connection
    polynomial 1 + c_1·x + ... + c_L·x^L. Bit i of `window` holds s_{n-i}, so the
    discrepancy is the parity of c & window.
    """
    c, b = 1, 1
    length, shift = 0, 1
    window = 0
    for n, bit in enumerate(bits):
        window = (window << 1) | int(bit)
        if (c & window).bit_count() & 1 == 0:
            shift += 1
        elif 2 * length <= n:
            previous = c
            c ^= b << shift
            length = n + 1 - length
            b = previous
            shift = 1
        else:
            c ^= b << shift
            shift += 1
    return length, c


def _coefficients(c):
    return tuple(i for i in range(c.bit_length()) if (c >> i) & 1)


def linear_complexity_predictor(bits):
    """
    Linear complexity of the whole sequence, and how well the LFSR recovered from the first
    half predicts each bit of the second half from the true preceding bits.
    """
    bits = [int(x) for x in np.asarray(bits, dtype=np.uint8)]
    n = len(bits)
    if n < 4:
        raise DomainError(f"predictor needs at least 4 bits, got {n}")

    complexity, _ = berlekamp_massey(bits)
    half = n // 2
    train_complexity, c = berlekamp_massey(bits[:half])

    taps = c >> 1
    mask = (1 << max(train_complexity, 1)) - 1
    window = 0
    for bit in bits[:half]:
        window = ((window << 1) | bit) & mask
    correct = 0
    for bit in bits[half:]:
        predicted = (taps & window).bit_count() & 1
        correct += predicted == bit
        window = ((window << 1) | bit) & mask

    return PredictabilityReport(
        linear_complexity=complexity,
        next_symbol_accuracy=correct / (n - half),
        sequence_length=n,
        training_complexity=train_complexity,
        connection_polynomial=_coefficients(c),
    )


def lfsr_sequence(degree, exponents, seed_bits, length):
    """
    Fibonacci LFSR for the polynomial x^degree + Σ x^e (e in `exponents`):
    s[k + degree] = XOR of s[k + e]. `seed_bits` supplies s[0..degree-1].
    """
    if degree < 1 or len(seed_bits) != degree:
        raise DomainError(f"an LFSR of degree {degree} needs exactly {degree} seed bits")
    if any(not 0 <= e < degree for e in exponents):
        raise DomainError("feedback exponents must lie in [0, degree)")
    out = [int(b) & 1 for b in seed_bits]
    for k in range(max(0, length - degree)):
        bit = 0
        for e in exponents:
            bit ^= out[k + e]
        out.append(bit)
    return np.array(out[:length], dtype=np.uint8)


def hop_bits(indices, bits_per_index):
    """Hop indices as a bit stream, most significant bit first."""
    indices = np.asarray(indices, dtype=np.int64)
    shifts = np.arange(bits_per_index - 1, -1, -1)
    return ((indices[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def indices_from_bits(bits, bits_per_index):
    """Inverse of hop_bits: consecutive bit groups read as channel indices (trailing bits dropped)."""
    bits = np.asarray(bits, dtype=np.int64)
    count = bits.size // bits_per_index
    groups = bits[: count * bits_per_index].reshape(count, bits_per_index)
    return groups @ (1 << np.arange(bits_per_index - 1, -1, -1))


def bits_per_index(n_channels):
    return max(1, math.ceil(math.log2(n_channels)))


def predictability_contrast(key_octets, n_channels, n_bits=10_000, lfsr_seed=1):
    """
    Compares the hop-bit stream derived from key bytes against one produced by a degree-16
    LFSR (an agreed-upon hopping algorithm). Returns both predictability reports.
    """
    width = bits_per_index(n_channels)
    octets = np.frombuffer(bytes(key_octets), dtype=np.uint8)
    key_bits = hop_bits(octets.astype(np.int64) % n_channels, width)[:n_bits]
    if key_bits.size < n_bits:
        logger.warning("only %d key-derived hop bits available (wanted %d)", key_bits.size, n_bits)

    seed_bits = [(lfsr_seed >> i) & 1 for i in range(DEFAULT_LFSR_DEGREE)]
    if not any(seed_bits):
        seed_bits[0] = 1
    lfsr_bits = lfsr_sequence(DEFAULT_LFSR_DEGREE, DEFAULT_LFSR_EXPONENTS, seed_bits, n_bits)

    return {
        "key": linear_complexity_predictor(key_bits),
        "lfsr": linear_complexity_predictor(lfsr_bits),
    }
