# qkdlink.py – COW QKD link simulation and the classical post-processing chain
# Description: Simulates a coherent-one-way exchange over a lossy fiber, then runs sifting,
# QBER estimation, Cascade-style reconciliation and Toeplitz privacy amplification so that
# both ends hold the same secret key.

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import fftconvolve

from sim_modules.errors import (
    DomainError,
    EmptyExchangeError,
    EstimationError,
    UnverifiedKeyError,
    ZeroKeyError,
    stage,
)
from sim_modules.seeds import derive_seed

logger = logging.getLogger(__name__)

DECOY_TRIT = 2
DEFAULT_EPSILON_EXPONENT = 64
DEFAULT_PASSES = 4
DEFAULT_ESTIMATION_FRACTION = 0.1

# GF(2^64) reduction polynomial x^64 + x^4 + x^3 + x + 1 (low terms only)
_GF64_LOW = 0x1B
_MASK64 = (1 << 64) - 1


def _check_probability(name, value):
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class QkdLinkConfig:
    n_pulses: int = 1_000_000
    fiber_km: float = 25.0
    loss_db_per_km: float = 0.2
    detector_efficiency: float = 0.8
    flip_prob: float = 0.035
    decoy_fraction: float = 0.05
    seed: int = 0
    target_key_rate_bps: float = 2000.0

    def __post_init__(self):
        if int(self.n_pulses) < 1:
            raise DomainError(f"n_pulses must be >= 1, got {self.n_pulses}")
        if self.fiber_km < 0 or self.loss_db_per_km < 0:
            raise DomainError("fiber_km and loss_db_per_km must be non-negative")
        for name in ("detector_efficiency", "flip_prob", "decoy_fraction"):
            _check_probability(name, getattr(self, name))
        if self.target_key_rate_bps <= 0:
            raise DomainError("target_key_rate_bps must be positive")

    @property
    def transmittance(self):
        return 10.0 ** (-self.fiber_km * self.loss_db_per_km / 10.0)

    @property
    def detection_probability(self):
        return self.transmittance * self.detector_efficiency

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RawExchange:
    alice_bits: np.ndarray
    alice_is_decoy: np.ndarray
    bob_detected: np.ndarray
    bob_bits: np.ndarray  # zero wherever bob_detected is False

    def pulse_trits(self):
        """One trit per slot: 0-bit (pulse in first bin), 1-bit (second bin) or decoy (both bins)."""
        return np.where(self.alice_is_decoy, DECOY_TRIT, self.alice_bits).astype(np.uint8)

    @property
    def detected_count(self):
        return int(np.count_nonzero(self.bob_detected))


@dataclass(frozen=True)
class SiftedKeyPair:
    alice_key: np.ndarray
    bob_key: np.ndarray
    qber_estimate: float
    disclosed_count: int


@dataclass(frozen=True)
class ReconciledKey:
    key: np.ndarray
    leak_bits: int
    verified: bool
    # Bob's corrected copy; equal to `key` whenever verified is True
    peer_key: np.ndarray = None

    def peer(self):
        """The same reconciliation seen from Bob's end."""
        peer_key = self.key if self.peer_key is None else self.peer_key
        return ReconciledKey(key=peer_key, leak_bits=self.leak_bits, verified=self.verified, peer_key=self.key)


@dataclass(frozen=True)
class SecretKey:
    octets: bytes
    source_leak_bits: int
    epsilon_exponent: int
    bit_length: int

    def bits(self):
        return np.unpackbits(np.frombuffer(self.octets, dtype=np.uint8))[: self.bit_length]

    @property
    def whole_octets(self):
        """Octets made only of secret bits; the zero-padded tail of a partial last byte is dropped."""
        return self.octets[: self.bit_length // 8]


@dataclass(frozen=True)
class QkdRunResult:
    alice: SecretKey
    bob: SecretKey
    reconciled: ReconciledKey
    summary: dict


def binary_entropy(q):
    """
    Binary entropy h2(q) = -q·log2(q) - (1-q)·log2(1-q), with 0·log2(0) = 0.
    """
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"binary_entropy is defined on [0, 1], got {q}")
    if q == 0.0 or q == 1.0:
        return 0.0
    return -q * math.log2(q) - (1.0 - q) * math.log2(1.0 - q)


def simulate_exchange(config):
    """
    Runs the quantum part of the link: Alice's uniform bits, decoy marking, lossy detection
    and bit flips at Bob. The result depends only on the config (its seed included).
    """
    rng = np.random.default_rng(config.seed)
    n = int(config.n_pulses)

    alice_bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    is_decoy = rng.random(n) < config.decoy_fraction
    detected = ~is_decoy & (rng.random(n) < config.detection_probability)
    flips = (rng.random(n) < config.flip_prob).astype(np.uint8)
    bob_bits = np.where(detected, alice_bits ^ flips, 0).astype(np.uint8)

    logger.debug("exchange: %d pulses, %d detected", n, int(np.count_nonzero(detected)))
    return RawExchange(alice_bits=alice_bits, alice_is_decoy=is_decoy, bob_detected=detected, bob_bits=bob_bits)


def sift_and_estimate(exchange, estimation_fraction=DEFAULT_ESTIMATION_FRACTION, seed=0):
    if not 0.0 < estimation_fraction < 1.0:
        raise DomainError(f"estimation_fraction must lie in (0, 1), got {estimation_fraction}")

    kept = np.flatnonzero(exchange.bob_detected & ~exchange.alice_is_decoy)
    if kept.size == 0:
        raise EmptyExchangeError("no detected non-decoy positions to sift")

    n_disclosed = int(round(estimation_fraction * kept.size))
    if n_disclosed == 0:
        raise EstimationError(f"estimation fraction {estimation_fraction} discloses nothing of {kept.size} bits")

    rng = np.random.default_rng(seed)
    disclosed = np.zeros(kept.size, dtype=bool)
    disclosed[rng.choice(kept.size, size=n_disclosed, replace=False)] = True

    alice = exchange.alice_bits[kept]
    bob = exchange.bob_bits[kept]
    mismatches = np.count_nonzero(alice[disclosed] != bob[disclosed])

    return SiftedKeyPair(
        alice_key=alice[~disclosed],
        bob_key=bob[~disclosed],
        qber_estimate=mismatches / n_disclosed,
        disclosed_count=n_disclosed,
    )


def initial_block_size(qber, n):
    """Cascade's first block size ⌈0.73/Q⌉ clamped to [8, n/4]."""
    upper = max(2, n // 4)
    if qber <= 0:
        return upper
    return max(2, min(max(8, math.ceil(0.73 / qber)), upper))


class _PassLayout:
    """Block bookkeeping for one Cascade pass over a (possibly shuffled) ordering."""

    def __init__(self, order, size, alice, bob):
        self.order = order
        self.size = size
        self.n = order.size
        self.position = np.empty_like(order)
        self.position[order] = np.arange(self.n)
        self.bob = bob[order].copy()

        # Alice's parities never change, so prefix sums answer any range query
        self.alice_prefix = np.concatenate(([0], np.cumsum(alice[order], dtype=np.int64)))
        starts = np.arange(0, self.n, size)
        ends = np.minimum(starts + size, self.n)
        self.alice_parity = ((self.alice_prefix[ends] - self.alice_prefix[starts]) & 1).astype(np.uint8)
        self.bob_parity = (np.add.reduceat(self.bob.astype(np.int64), starts) & 1).astype(np.uint8)

    @property
    def n_blocks(self):
        return self.alice_parity.size

    def odd_blocks(self):
        return np.flatnonzero(self.alice_parity != self.bob_parity).tolist()

    def is_odd(self, block):
        return self.alice_parity[block] != self.bob_parity[block]

    def bisect(self, block):
        """Binary search for one error in an odd block. Returns (position, parities disclosed)."""
        lo = block * self.size
        hi = min(lo + self.size, self.n)
        disclosed = 0
        while hi - lo > 1:
            mid = (lo + hi) // 2
            disclosed += 1
            alice_half = (self.alice_prefix[mid] - self.alice_prefix[lo]) & 1
            bob_half = int(self.bob[lo:mid].sum()) & 1
            if alice_half != bob_half:
                hi = mid
            else:
                lo = mid
        return lo, disclosed

    def flip(self, index):
        pos = self.position[index]
        self.bob[pos] ^= 1
        block = pos // self.size
        self.bob_parity[block] ^= 1
        return block


def _gf64_mul(a, b):
    result = 0
    while b:
        if b & 1:
            result ^= a
        b >>= 1
        a <<= 1
        if a >> 64:
            a = (a & _MASK64) ^ _GF64_LOW
    return result


def verification_digest(bits, seed):
    """
    64-bit polynomial hash over GF(2^64): the packed key words (and the bit length) are the
    coefficients, evaluated by Horner's rule at a seeded non-zero point.
    """
    rng = np.random.default_rng(seed)
    point = int.from_bytes(rng.bytes(8), "big") or 1

    bits = np.asarray(bits, dtype=np.uint8)
    padded = np.zeros(-(-bits.size // 64) * 64, dtype=np.uint8)
    padded[: bits.size] = bits
    words = np.frombuffer(np.packbits(padded).tobytes(), dtype=">u8").tolist()

    digest = 0
    for word in words + [bits.size]:
        digest = _gf64_mul(digest ^ word, point)
    return digest


def reconcile(pair, passes=DEFAULT_PASSES, initial_block=None, seed=0):
    """
    Cascade-style reconciliation of Bob's key against Alice's.

    Each pass discloses every block parity; odd blocks are bisected (one disclosed parity per
    halving). Block size doubles per pass and passes after the first use a seeded shuffle.
    A bit corrected in a later pass flips the parity of its blocks in earlier passes, which are
    then bisected again. Both ends finally compare 64-bit digests to set `verified`.
    """
    n = int(pair.alice_key.size)
    if n == 0 or pair.bob_key.size != n:
        raise DomainError("reconcile needs two non-empty keys of equal length")
    if passes < 1:
        raise DomainError(f"passes must be >= 1, got {passes}")
    if initial_block is None:
        initial_block = initial_block_size(pair.qber_estimate, n)
    if initial_block < 2:
        raise DomainError(f"initial_block must be >= 2, got {initial_block}")

    rng = np.random.default_rng(seed)
    alice = pair.alice_key.astype(np.uint8)
    bob = pair.bob_key.astype(np.uint8).copy()

    layouts = []
    leak_bits = 0
    corrected = 0
    for p in range(passes):
        size = min(initial_block * (2 ** p), n)
        order = np.arange(n) if p == 0 else rng.permutation(n)
        layout = _PassLayout(order, size, alice, bob)
        layouts.append(layout)
        leak_bits += layout.n_blocks

        work = [(p, block) for block in layout.odd_blocks()]
        while work:
            q, block = work.pop()
            owner = layouts[q]
            if not owner.is_odd(block):
                continue
            pos, disclosed = owner.bisect(block)
            leak_bits += disclosed
            index = int(owner.order[pos])
            bob[index] ^= 1
            corrected += 1
            for r, other in enumerate(layouts):
                other_block = other.flip(index)
                if r != q and other.is_odd(other_block):
                    work.append((r, other_block))

    digest_seed = int(rng.integers(0, 2 ** 63))
    verified = verification_digest(alice, digest_seed) == verification_digest(bob, digest_seed)
    logger.debug("cascade: n=%d passes=%d k1=%d corrected=%d leak=%d verified=%s",
                 n, passes, initial_block, corrected, leak_bits, verified)
    return ReconciledKey(key=alice, leak_bits=leak_bits, verified=bool(verified), peer_key=bob)


def secret_length(n, qber, leak_bits, epsilon_exponent):
    """Output-length rule m = ⌊n·(1 − h2(Q)) − leak − 2·log2(1/ε)⌋, clamped at 0."""
    m = math.floor(n * (1.0 - binary_entropy(qber)) - leak_bits - 2 * epsilon_exponent)
    return max(0, m)


def toeplitz_hash(bits, toeplitz_bits, m):
    """
    Multiplies the m×n Toeplitz matrix T[i, j] = t[i - j + n - 1] with `bits` over GF(2).
    The product is the middle of the full convolution t * bits, computed by FFT.
    """
    n = bits.size
    if toeplitz_bits.size != m + n - 1:
        raise DomainError(f"a {m}x{n} Toeplitz matrix needs {m + n - 1} defining bits")
    conv = fftconvolve(toeplitz_bits.astype(np.float64), bits.astype(np.float64))
    segment = np.rint(conv[n - 1 : n - 1 + m]).astype(np.int64)
    return (segment & 1).astype(np.uint8)


def privacy_amplify(key, qber, epsilon_exponent=DEFAULT_EPSILON_EXPONENT, seed=0):
    if not key.verified:
        raise UnverifiedKeyError("refusing to amplify an unverified key")
    if not 0.0 <= qber < 0.5:
        raise DomainError(f"qber must lie in [0, 0.5), got {qber}")
    if epsilon_exponent < 1:
        raise DomainError(f"epsilon_exponent must be positive, got {epsilon_exponent}")

    n = int(key.key.size)
    m = secret_length(n, qber, key.leak_bits, epsilon_exponent)
    if m <= 0:
        raise ZeroKeyError(f"no secret bits left: n={n}, qber={qber:.4f}, leak={key.leak_bits}")

    # Both ends draw the same matrix from the shared seed
    rng = np.random.default_rng(seed)
    toeplitz_bits = rng.integers(0, 2, size=m + n - 1, dtype=np.uint8)
    out = toeplitz_hash(key.key.astype(np.uint8), toeplitz_bits, m)

    return SecretKey(
        octets=np.packbits(out).tobytes(),
        source_leak_bits=key.leak_bits,
        epsilon_exponent=epsilon_exponent,
        bit_length=m,
    )


def run_qkd_link(config,
                 estimation_fraction=DEFAULT_ESTIMATION_FRACTION,
                 passes=DEFAULT_PASSES,
                 epsilon_exponent=DEFAULT_EPSILON_EXPONENT):
    """
    Full chain from pulses to secret keys at both ends. Sub-seeds are fanned out from
    config.seed so every step is reproducible on its own.
    """
    with stage("exchange"):
        exchange = simulate_exchange(config)
    with stage("sift"):
        pair = sift_and_estimate(exchange, estimation_fraction, seed=derive_seed(config.seed, "sift"))
    with stage("reconcile"):
        reconciled = reconcile(pair, passes=passes, seed=derive_seed(config.seed, "cascade"))
        if not reconciled.verified:
            raise UnverifiedKeyError("residual mismatch after reconciliation; key discarded")
    with stage("amplify"):
        toeplitz_seed = derive_seed(config.seed, "toeplitz")
        alice = privacy_amplify(reconciled, pair.qber_estimate, epsilon_exponent, seed=toeplitz_seed)
        bob = privacy_amplify(reconciled.peer(), pair.qber_estimate, epsilon_exponent, seed=toeplitz_seed)

    summary = {
        "n_pulses": int(config.n_pulses),
        "detected": exchange.detected_count,
        "sifted_len": int(pair.alice_key.size),
        "qber": round(float(pair.qber_estimate), 6),
        "leak_bits": int(reconciled.leak_bits),
        "secret_len": int(alice.bit_length),
        # simulated time to deliver this much key at the configured rate
        "seconds": round(alice.bit_length / config.target_key_rate_bps, 6),
    }
    logger.info("qkd link: qber=%.4f sifted=%d leak=%d secret=%d bits",
                summary["qber"], summary["sifted_len"], summary["leak_bits"], summary["secret_len"])
    return QkdRunResult(alice=alice, bob=bob, reconciled=reconciled, summary=summary)
