# scripts/config.py – experiment configuration: JSON file → validated frozen dataclasses
# Precedence: CLI flags > config file > .env defaults > built-in defaults for the reference link
# (25 km fiber, QBER ≈ 3.5%, 128 channels, 5 ms and 1 ms hop intervals, jammer 20 dB above the signal).

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from dotenv import load_dotenv

from database.key_store import DEFAULT_MAX_KEY_COUNT, DEFAULT_RECORD_SIZE_BITS
from sim_modules.airsim import DEFAULT_SIR_DB, DEFAULT_SYMBOL_DURATION_US, JAM_STRATEGIES
from sim_modules.errors import ConfigError, QkdFhssError
from sim_modules.hopplan import (DEFAULT_BASE_FREQ_HZ, DEFAULT_N_CHANNELS, DEFAULT_SPACING_HZ,
                                 build_channel_table, load_channel_table)
from sim_modules.qkdlink import QkdLinkConfig

load_dotenv()
DEFAULT_OUTPUT_DIR = os.getenv("QKD_FHSS_OUTPUT_DIR", "results")

DEFAULT_PERIODS_US = (500, 1000, 2500, 5000, 10000, 20000)


@dataclass(frozen=True)
class KmsSettings:
    record_size_bits: int = DEFAULT_RECORD_SIZE_BITS
    max_key_count: int = DEFAULT_MAX_KEY_COUNT
    # None keeps the store in-process; a URL talks to a running `kms serve`
    endpoint: str = None
    master_sae_id: str = "fhss-tx"
    slave_sae_id: str = "fhss-rx"


@dataclass(frozen=True)
class ChannelSettings:
    base_freq_hz: float = DEFAULT_BASE_FREQ_HZ
    spacing_hz: float = DEFAULT_SPACING_HZ
    n_channels: int = DEFAULT_N_CHANNELS
    table_file: str = None

    def plan(self):
        if self.table_file:
            return load_channel_table(self.table_file)
        return build_channel_table(self.base_freq_hz, self.spacing_hz, self.n_channels)


@dataclass(frozen=True)
class HopSettings:
    hop_interval_us: tuple = (5000, 1000)


@dataclass(frozen=True)
class EveSettings:
    detection_period_us: tuple = DEFAULT_PERIODS_US
    windows_per_trial: int = 1000
    noise_power: float = 0.0


@dataclass(frozen=True)
class JamSettings:
    jamming_period_us: tuple = DEFAULT_PERIODS_US
    strategy: str = "uniform_random"
    sir_db: float = DEFAULT_SIR_DB
    symbols_per_trial: int = 10000
    # 0 pins the dwell grid to the hop grid; null draws a phase per trial
    phase_us: int = 0


@dataclass(frozen=True)
class SymbolSettings:
    symbol_duration_us: int = DEFAULT_SYMBOL_DURATION_US


@dataclass(frozen=True)
class ExperimentConfig:
    qkd: QkdLinkConfig = field(default_factory=QkdLinkConfig)
    kms: KmsSettings = field(default_factory=KmsSettings)
    channel: ChannelSettings = field(default_factory=ChannelSettings)
    hop: HopSettings = field(default_factory=HopSettings)
    eve: EveSettings = field(default_factory=EveSettings)
    jam: JamSettings = field(default_factory=JamSettings)
    sym: SymbolSettings = field(default_factory=SymbolSettings)
    trials: int = 10
    ideal_trials: int = 100_000
    master_seed: int = 0
    parallel: int = 1
    output_dir: str = DEFAULT_OUTPUT_DIR

    @classmethod
    def from_dict(cls, data):
        """Builds a config from parsed JSON; unknown keys are rejected so typos do not pass silently."""
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
        sections = {"qkd": QkdLinkConfig, "kms": KmsSettings, "channel": ChannelSettings, "hop": HopSettings,
                    "eve": EveSettings, "jam": JamSettings, "sym": SymbolSettings}
        _reject_unknown("config", data, {f.name for f in fields(cls)})

        kwargs = {}
        try:
            for name, value in data.items():
                if name in sections:
                    section = sections[name]
                    if not isinstance(value, dict):
                        raise ConfigError(f"section '{name}' must be an object")
                    _reject_unknown(name, value, {f.name for f in fields(section)})
                    kwargs[name] = section(**{k: tuple(v) if isinstance(v, list) else v for k, v in value.items()})
                else:
                    kwargs[name] = value
            config = cls(**kwargs)
        except ConfigError:
            raise
        except (QkdFhssError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return config.validate()

    def validate(self):
        """Cross-section checks; returns self so calls can be chained."""
        if not self.hop.hop_interval_us:
            raise ConfigError("hop.hop_interval_us must list at least one interval")
        symbol = self.sym.symbol_duration_us
        if symbol <= 0:
            raise ConfigError("sym.symbol_duration_us must be positive")
        for t_h in self.hop.hop_interval_us:
            if t_h <= 0 or t_h % symbol:
                raise ConfigError(f"hop interval {t_h} us is not a positive multiple of the {symbol} us symbol")
        for name, values in (("eve.detection_period_us", self.eve.detection_period_us),
                             ("jam.jamming_period_us", self.jam.jamming_period_us)):
            if not values or any(v <= 0 for v in values):
                raise ConfigError(f"{name} must be a non-empty list of positive periods")
        if self.jam.strategy not in JAM_STRATEGIES:
            raise ConfigError(f"jam.strategy must be one of {JAM_STRATEGIES}")
        if self.jam.phase_us is not None and self.jam.phase_us < 0:
            raise ConfigError("jam.phase_us must be >= 0 or null")
        if self.eve.windows_per_trial < 1 or self.jam.symbols_per_trial < 1:
            raise ConfigError("windows_per_trial and symbols_per_trial must be >= 1")
        if self.trials < 1 or self.parallel < 1:
            raise ConfigError("trials and parallel must be >= 1")
        if self.ideal_trials < 10_000:
            raise ConfigError("ideal_trials must be >= 10000 for the Monte Carlo ideals")
        if self.kms.record_size_bits <= 0 or self.kms.record_size_bits % 8:
            raise ConfigError("kms.record_size_bits must be a positive multiple of 8")
        try:
            self.channel.plan()
        except (QkdFhssError, OSError) as exc:
            raise ConfigError(f"channel: {exc}") from exc
        return self

    def with_overrides(self, out=None, seed=None, trials=None, parallel=None):
        """Applies CLI flag overrides."""
        changes = {}
        if out is not None:
            changes["output_dir"] = out
        if seed is not None:
            changes["master_seed"] = int(seed)
        if trials is not None:
            changes["trials"] = int(trials)
        if parallel is not None:
            changes["parallel"] = int(parallel)
        return replace(self, **changes).validate() if changes else self

    def to_dict(self):
        return asdict(self)


def _reject_unknown(where, data, allowed):
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def load_config(path=None):
    """Reads a JSON config; no path gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)
