import math

import numpy as np
import pytest
from pytest import mark

from sim_modules.airsim import (EveConfig, JamConfig, SweepConfig, SymbolConfig, run_eavesdropper, run_jammer,
                                run_link, sweep_metric)
from sim_modules.errors import DomainError
from sim_modules.hopplan import build_channel_table, derive_hop_schedule
from sim_modules.oracle import ideal_detection_probability, ideal_jamming_ser

ALIGNED_SER = 382 / 16384


def _schedule(plan, hops, hop_interval_us, seed=0):
    key = np.random.default_rng(seed).integers(0, 256, size=hops, dtype=np.uint8).tobytes()
    return derive_hop_schedule(key, plan, hop_interval_us)


def test_symbol_config():
    sym = SymbolConfig.for_hop(5000, 500)
    assert sym.symbols_per_hop == 10
    assert sym.hop_interval_us == 5000
    with pytest.raises(DomainError):
        SymbolConfig.for_hop(5000, 300)


def test_adversary_config_validation():
    with pytest.raises(DomainError):
        EveConfig(1000, phase_us=1000)
    with pytest.raises(DomainError):
        EveConfig(1000, sampling="burst")
    with pytest.raises(DomainError):
        JamConfig(0)
    with pytest.raises(DomainError):
        JamConfig(1000, strategy="smart")
    with pytest.raises(DomainError):
        JamConfig(1000, adjacency="wrap")


def test_synchronized_link_is_error_free(plan):
    tx = _schedule(plan, 500, 5000)
    rx = _schedule(plan, 500, 5000)
    report = run_link(tx, rx, SymbolConfig.for_hop(5000))
    assert report.symbols == 5000
    assert report.errors == 0
    assert report.ser == 0.0


def test_one_wrong_hop_loses_its_symbols(plan):
    key = bytearray(np.random.default_rng(1).integers(0, 256, size=200, dtype=np.uint8).tobytes())
    tx = derive_hop_schedule(bytes(key), plan, 5000)
    key[42] = (key[42] + 1) % 256
    rx = derive_hop_schedule(bytes(key), plan, 5000)
    assert run_link(tx, rx, SymbolConfig.for_hop(5000)).errors == 10


def test_link_rejects_mismatched_spans(plan):
    with pytest.raises(DomainError):
        run_link(_schedule(plan, 10, 5000), _schedule(plan, 11, 5000), SymbolConfig.for_hop(5000))


def test_hop_aligned_windows_always_intercept(plan):
    tx = _schedule(plan, 1000, 5000)
    report = run_eavesdropper(tx, plan, EveConfig(5000, 0, sampling="contiguous"))
    assert report.windows == 1000
    assert report.probability == 1.0


def test_random_phase_detection_matches_closed_form(plan):
    tx = _schedule(plan, 20_000, 5000, seed=4)
    report = run_eavesdropper(tx, plan, EveConfig(5000, 0), seed=5)
    assert report.windows == 20_000
    assert report.probability == pytest.approx(1 - 0.5 * (127 / 128), abs=0.02)


def test_detection_period_longer_than_schedule(plan):
    with pytest.raises(DomainError):
        run_eavesdropper(_schedule(plan, 3, 1000), plan, EveConfig(5000))


def test_eavesdropper_noise_is_seeded(plan):
    tx = _schedule(plan, 400, 1000)
    eve = EveConfig(2500, 100, noise_power=0.5)
    assert run_eavesdropper(tx, plan, eve, seed=3) == run_eavesdropper(tx, plan, eve, seed=3)


def test_follow_jammer_hits_everything(plan):
    report = run_jammer(_schedule(plan, 50, 5000), plan, JamConfig(5000, strategy="follow"), SymbolConfig.for_hop(5000))
    assert report.ser == 1.0
    assert report.sir_db == -20.0


def test_aligned_jamming_ser():
    plan = build_channel_table()
    tx = _schedule(plan, 100_000, 500, seed=6)
    report = run_jammer(tx, plan, JamConfig(500, 0), SymbolConfig.for_hop(500, 500), seed=7)
    sigma = math.sqrt(ALIGNED_SER * (1 - ALIGNED_SER) / report.symbols)
    assert report.symbols == 100_000
    assert abs(report.ser - ALIGNED_SER) <= 3 * sigma


@mark.parametrize("n_channels, expected", [(2, 1.0), (3, 7 / 9)])
def test_narrow_band_jamming(n_channels, expected):
    plan = build_channel_table(n_channels=n_channels)
    tx = _schedule(plan, 30_000, 500, seed=8)
    report = run_jammer(tx, plan, JamConfig(500, 0), SymbolConfig.for_hop(500, 500), seed=9)
    sigma = math.sqrt(expected * (1 - expected) / report.symbols)
    assert abs(report.ser - expected) <= 3 * sigma + 1e-12


def test_sweep_jammer_is_seeded(plan):
    tx = _schedule(plan, 400, 1000)
    jam = JamConfig(700, 50, strategy="sweep")
    sym = SymbolConfig.for_hop(1000, 500)
    assert run_jammer(tx, plan, jam, sym, seed=2) == run_jammer(tx, plan, jam, sym, seed=2)


def _small_base(**overrides):
    settings = dict(hop_interval_us=5000, windows_per_trial=200, symbols_per_trial=2000)
    settings.update(overrides)
    return SweepConfig(**settings)


def test_sweep_rows_follow_given_order():
    series = sweep_metric(_small_base(), "detection_period_us", [2500, 500, 1000], trials=2, seed=1)
    assert [row.value_us for row in series] == [2500, 500, 1000]
    assert all(row.metric == "detect_prob" and row.trials == 2 for row in series)
    assert all(row.ci95_low <= row.mean <= row.ci95_high for row in series)
    assert list(series.to_frame().columns) == ["swept_param", "value_us", "hop_interval_us", "metric", "mean",
                                               "ci95_low", "ci95_high", "peak_over_phase", "trials", "seed"]


def test_single_trial_ci_is_degenerate():
    row = sweep_metric(_small_base(), "jamming_period_us", [5000], trials=1, seed=3).rows[0]
    assert row.degenerate_ci
    assert row.ci95_low == row.mean == row.ci95_high


def test_sweep_argument_checks():
    with pytest.raises(DomainError):
        sweep_metric(_small_base(), "hop_interval_us", [1000], trials=1, seed=0)
    with pytest.raises(DomainError):
        sweep_metric(_small_base(), "detection_period_us", [], trials=1, seed=0)
    with pytest.raises(DomainError):
        sweep_metric(_small_base(), "detection_period_us", [1000], trials=0, seed=0)


def test_parallel_and_serial_sweeps_agree():
    base = _small_base(hop_interval_us=1000)
    serial = sweep_metric(base, "detection_period_us", [500, 2500], trials=3, seed=10)
    parallel = sweep_metric(base, "detection_period_us", [500, 2500], trials=3, seed=10, parallel=2)
    assert serial.rows == parallel.rows


def test_detection_nonincreasing_up_to_two_hops():
    values = [500, 1000, 2500, 5000, 10000]
    series = sweep_metric(_small_base(windows_per_trial=500), "detection_period_us", values, trials=4, seed=2)
    means = [row.mean for row in series]
    assert all(later <= earlier + 0.02 for earlier, later in zip(means, means[1:]))


def test_jamming_grows_as_dwell_shrinks():
    values = [5000, 2500, 1000, 500, 250]
    series = sweep_metric(_small_base(jam_phase_us=0), "jamming_period_us", values, trials=4, seed=5)
    means = [row.mean for row in series]
    assert all(later >= earlier - 0.01 for earlier, later in zip(means, means[1:]))
    assert means[-1] > means[0]


def _within(measured, ideal):
    combined = math.sqrt(measured.std_error ** 2 + ideal.std_error ** 2)
    return abs(measured.mean - ideal.mean) <= 3 * combined


@mark.slow
@mark.parametrize("hop_interval_us", [5000, 1000])
def test_detection_sweep_tracks_ideal(hop_interval_us):
    values = [500, 1000, 2500, 5000, 10000, 20000]
    base = SweepConfig(hop_interval_us=hop_interval_us, windows_per_trial=1000)
    series = sweep_metric(base, "detection_period_us", values, trials=30, seed=21)
    for row in series:
        ideal = ideal_detection_probability(hop_interval_us, row.value_us, 128, trials=100_000, seed=1)
        assert _within(row, ideal), (row.value_us, row.mean, ideal.mean)
    if hop_interval_us == 5000:
        at_th = next(row for row in series if row.value_us == 5000)
        assert at_th.mean == pytest.approx(0.504, abs=0.02)


@mark.slow
def test_jamming_sweep_tracks_ideal():
    values = [250, 500, 1000, 2500, 5000]
    base = SweepConfig(hop_interval_us=5000, symbols_per_trial=10_000, jam_phase_us=0)
    series = sweep_metric(base, "jamming_period_us", values, trials=30, seed=31)
    for row in series:
        ideal = ideal_jamming_ser(5000, row.value_us, 500, 128, phase_us=0)
        assert _within(row, ideal), (row.value_us, row.mean, ideal.mean)


def test_jamming_grid_over_hop_and_dwell():
    hop_intervals = [5000, 2500, 1000]
    dwells = [2500, 500, 250]
    grid = {}
    for hop_interval_us in hop_intervals:
        base = _small_base(hop_interval_us=hop_interval_us, symbols_per_trial=5000, jam_phase_us=0)
        series = sweep_metric(base, "jamming_period_us", dwells, trials=4, seed=40)
        grid[hop_interval_us] = [row.mean for row in series]

    for means in grid.values():
        assert all(later >= earlier - 0.005 for earlier, later in zip(means, means[1:]))
        assert means[-1] > means[0] + 0.01
    for column, t_j in enumerate(dwells):
        ideal = ideal_jamming_ser(5000, t_j, 500, 128, phase_us=0).mean
        column_means = [grid[hop_interval_us][column] for hop_interval_us in hop_intervals]
        assert max(column_means) - min(column_means) <= 0.01
        assert all(abs(mean - ideal) <= 0.008 for mean in column_means)
