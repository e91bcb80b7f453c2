import logging

import numpy as np
import pandas as pd
import pytest
from pytest import mark

from database.key_store import KeyStore
from sim_modules.errors import DomainError, EmptyScheduleError
from sim_modules.hopplan import (SCHEDULE_COLUMNS, _warn_bias, build_channel_table, derive_hop_schedule,
                                 dump_schedule_csv, index_bias_ratio, load_channel_table, save_channel_table,
                                 verify_sync)
from sim_modules.randomness import index_uniformity


def test_default_channel_table(plan):
    assert plan.n_channels == 128
    assert plan.frequency(0) == 2.400e9
    assert plan.frequency(5) == pytest.approx(2.405e9)
    assert plan.nearest_index(2.4052e9) == 5
    assert plan.nearest_index(1.0e9) == 0
    assert plan.nearest_index(9.0e9) == 127


@mark.parametrize("n_channels", [0, 257])
def test_channel_count_bounds(n_channels):
    with pytest.raises(DomainError):
        build_channel_table(n_channels=n_channels)


def test_channel_table_file_round_trip(tmp_path):
    plan = build_channel_table(5.0e9, 2.0e6, 16)
    path = tmp_path / "table.csv"
    save_channel_table(plan, path)
    loaded = load_channel_table(path)
    assert loaded.n_channels == 16
    assert loaded.spacing_hz == pytest.approx(2.0e6)
    assert np.allclose(loaded.table, plan.table)


def test_channel_table_file_validation(tmp_path):
    bad_header = tmp_path / "header.csv"
    pd.DataFrame({"idx": [0, 1], "freq": [1.0, 2.0]}).to_csv(bad_header, index=False)
    with pytest.raises(DomainError):
        load_channel_table(bad_header)

    gap = tmp_path / "gap.csv"
    pd.DataFrame({"index": [0, 2], "freq_hz": [1.0, 2.0]}).to_csv(gap, index=False)
    with pytest.raises(DomainError):
        load_channel_table(gap)

    descending = tmp_path / "descending.csv"
    pd.DataFrame({"index": [0, 1], "freq_hz": [2.0, 1.0]}).to_csv(descending, index=False)
    with pytest.raises(DomainError):
        load_channel_table(descending)


def test_schedule_from_key_bytes(plan):
    schedule = derive_hop_schedule(bytes([0, 1, 127, 128, 255]), plan, 5000)
    assert schedule.indices.tolist() == [0, 1, 127, 0, 127]
    assert schedule.starts.tolist() == [0, 5000, 10000, 15000, 20000]
    assert set(schedule.durations.tolist()) == {5000}
    assert schedule.span_us == 25000
    assert schedule.index_at([0, 4999, 5000, 24999]).tolist() == [0, 0, 1, 127]


def test_schedule_errors(plan):
    with pytest.raises(EmptyScheduleError):
        derive_hop_schedule(b"", plan, 5000)
    with pytest.raises(DomainError):
        derive_hop_schedule(b"\x01", plan, 0)


def test_schedule_is_deterministic(plan, key_bytes):
    a = derive_hop_schedule(key_bytes, plan, 1000)
    b = derive_hop_schedule(key_bytes, plan, 1000)
    assert a.entries == b.entries


def test_non_divisor_channel_count_warns(caplog):
    _warn_bias.cache_clear()
    plan = build_channel_table(n_channels=100)
    with caplog.at_level(logging.WARNING, logger="sim_modules.hopplan"):
        derive_hop_schedule(b"\x05\x06", plan, 1000)
    assert "does not divide 256" in caplog.text
    assert index_bias_ratio(100) == pytest.approx(1.5)
    assert index_bias_ratio(128) == 1.0


def test_verify_sync_full_match(plan, key_bytes):
    tx = derive_hop_schedule(key_bytes, plan, 5000)
    rx = derive_hop_schedule(key_bytes, plan, 5000)
    assert verify_sync(tx, rx).to_dict() == {"full_match": True, "entry": None, "field": None}


def test_verify_sync_reports_first_divergence(plan, key_bytes):
    tx = derive_hop_schedule(key_bytes, plan, 5000)
    tampered = bytearray(key_bytes)
    tampered[7] = (tampered[7] + 1) % 256
    tampered[90] = (tampered[90] + 1) % 256
    report = verify_sync(tx, derive_hop_schedule(bytes(tampered), plan, 5000))
    assert not report.full_match
    assert (report.entry, report.field) == (7, "index")

    shifted = derive_hop_schedule(key_bytes, plan, 5000, start_us=10)
    assert (verify_sync(tx, shifted).entry, verify_sync(tx, shifted).field) == (0, "start_us")

    assert verify_sync(tx, derive_hop_schedule(key_bytes, plan, 1000)).field == "hop_interval_us"

    short = derive_hop_schedule(key_bytes[:100], plan, 5000)
    assert (verify_sync(tx, short).entry, verify_sync(tx, short).field) == (100, "length")


def test_dump_schedule_csv(tmp_path, plan, key_bytes):
    schedule = derive_hop_schedule(key_bytes[:50], plan, 1000)
    path = tmp_path / "out" / "schedule.csv"
    dump_schedule_csv(schedule, plan, str(path))
    df = pd.read_csv(path)
    assert list(df.columns) == SCHEDULE_COLUMNS
    assert len(df) == 50
    assert df["freq_hz"].iloc[3] == pytest.approx(plan.frequency(int(df["index"].iloc[3])))


def test_delivered_bytes_give_uniform_hop_indices(plan):
    store = KeyStore(record_size_bits=256, max_key_count=5000, uuid_seed=2)
    key = np.random.default_rng(2024).integers(0, 256, size=100_000, dtype=np.uint8).tobytes()
    ids = store.store_keys([key])
    enc = store.get_enc_keys("rx", number=len(ids), size=256)
    dec = store.get_dec_keys("tx", enc.key_ids)
    assert len(enc.octets) == 100_000

    tx = derive_hop_schedule(enc.octets, plan, 5000)
    rx = derive_hop_schedule(dec.octets, plan, 5000)
    assert verify_sync(tx, rx).full_match
    assert index_uniformity(tx.indices, plan.n_channels).p_value > 0.001


@mark.parametrize("n_channels", [2, 64, 128, 256])
def test_divisor_channel_counts_are_uniform(n_channels):
    plan = build_channel_table(n_channels=n_channels)
    key = np.random.default_rng(100 + n_channels).integers(0, 256, size=100_000, dtype=np.uint8).tobytes()
    schedule = derive_hop_schedule(key, plan, 1000)
    result = index_uniformity(schedule.indices, n_channels)
    assert result.dof == n_channels - 1
    assert result.p_value > 0.001


@mark.parametrize("seed", [0, 1, 2])
def test_ten_thousand_bytes_cover_every_channel(plan, seed):
    key = np.random.default_rng(seed).integers(0, 256, size=10_000, dtype=np.uint8).tobytes()
    schedule = derive_hop_schedule(key, plan, 5000)
    assert set(schedule.indices.tolist()) == set(range(plan.n_channels))


@mark.parametrize("plan_args", [(2.400e9, 1.0e6, 128), (5.0e9, 2.0e6, 16), (900.0e6, 25.0e3, 256)])
@mark.parametrize("fraction", [-0.49, -0.25, 0.0, 0.25, 0.49])
def test_offset_frequencies_map_back_to_their_channel(plan_args, fraction):
    plan = build_channel_table(*plan_args)
    offset = fraction * plan.spacing_hz
    assert [plan.nearest_index(plan.frequency(i) + offset) for i in range(plan.n_channels)] == list(range(plan.n_channels))
