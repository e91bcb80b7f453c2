import threading

import numpy as np
import pytest

from api_modules.kms_api import make_server
from database.key_store import KeyStore
from sim_modules.hopplan import build_channel_table
from sim_modules.qkdlink import QkdLinkConfig, run_qkd_link


@pytest.fixture
def plan():
    return build_channel_table()


@pytest.fixture
def key_bytes():
    return np.random.default_rng(7).integers(0, 256, size=4096, dtype=np.uint8).tobytes()


@pytest.fixture(scope="session")
def small_run():
    return run_qkd_link(QkdLinkConfig(n_pulses=200_000, seed=3))


@pytest.fixture
def store():
    store = KeyStore(record_size_bits=256, max_key_count=1000, uuid_seed=11)
    yield store
    store.close()


@pytest.fixture
def kms_server(store):
    server = make_server(store, "127.0.0.1", 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    yield f"http://{host}:{port}"
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)
