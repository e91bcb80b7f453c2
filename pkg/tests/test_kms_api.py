from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from api_modules.kms_api import KmsClient, container_from_wire, container_to_wire
from database.key_store import KeyContainer
from sim_modules.errors import InsufficientKeysError, InvalidRequestError, KmsError, UnknownKeyError


def _key(n_bytes, fill=0):
    return bytes((fill + i) % 256 for i in range(n_bytes))


def test_status_over_http(kms_server):
    res = requests.get(f"{kms_server}/api/v1/keys/fhss-rx/status", timeout=5)
    assert res.status_code == 200
    assert res.json() == {"stored_key_count": 0, "key_size": 256, "max_key_count": 1000}


def test_client_round_trip(kms_server):
    client = KmsClient(kms_server, retries=1, timeout=5)
    key_ids = client.store_keys([_key(96, 3)])
    assert len(key_ids) == 3
    assert client.get_status("fhss-rx").stored_key_count == 3

    enc = client.get_enc_keys("fhss-rx", number=3, size=256)
    assert enc.key_ids == key_ids
    dec = client.get_dec_keys("fhss-tx", enc.key_ids)
    assert dec.octets == enc.octets == _key(96, 3)
    assert client.get_status("fhss-rx").stored_key_count == 0


def test_error_bodies_are_exact(kms_server, store):
    res = requests.get(f"{kms_server}/api/v1/keys/fhss-rx/enc_keys?number=1", timeout=5)
    assert res.status_code == 503
    assert res.content == b'{"message":"insufficient keys"}'

    res = requests.post(f"{kms_server}/api/v1/keys/fhss-tx/dec_keys",
                        json={"key_IDs": [{"key_ID": "00000000-0000-4000-8000-000000000000"}]}, timeout=5)
    assert res.status_code == 400
    assert res.content == b'{"message":"unknown or consumed key_ID"}'


def test_client_maps_errors_back(kms_server):
    client = KmsClient(kms_server, retries=1, timeout=5)
    with pytest.raises(InsufficientKeysError):
        client.get_enc_keys("fhss-rx")
    with pytest.raises(UnknownKeyError):
        client.get_dec_keys("fhss-tx", ["00000000-0000-4000-8000-000000000000"])
    client.store_keys([_key(32)])
    with pytest.raises(InvalidRequestError):
        client.get_enc_keys("fhss-rx", size=128)


def test_bad_query_and_routes(kms_server):
    res = requests.get(f"{kms_server}/api/v1/keys/fhss-rx/enc_keys?number=two", timeout=5)
    assert res.status_code == 400
    assert requests.get(f"{kms_server}/api/v1/unknown", timeout=5).status_code == 404
    assert requests.get(f"{kms_server}/api/v1/keys/fhss-tx/dec_keys", timeout=5).status_code == 404
    assert requests.post(f"{kms_server}/api/v1/keys/fhss-rx/enc_keys", json={}, timeout=5).status_code == 404


def test_concurrent_http_requests_get_disjoint_records(kms_server, store):
    store.store_keys([_key(32 * 20)])

    def fetch(_):
        return requests.get(f"{kms_server}/api/v1/keys/fhss-rx/enc_keys?number=2", timeout=10).json()

    with ThreadPoolExecutor(max_workers=10) as pool:
        bodies = list(pool.map(fetch, range(10)))
    key_ids = [item["key_ID"] for body in bodies for item in body["keys"]]
    assert len(key_ids) == 20
    assert len(set(key_ids)) == 20


def test_wire_container_round_trip():
    container = KeyContainer(keys=[("a", b"\x00\x01"), ("b", b"\xff")])
    assert container_from_wire(container_to_wire(container)) == container
    with pytest.raises(InvalidRequestError):
        container_from_wire({"keys": [{"key_ID": "a", "key": "not base64!"}]})


def test_unreachable_service_raises():
    client = KmsClient("http://127.0.0.1:1", retries=1, timeout=1)
    with pytest.raises(KmsError):
        client.get_status("fhss-rx")

