# kms_api.py – HTTP face of the key store (ETSI GS QKD 014 style) and the client the hop planner uses
import base64
import json
import logging
import os
import re
import signal
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

import certifi
import requests
from dotenv import load_dotenv

from database.key_store import KeyContainer, KeyStatus, key_octets
from sim_modules.errors import (CapacityError, InsufficientKeysError, InvalidRequestError, KmsError,
                                StageError, UnknownKeyError)

logger = logging.getLogger(__name__)

# Service address from .env, same pattern as the other API modules
load_dotenv()
KMS_HOST = os.getenv("KMS_HOST", "127.0.0.1")
KMS_PORT = int(os.getenv("KMS_PORT", "8014"))
BASE_URL = os.getenv("KMS_BASE_URL", f"http://{KMS_HOST}:{KMS_PORT}")

_KEYS_ROUTE = re.compile(r"^/api/v1/keys/(?P<sae_id>[^/]+)/(?P<action>enc_keys|dec_keys|status)$")
_PUSH_ROUTE = "/api/v1/qkd/keys"


def container_to_wire(container):
    return {"keys": [{"key_ID": key_id, "key": base64.b64encode(octets).decode("ascii")}
                     for key_id, octets in container.keys]}


def container_from_wire(body):
    try:
        return KeyContainer(keys=[(item["key_ID"], base64.b64decode(item["key"], validate=True))
                                  for item in body["keys"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidRequestError(f"malformed key container: {exc}") from exc


def status_to_wire(status):
    return {"stored_key_count": status.stored_key_count, "key_size": status.key_size_bits,
            "max_key_count": status.max_key_count}


class KmsRequestHandler(BaseHTTPRequestHandler):
    """Routes the three ETSI endpoints plus the southbound push; the store is `self.server.store`."""

    server_version = "qkd-fhss-kms/1.0"

    def log_message(self, format, *args):
        logger.debug("%s %s", self.address_string(), format % args)

    def _send_json(self, status, body):
        payload = json.dumps(body, separators=(",", ":")).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _read_json(self):
        length = int(self.headers.get("Content-Length") or 0)
        try:
            return json.loads(self.rfile.read(length) or b"null")
        except json.JSONDecodeError as exc:
            raise InvalidRequestError(f"request body is not JSON: {exc}") from exc

    def _dispatch(self, handler):
        try:
            status, body = handler()
        except KmsError as exc:
            status, body = exc.status, {"message": exc.message}
        self._send_json(status, body)

    def do_GET(self):
        self._dispatch(self._handle_get)

    def do_POST(self):
        self._dispatch(self._handle_post)

    def _handle_get(self):
        url = urlsplit(self.path)
        match = _KEYS_ROUTE.match(url.path)
        store = self.server.store
        if match is None or match["action"] == "dec_keys":
            return 404, {"message": "not found"}
        if match["action"] == "status":
            return 200, status_to_wire(store.get_status(match["sae_id"]))

        query = parse_qs(url.query)
        try:
            number = int(query.get("number", ["1"])[0])
            size = int(query["size"][0]) if "size" in query else None
        except ValueError as exc:
            raise InvalidRequestError(f"bad query parameter: {exc}") from exc
        return 200, container_to_wire(store.get_enc_keys(match["sae_id"], number=number, size=size))

    def _handle_post(self):
        path = urlsplit(self.path).path
        store = self.server.store
        body = self._read_json()

        if path == _PUSH_ROUTE:
            try:
                keys = [base64.b64decode(item, validate=True) for item in body["keys"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidRequestError(f"malformed key push: {exc}") from exc
            return 200, {"key_IDs": store.store_keys(keys)}

        match = _KEYS_ROUTE.match(path)
        if match is None or match["action"] != "dec_keys":
            return 404, {"message": "not found"}
        try:
            key_ids = [item["key_ID"] for item in body["key_IDs"]]
        except (KeyError, TypeError) as exc:
            raise InvalidRequestError(f"malformed key_IDs: {exc}") from exc
        return 200, container_to_wire(store.get_dec_keys(match["sae_id"], key_ids))


def make_server(store, host=KMS_HOST, port=KMS_PORT):
    """Binds a threaded server over `store`; port 0 picks a free port (see server.server_address)."""
    try:
        server = ThreadingHTTPServer((host, port), KmsRequestHandler)
    except OSError as exc:
        raise StageError("kms serve", f"cannot bind {host}:{port}: {exc}") from exc
    server.daemon_threads = True
    server.store = store
    return server


def serve_kms(store, host=KMS_HOST, port=KMS_PORT):
    """Serves until SIGINT/SIGTERM, then shuts down cleanly."""
    server = make_server(store, host, port)

    def _stop(signum, frame):
        logger.info("received signal %d, shutting down", signum)
        # shutdown() blocks until serve_forever returns, so it cannot run on the serving thread
        threading.Thread(target=server.shutdown, daemon=True).start()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    bound_host, bound_port = server.server_address[:2]
    logger.info("KMS listening on http://%s:%d", bound_host, bound_port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        logger.info("KMS stopped")


# Session with certifi certificates for when the endpoint sits behind HTTPS
def create_robust_session():
    session = requests.Session()
    session.headers.update({"User-Agent": "qkd-fhss-client/1.0", "Accept": "application/json"})
    session.verify = certifi.where()
    return session


# Retries transport failures only; an HTTP error status is part of the API contract and is returned as is
def robust_request(session, method, url, retries=2, timeout=30, **kwargs):
    last_error = None
    for attempt in range(retries):
        try:
            return session.request(method, url, timeout=timeout, **kwargs)
        except (requests.ConnectionError, requests.Timeout) as e:
            last_error = e
            logger.warning("Request failed (attempt %d): %s", attempt + 1, e)
            time.sleep(1)
    raise KmsError(f"KMS unreachable at {url}: {last_error}")


def _raise_for_body(res):
    try:
        message = res.json().get("message")
    except ValueError:
        message = res.text or None
    if res.status_code == 503:
        if message == InsufficientKeysError.message:
            raise InsufficientKeysError()
        raise CapacityError(message)
    if message == UnknownKeyError.message:
        raise UnknownKeyError()
    raise InvalidRequestError(f"HTTP {res.status_code}: {message}")


class KmsClient:
    """
    Remote twin of KeyStore: same method names, same return types, same exceptions.
    Lets the experiment pipeline swap an in-process store for a running `kms serve`.
    """

    def __init__(self, base_url=BASE_URL, retries=2, timeout=30):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.timeout = timeout
        self.session = create_robust_session()

    def _call(self, method, path, **kwargs):
        res = robust_request(self.session, method, f"{self.base_url}{path}", self.retries, self.timeout, **kwargs)
        if res.status_code != 200:
            _raise_for_body(res)
        return res.json()

    def store_keys(self, keys):
        payload = {"keys": [base64.b64encode(key_octets(k)).decode("ascii") for k in keys]}
        return self._call("POST", _PUSH_ROUTE, json=payload)["key_IDs"]

    def get_enc_keys(self, slave_sae_id, number=1, size=None):
        params = {"number": number}
        if size is not None:
            params["size"] = size
        return container_from_wire(self._call("GET", f"/api/v1/keys/{slave_sae_id}/enc_keys", params=params))

    def get_dec_keys(self, master_sae_id, key_ids):
        payload = {"key_IDs": [{"key_ID": key_id} for key_id in key_ids]}
        return container_from_wire(self._call("POST", f"/api/v1/keys/{master_sae_id}/dec_keys", json=payload))

    def get_status(self, slave_sae_id):
        body = self._call("GET", f"/api/v1/keys/{slave_sae_id}/status")
        return KeyStatus(stored_key_count=body["stored_key_count"], key_size_bits=body["key_size"],
                         max_key_count=body["max_key_count"])
