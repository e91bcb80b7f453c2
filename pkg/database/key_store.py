# database/key_store.py – key records behind the ETSI-style delivery API
# Secret keys from the QKD link are sliced into fixed-size records and handed out
# master-first (enc_keys), then to the slave by ID (dec_keys). Each record moves
# stored → delivered_enc → consumed and is never handed out twice.

import logging
import random
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

from database.init_db import connect
from sim_modules.errors import CapacityError, InsufficientKeysError, InvalidRequestError, UnknownKeyError

logger = logging.getLogger(__name__)

DEFAULT_RECORD_SIZE_BITS = 256
DEFAULT_MAX_KEY_COUNT = 100_000

STORED = "stored"
DELIVERED_ENC = "delivered_enc"
CONSUMED = "consumed"


@dataclass(frozen=True)
class KeyRecord:
    key_id: str
    octets: bytes
    state: str
    created_at: int


@dataclass(frozen=True)
class KeyContainer:
    keys: list = field(default_factory=list)

    def __len__(self):
        return len(self.keys)

    @property
    def key_ids(self):
        return [key_id for key_id, _ in self.keys]

    @property
    def octets(self):
        return b"".join(octets for _, octets in self.keys)


@dataclass(frozen=True)
class KeyStatus:
    stored_key_count: int
    key_size_bits: int
    max_key_count: int


def key_octets(key):
    """Byte material of a key: whole secret octets of a SecretKey, or the bytes themselves."""
    if hasattr(key, "whole_octets"):
        return bytes(key.whole_octets)
    return bytes(key.octets) if hasattr(key, "octets") else bytes(key)


class KeyStore:
    """
    Thread-safe record store on an in-memory sqlite database.
    One lock serialises every state transition, so concurrent requests are linearizable.
    With `uuid_seed` set, key IDs come from a seeded generator and reruns issue the same IDs.
    """

    def __init__(self, record_size_bits=DEFAULT_RECORD_SIZE_BITS, max_key_count=DEFAULT_MAX_KEY_COUNT,
                 uuid_seed=None, db_path=":memory:"):
        if record_size_bits <= 0 or record_size_bits % 8:
            raise InvalidRequestError(f"record size must be a positive multiple of 8 bits, got {record_size_bits}")
        if max_key_count <= 0:
            raise InvalidRequestError(f"max_key_count must be positive, got {max_key_count}")
        self.record_size_bits = int(record_size_bits)
        self.max_key_count = int(max_key_count)
        self._uuid_rng = random.Random(uuid_seed) if uuid_seed is not None else None
        self._conn = connect(db_path)
        self._lock = threading.Lock()

    @property
    def record_size_bytes(self):
        return self.record_size_bits // 8

    def close(self):
        with self._lock:
            self._conn.close()

    def _new_key_id(self):
        if self._uuid_rng is None:
            return str(uuid.uuid4())
        return str(uuid.UUID(int=self._uuid_rng.getrandbits(128), version=4))

    def _count(self, state):
        row = self._conn.execute("SELECT COUNT(*) FROM key_records WHERE state = ?", (state,)).fetchone()
        return int(row[0])

    def _log_delivery(self, rows, sae_id, direction):
        now = datetime.now(timezone.utc).isoformat()
        self._conn.executemany(
            "INSERT INTO deliveries (key_id, sae_id, direction, delivered_at) VALUES (?, ?, ?, ?)",
            [(row["key_id"], sae_id, direction, now) for row in rows],
        )
        for row in rows:
            logger.info("%s delivery key_id=%s sae_id=%s at %s", direction, row["key_id"], sae_id, now)

    def store_keys(self, keys):
        """
        Slices each key into records of record_size_bits and returns their IDs in creation order.
        Trailing material shorter than one record is discarded. Nothing is stored if the
        batch would push the stored pool past max_key_count.
        """
        size = self.record_size_bytes
        chunks = []
        for key in keys:
            octets = key_octets(key)
            if not octets:
                raise InvalidRequestError("cannot store an empty key")
            whole = len(octets) - len(octets) % size
            if whole < len(octets):
                logger.debug("discarding %d trailing bytes shorter than one record", len(octets) - whole)
            chunks.extend(octets[i:i + size] for i in range(0, whole, size))

        with self._lock, self._conn:
            stored = self._count(STORED)
            if stored + len(chunks) > self.max_key_count:
                raise CapacityError(
                    f"storing {len(chunks)} records would exceed max_key_count={self.max_key_count} ({stored} stored)")
            key_ids = [self._new_key_id() for _ in chunks]
            self._conn.executemany(
                "INSERT INTO key_records (key_id, octets, state) VALUES (?, ?, ?)",
                [(key_id, chunk, STORED) for key_id, chunk in zip(key_ids, chunks)],
            )
        logger.debug("stored %d records of %d bits", len(key_ids), self.record_size_bits)
        return key_ids

    def get_enc_keys(self, slave_sae_id, number=1, size=None):
        """Hands the `number` oldest stored records to the master and marks them delivered_enc."""
        if not slave_sae_id:
            raise InvalidRequestError("slave_sae_id is required")
        if isinstance(number, bool) or not isinstance(number, int) or number < 1:
            raise InvalidRequestError(f"number must be a positive integer, got {number!r}")
        if size is not None and (size <= 0 or size % 8 or size != self.record_size_bits):
            raise InvalidRequestError(f"size {size} does not match the record size {self.record_size_bits}")

        with self._lock, self._conn:
            rows = self._conn.execute(
                "SELECT seq, key_id, octets FROM key_records WHERE state = ? ORDER BY seq LIMIT ?",
                (STORED, number),
            ).fetchall()
            if len(rows) < number:
                raise InsufficientKeysError()
            self._conn.executemany(
                "UPDATE key_records SET state = ? WHERE seq = ?", [(DELIVERED_ENC, row["seq"]) for row in rows])
            self._log_delivery(rows, slave_sae_id, "enc")
        return KeyContainer(keys=[(row["key_id"], bytes(row["octets"])) for row in rows])

    def get_dec_keys(self, master_sae_id, key_ids):
        """
        Returns the octets of records already delivered to the master and marks them consumed.
        Any unknown, undelivered or consumed ID fails the whole request.
        """
        if not master_sae_id:
            raise InvalidRequestError("master_sae_id is required")
        key_ids = [str(key_id).lower() for key_id in key_ids]
        if not key_ids:
            raise InvalidRequestError("key_IDs must not be empty")
        if len(set(key_ids)) != len(key_ids):
            raise UnknownKeyError()

        with self._lock, self._conn:
            rows = []
            for key_id in key_ids:
                row = self._conn.execute(
                    "SELECT seq, key_id, octets FROM key_records WHERE key_id = ? AND state = ?",
                    (key_id, DELIVERED_ENC),
                ).fetchone()
                if row is None:
                    raise UnknownKeyError()
                rows.append(row)
            self._conn.executemany(
                "UPDATE key_records SET state = ? WHERE seq = ?", [(CONSUMED, row["seq"]) for row in rows])
            self._log_delivery(rows, master_sae_id, "dec")
        return KeyContainer(keys=[(row["key_id"], bytes(row["octets"])) for row in rows])

    def get_status(self, slave_sae_id=None):
        with self._lock:
            stored = self._count(STORED)
        return KeyStatus(stored_key_count=stored, key_size_bits=self.record_size_bits,
                         max_key_count=self.max_key_count)

    def get_record(self, key_id):
        with self._lock:
            row = self._conn.execute(
                "SELECT seq, key_id, octets, state FROM key_records WHERE key_id = ?", (str(key_id).lower(),)
            ).fetchone()
        if row is None:
            return None
        return KeyRecord(key_id=row["key_id"], octets=bytes(row["octets"]), state=row["state"],
                         created_at=int(row["seq"]))

    def deliveries(self):
        """Audit trail as (key_id, sae_id, direction) tuples in delivery order."""
        with self._lock:
            rows = self._conn.execute("SELECT key_id, sae_id, direction FROM deliveries ORDER BY id").fetchall()
        return [(row["key_id"], row["sae_id"], row["direction"]) for row in rows]
