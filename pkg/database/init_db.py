# database/init_db.py
import os
import sqlite3
import sys

SCHEMA_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "schema.sql")


def run_schema(conn):
    """
    Applies the key-store schema from schema.sql to an open sqlite connection.
    Every statement is idempotent, so applying it twice is harmless.
    """

    # Read the entire schema.sql file as one string of SQL commands
    with open(SCHEMA_PATH, "r") as f:
        schema = f.read()

    conn.executescript(schema)
    conn.commit()


def connect(db_path=":memory:"):
    """
    Opens a connection with the schema applied. The key store shares one connection across
    the service's request threads and serialises access itself.
    """
    conn = sqlite3.connect(db_path, check_same_thread=False)
    conn.row_factory = sqlite3.Row
    run_schema(conn)
    return conn


# Applying the schema to a file is handy for inspecting an exported audit trail
if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "keys.db"
    connect(target).close()
    print(f"Schema applied successfully to {target}")
