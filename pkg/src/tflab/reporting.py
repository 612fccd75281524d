"""Deterministic CSV and JSON-lines output.

Every file starts with a schema line carrying the schema name, version and
the config hash; rows are appended and flushed as they are produced so a
crashed run leaves a valid prefix. Floats are serialized with 17
significant digits (round-trip exact). No wall-clock data is written:
outputs are byte-identical for identical (config, seed) regardless of
thread count.
"""

from __future__ import annotations

import json


def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


class CsvWriter:
    def __init__(self, path, schema: str, columns: list, config_hash: str):
        self.path = path
        self.columns = list(columns)
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(f"# tflab-csv schema={schema} version=1 config={config_hash}\n")
        self._fh.write(",".join(self.columns) + "\n")
        self._fh.flush()

    def write_row(self, row: dict) -> None:
        self._fh.write(",".join(fmt(row.get(c, "")) for c in self.columns) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class JsonlWriter:
    def __init__(self, path, schema: str, config_hash: str):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self.write({"schema": schema, "version": 1, "config": config_hash})

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True, default=fmt) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv_body(path) -> str:
    """File contents minus the schema comment line (used by merge guards)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    return "".join(line for line in lines if not line.startswith("#"))


def csv_config_hash(path) -> str | None:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    for token in first.strip().split():
        if token.startswith("config="):
            return token.split("=", 1)[1]
    return None
