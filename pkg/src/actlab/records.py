"""Run-record persistence: every command that computes numbers writes a
self-contained JSON record plus CSV artifacts into a fresh run directory.

A record carries the schema version, the command name, the full resolved
config (including every seed and dataset spec), the numeric results, and
SHA-256 digests of the CSV artifacts.  Re-running the command from the
stored config must reproduce every CSV byte-for-byte; ``replay`` checks
exactly that.  Run directories are append-only: names embed a UTC
timestamp plus a config hash, and creation fails rather than reuses.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
from pathlib import Path

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "SchemaVersionMismatch",
    "HashMismatch",
    "new_run_dir",
    "write_csv",
    "sha256_file",
    "write_record",
    "load_record",
]


class SchemaVersionMismatch(ValueError):
    pass


class HashMismatch(ValueError):
    pass


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:8]


def new_run_dir(out_dir, config: dict) -> Path:
    """Create ``<out_dir>/<utc-timestamp>-<config-hash>/`` exclusively."""
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S.%f")
    run_dir = Path(out_dir) / f"{stamp}-{_config_hash(config)}"
    run_dir.mkdir(parents=True, exist_ok=False)
    return run_dir


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal
    return str(value)


def write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_record(
    run_dir: Path,
    command: str,
    config: dict,
    results: dict,
    artifacts: list[str],
    wall_time: float,
) -> Path:
    record = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "results": results,
        "artifacts": {name: sha256_file(Path(run_dir) / name) for name in artifacts},
        "wall_time": wall_time,
    }
    path = Path(run_dir) / "record.json"
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_record(path) -> dict:
    with open(path) as fh:
        record = json.load(fh)
    version = record.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"record schema {version!r}, this build reads {SCHEMA_VERSION}"
        )
    return record
