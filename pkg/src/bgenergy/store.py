"""Append-only CSV run store.

Each measurement record becomes one row per energy domain plus a ``total``
row. Failed runs get a single ``total`` row with empty energy fields.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import StoreFormatError

HEADER = [
    "run_id",
    "workload",
    "variant",
    "file_size_bytes",
    "repetition",
    "is_control",
    "domain",
    "joules",
    "duration_s",
    "trigger_firings",
    "saves_performed",
    "saves_skipped",
    "bytes_written",
    "log_records",
    "started_at",
    "status",
]

STATS_FIELDS = ("trigger_firings", "saves_performed", "saves_skipped", "bytes_written", "log_records")

CONTROL_VARIANT = "control"


@dataclass(frozen=True, order=True)
class RunCoordinates:
    workload: str
    variant: str
    file_size_bytes: int
    repetition: int
    is_control: bool = False


@dataclass
class StoredRecord:
    run_id: str
    coords: RunCoordinates
    status: str
    started_at: str
    duration_s: float | None = None
    per_domain_j: dict[str, float] = field(default_factory=dict)
    stats: dict[str, int] | None = None
    first_line: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def joules(self, domain: str = "total") -> float:
        return self.per_domain_j[domain]


def record_rows(
    run_id: str,
    coords: RunCoordinates,
    status: str,
    started_at: str,
    per_domain_j: dict[str, float] | None,
    duration_s: float | None,
    stats: dict[str, int] | None,
) -> list[dict]:
    base = {
        "run_id": run_id,
        "workload": coords.workload,
        "variant": coords.variant,
        "file_size_bytes": coords.file_size_bytes,
        "repetition": coords.repetition,
        "is_control": int(coords.is_control),
        "duration_s": "" if duration_s is None else repr(duration_s),
        "started_at": started_at,
        "status": status,
    }
    for name in STATS_FIELDS:
        base[name] = "" if stats is None else stats[name]
    if not per_domain_j:
        return [{**base, "domain": "total", "joules": ""}]
    rows = [{**base, "domain": d, "joules": repr(j)} for d, j in per_domain_j.items()]
    rows.append({**base, "domain": "total", "joules": repr(float(sum(per_domain_j.values())))})
    return rows


class RunStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    def ensure_header(self) -> None:
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="", encoding="utf-8") as f:
                csv.writer(f).writerow(HEADER)

    def append(self, rows: Iterable[dict]) -> None:
        self.ensure_header()
        with open(self.path, "a", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=HEADER)
            for row in rows:
                writer.writerow(row)
            f.flush()
            os.fsync(f.fileno())

    def load(self) -> list[StoredRecord]:
        return load_store(self.path)


def _parse_int(value: str, name: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise StoreFormatError(f"{name} is not an integer: {value!r}", line) from None


def _parse_float(value: str, name: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise StoreFormatError(f"{name} is not a number: {value!r}", line) from None


def load_store(path: str | Path) -> list[StoredRecord]:
    """Parse a run store; later records for a run_id replace earlier ones."""
    path = Path(path)
    if not path.exists():
        raise StoreFormatError(f"run store {path} does not exist")
    records: dict[str, StoredRecord] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise StoreFormatError("empty file", 1) from None
        if header != HEADER:
            raise StoreFormatError(f"unexpected header {header}", 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(HEADER):
                raise StoreFormatError(f"expected {len(HEADER)} fields, got {len(row)}", line)
            r = dict(zip(HEADER, row))
            if r["is_control"] not in ("0", "1"):
                raise StoreFormatError(f"is_control must be 0 or 1: {r['is_control']!r}", line)
            if r["status"] not in ("ok", "failed"):
                raise StoreFormatError(f"unknown status {r['status']!r}", line)
            coords = RunCoordinates(
                workload=r["workload"],
                variant=r["variant"],
                file_size_bytes=_parse_int(r["file_size_bytes"], "file_size_bytes", line),
                repetition=_parse_int(r["repetition"], "repetition", line),
                is_control=r["is_control"] == "1",
            )
            run_id = r["run_id"]
            rec = records.get(run_id)
            # A new started_at for a known run_id means the run was re-executed.
            if rec is not None and (rec.started_at != r["started_at"] or rec.status != r["status"]):
                rec = None
            if rec is None:
                stats = None
                if r["trigger_firings"] != "":
                    stats = {n: _parse_int(r[n], n, line) for n in STATS_FIELDS}
                rec = StoredRecord(
                    run_id=run_id,
                    coords=coords,
                    status=r["status"],
                    started_at=r["started_at"],
                    duration_s=None if r["duration_s"] == "" else _parse_float(r["duration_s"], "duration_s", line),
                    stats=stats,
                    first_line=line,
                )
                records[run_id] = rec
            elif rec.coords != coords:
                raise StoreFormatError(f"run {run_id} changes coordinates", line)
            if r["joules"] != "":
                j = _parse_float(r["joules"], "joules", line)
                if j < 0:
                    raise StoreFormatError("negative energy", line)
                rec.per_domain_j[r["domain"]] = j
            elif rec.ok:
                raise StoreFormatError("ok record without energy", line)
    for rec in records.values():
        if rec.ok and "total" not in rec.per_domain_j:
            raise StoreFormatError(f"run {rec.run_id} has no total row", rec.first_line)
    return sorted(records.values(), key=lambda rec: rec.first_line)
