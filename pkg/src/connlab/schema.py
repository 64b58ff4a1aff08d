"""Connection-log data model, serialization and ingestion.

One :class:`ConnectionAttempt` is one row of a connection log. Records are
validated when constructed, so every attempt held in memory satisfies the
outcome/time coupling and the RSSI ceiling. Ingestion repairs what it can
(RSSI above the ceiling is clamped, unknown outcome strings become
``Unknown``) and rejects the rest with a row-numbered diagnostic.

CSV column order (header row required)::

    attempt_id,user_id,hour_of_day,rssi_dbm,num_devices,device_model,
    ap_model,encrypted,is_public,band,outcome,connection_time_ms,
    scan_ms,assoc_ms,auth_ms,dhcp_ms

JSONL objects use the same names, with the four phase columns nested under
``phases`` (``null`` when the attempt was not breakdown-instrumented).
Absent optional values are empty cells in CSV and ``null`` in JSONL.
"""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, TextIO

RSSI_CEILING_DBM = -55
TIMEOUT_MS = 30_000


class SchemaError(ValueError):
    """A record violates a log-schema invariant."""


class IngestError(Exception):
    """The stream itself cannot be read in the declared format."""


class Outcome(str, Enum):
    SUCCESS = "Success"
    TIMEOUT = "Timeout"
    DHCP_FAILURE = "DhcpFailure"
    WRONG_PASSWORD = "WrongPassword"
    SWITCHED_TO_ANOTHER_WIFI = "SwitchedToAnotherWifi"
    FORGOT_WIFI = "ForgotWifi"
    SWITCHED_OFF_WIFI = "SwitchedOffWifi"
    UNKNOWN = "Unknown"

    @property
    def willing(self) -> bool:
        """True for outcomes where the user genuinely tried to connect."""
        return self in WILLING_OUTCOMES

    @property
    def failed(self) -> bool:
        return self is not Outcome.SUCCESS


WILLING_OUTCOMES = frozenset({Outcome.SUCCESS, Outcome.TIMEOUT, Outcome.DHCP_FAILURE})


class Band(str, Enum):
    GHZ_2_4 = "Band2_4GHz"
    GHZ_5 = "Band5GHz"


class Format(str, Enum):
    JSONL = "jsonl"
    CSV = "csv"


@dataclass(frozen=True, slots=True)
class PhaseTiming:
    scan_ms: int
    assoc_ms: int
    auth_ms: int
    dhcp_ms: int

    def __post_init__(self) -> None:
        for name in PHASE_NAMES:
            value = getattr(self, name)
            if not _is_int(value) or value < 0:
                raise SchemaError(f"{name} must be a non-negative integer, got {value!r}")

    @property
    def total(self) -> int:
        return self.scan_ms + self.assoc_ms + self.auth_ms + self.dhcp_ms

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.scan_ms, self.assoc_ms, self.auth_ms, self.dhcp_ms)


PHASE_NAMES = ("scan_ms", "assoc_ms", "auth_ms", "dhcp_ms")


@dataclass(frozen=True, slots=True)
class ConnectionAttempt:
    """One connection set-up attempt as recorded in the log."""

    attempt_id: str
    user_id: str
    hour_of_day: int
    rssi_dbm: int
    num_devices: int
    device_model: str
    ap_model: str
    encrypted: bool
    outcome: Outcome
    is_public: bool | None = None
    band: Band | None = None
    connection_time_ms: int | None = None
    phases: PhaseTiming | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.attempt_id, str) or not self.attempt_id:
            raise SchemaError("attempt_id must be a non-empty string")
        if not isinstance(self.user_id, str):
            raise SchemaError("user_id must be a string")
        if not _is_int(self.hour_of_day) or not 0 <= self.hour_of_day <= 23:
            raise SchemaError(f"hour_of_day out of range: {self.hour_of_day!r}")
        if not _is_int(self.rssi_dbm) or self.rssi_dbm > RSSI_CEILING_DBM:
            raise SchemaError(f"rssi_dbm must be an integer <= {RSSI_CEILING_DBM}, got {self.rssi_dbm!r}")
        if not _is_int(self.num_devices) or self.num_devices < 0:
            raise SchemaError(f"num_devices must be a non-negative integer, got {self.num_devices!r}")
        if not isinstance(self.device_model, str) or not isinstance(self.ap_model, str):
            raise SchemaError("device_model and ap_model must be strings")
        if not isinstance(self.encrypted, bool):
            raise SchemaError("encrypted must be a boolean")
        if self.is_public is not None and not isinstance(self.is_public, bool):
            raise SchemaError("is_public must be a boolean or absent")
        if not isinstance(self.outcome, Outcome):
            raise SchemaError(f"outcome must be an Outcome, got {self.outcome!r}")
        if self.band is not None and not isinstance(self.band, Band):
            raise SchemaError(f"band must be a Band or absent, got {self.band!r}")
        t = self.connection_time_ms
        if self.outcome is Outcome.SUCCESS:
            if t is None:
                raise SchemaError("Success requires connection_time_ms")
            if not _is_int(t) or not 0 <= t <= TIMEOUT_MS:
                raise SchemaError(f"connection_time_ms must be in [0, {TIMEOUT_MS}], got {t!r}")
        elif t is not None:
            raise SchemaError(f"{self.outcome.value} must not carry connection_time_ms")
        if self.phases is not None:
            if not isinstance(self.phases, PhaseTiming):
                raise SchemaError("phases must be a PhaseTiming")
            if t is not None and self.phases.total != t:
                raise SchemaError(f"phase durations sum to {self.phases.total}, expected {t}")

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


# --------------------------------------------------------------------------
# serialization

CSV_COLUMNS = (
    "attempt_id",
    "user_id",
    "hour_of_day",
    "rssi_dbm",
    "num_devices",
    "device_model",
    "ap_model",
    "encrypted",
    "is_public",
    "band",
    "outcome",
    "connection_time_ms",
) + PHASE_NAMES

_JSON_KEYS = CSV_COLUMNS[:-4] + ("phases",)


def to_record(a: ConnectionAttempt) -> dict[str, Any]:
    """Plain JSON-ready dict with keys in canonical order."""
    return {
        "attempt_id": a.attempt_id,
        "user_id": a.user_id,
        "hour_of_day": a.hour_of_day,
        "rssi_dbm": a.rssi_dbm,
        "num_devices": a.num_devices,
        "device_model": a.device_model,
        "ap_model": a.ap_model,
        "encrypted": a.encrypted,
        "is_public": a.is_public,
        "band": a.band.value if a.band is not None else None,
        "outcome": a.outcome.value,
        "connection_time_ms": a.connection_time_ms,
        "phases": None
        if a.phases is None
        else {name: getattr(a.phases, name) for name in PHASE_NAMES},
    }


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def iter_emit(attempts: Iterable[ConnectionAttempt], fmt: Format | str) -> Iterator[str]:
    """Yield serialized lines (each terminated by a newline)."""
    fmt = Format(fmt)
    if fmt is Format.JSONL:
        for a in attempts:
            yield json.dumps(to_record(a), separators=(",", ":"), ensure_ascii=False) + "\n"
        return
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    yield buf.getvalue()
    for a in attempts:
        buf.seek(0)
        buf.truncate()
        rec = to_record(a)
        phases = rec.pop("phases") or {}
        writer.writerow([_csv_cell(rec[c]) for c in CSV_COLUMNS[:-4]] + [_csv_cell(phases.get(p)) for p in PHASE_NAMES])
        yield buf.getvalue()


def emit(attempts: Iterable[ConnectionAttempt], fmt: Format | str) -> str:
    """Serialize attempts; an empty input gives an empty JSONL stream or a header-only CSV."""
    return "".join(iter_emit(attempts, fmt))


def write_attempts(path: str | Path, attempts: Iterable[ConnectionAttempt], fmt: Format | str | None = None) -> None:
    path = Path(path)
    fmt = Format(fmt) if fmt is not None else guess_format(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.writelines(iter_emit(attempts, fmt))


def guess_format(path: str | Path) -> Format:
    return Format.CSV if str(path).lower().endswith(".csv") else Format.JSONL


# --------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """One ingestion event. ``action`` is ``"rejected"`` or ``"repaired"``."""

    row: int
    action: str
    reason: str


@dataclass
class IngestResult:
    attempts: list[ConnectionAttempt] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def rejected(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.action == "rejected"]

    @property
    def clamped(self) -> int:
        return sum(1 for d in self.diagnostics if d.reason.startswith("rssi clamped"))


class _RowError(Exception):
    pass


def _parse_int(value: Any, name: str, *, optional: bool = False) -> int | None:
    if value is None or value == "":
        if optional:
            return None
        raise _RowError(f"missing {name}")
    if isinstance(value, bool):
        raise _RowError(f"{name} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise _RowError(f"{name} must be an integer, got {value!r}")


def _parse_bool(value: Any, name: str, *, optional: bool = False) -> bool | None:
    if value is None or value == "":
        if optional:
            return None
        raise _RowError(f"missing {name}")
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise _RowError(f"{name} must be a boolean, got {value!r}")


def _parse_str(value: Any, name: str) -> str:
    if value is None or not isinstance(value, str):
        raise _RowError(f"missing {name}")
    return value


def _build(rec: dict[str, Any], phases: dict[str, Any] | None, notes: list[str]) -> ConnectionAttempt:
    raw_outcome = rec.get("outcome")
    try:
        outcome = Outcome(raw_outcome)
    except ValueError:
        notes.append(f"unknown outcome {raw_outcome!r} mapped to Unknown")
        outcome = Outcome.UNKNOWN
    band_raw = rec.get("band")
    if band_raw is None or band_raw == "":
        band = None
    else:
        try:
            band = Band(band_raw)
        except ValueError:
            raise _RowError(f"unknown band {band_raw!r}") from None
    rssi = _parse_int(rec.get("rssi_dbm"), "rssi_dbm")
    if rssi > RSSI_CEILING_DBM:
        notes.append(f"rssi clamped from {rssi} to {RSSI_CEILING_DBM}")
        rssi = RSSI_CEILING_DBM
    timing = None
    if phases is not None:
        values = [_parse_int(phases.get(p), p, optional=True) for p in PHASE_NAMES]
        if all(v is None for v in values):
            timing = None
        elif any(v is None for v in values):
            raise _RowError("phase timings partially present")
        else:
            timing = PhaseTiming(*values)
    try:
        return ConnectionAttempt(
            attempt_id=_parse_str(rec.get("attempt_id"), "attempt_id"),
            user_id=_parse_str(rec.get("user_id"), "user_id"),
            hour_of_day=_parse_int(rec.get("hour_of_day"), "hour_of_day"),
            rssi_dbm=rssi,
            num_devices=_parse_int(rec.get("num_devices"), "num_devices"),
            device_model=_parse_str(rec.get("device_model"), "device_model"),
            ap_model=_parse_str(rec.get("ap_model"), "ap_model"),
            encrypted=_parse_bool(rec.get("encrypted"), "encrypted"),
            is_public=_parse_bool(rec.get("is_public"), "is_public", optional=True),
            band=band,
            outcome=outcome,
            connection_time_ms=_parse_int(rec.get("connection_time_ms"), "connection_time_ms", optional=True),
            phases=timing,
        )
    except SchemaError as exc:
        raise _RowError(str(exc)) from None


def _jsonl_rows(stream: Iterable[str]) -> Iterator[tuple[int, dict[str, Any] | None, str | None]]:
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            yield lineno, None, f"invalid JSON: {exc.msg}"
            continue
        if not isinstance(rec, dict):
            yield lineno, None, "record is not a JSON object"
            continue
        yield lineno, rec, None


def _csv_rows(stream: Iterable[str]) -> Iterator[tuple[int, dict[str, Any] | None, str | None]]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        return
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"CSV header lacks columns: {', '.join(missing)}")
    for row in reader:
        lineno = reader.line_num
        if not row:
            continue
        if len(row) != len(header):
            yield lineno, None, f"expected {len(header)} cells, got {len(row)}"
            continue
        rec = dict(zip(header, row))
        rec["phases"] = {p: rec.pop(p) for p in PHASE_NAMES}
        yield lineno, rec, None


def ingest(stream: Iterable[str] | TextIO, fmt: Format | str) -> IngestResult:
    """Parse a line-oriented stream into validated attempts plus diagnostics.

    Raises :class:`IngestError` when the stream cannot be decoded at all.
    Individual bad rows never abort ingestion.
    """
    fmt = Format(fmt)
    rows = _jsonl_rows(stream) if fmt is Format.JSONL else _csv_rows(stream)
    result = IngestResult()
    try:
        for lineno, rec, error in rows:
            if error is not None:
                result.diagnostics.append(Diagnostic(lineno, "rejected", error))
                continue
            phases = rec.get("phases")
            if phases is not None and not isinstance(phases, dict):
                result.diagnostics.append(Diagnostic(lineno, "rejected", "phases must be an object"))
                continue
            notes: list[str] = []
            try:
                attempt = _build(rec, phases, notes)
            except _RowError as exc:
                result.diagnostics.append(Diagnostic(lineno, "rejected", str(exc)))
                continue
            result.attempts.append(attempt)
            result.diagnostics.extend(Diagnostic(lineno, "repaired", n) for n in notes)
    except (UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"unreadable {fmt.value} stream: {exc}") from exc
    return result


def read_attempts(path: str | Path, fmt: Format | str | None = None) -> IngestResult:
    path = Path(path)
    fmt = Format(fmt) if fmt is not None else guess_format(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            return ingest(fh, fmt)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
