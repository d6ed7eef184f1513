"""Read and write traces, ground truth sidecars and attacker logs.

A trace is line delimited JSON.  Every line has a ``kind`` of ``phy``,
``pdcp`` or ``nas`` and the fields of the matching record type.  Ground truth
is written next to the trace: ``<stem>.truth.jsonl`` holds one line per trace
line and ``<stem>.truth.json`` the summary.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

from packaging.specifiers import SpecifierSet
from packaging.version import InvalidVersion, Version
from typing_extensions import Literal, TypedDict

from .identity import (
    AttackerCall,
    AttackerCallLog,
    IdentityKind,
    NasKind,
    NasRecord,
)
from .pdcp import Direction, PdcpRecord
from .phy import ObservationKind, PucchObservation, Tti
from .tools import PathType, dumps_canonical, dumps_line, write_lines
from .tracegen import GeneratedTrace, TraceRecord

logger = logging.getLogger(__name__)

LOG_FORMAT_VERSION = "1.0"
LOG_FORMAT_VERSIONS = SpecifierSet(">=1.0,<2")


class TraceFormatError(ValueError):
    """Raised for trace lines that do not follow the trace schema."""


class PhyLine(TypedDict):
    """JSON shape of a PUCCH observation line."""

    kind: Literal["phy"]
    kind2: str
    sfn: int
    subframe: int
    pucch_index: int
    ta_us: float
    snr_db: float


class PdcpLine(TypedDict):
    """JSON shape of a PDCP record line."""

    kind: Literal["pdcp"]
    direction: str
    time_ms: float
    seq: int
    lcid: int
    drb: int
    pdu_len: int


class NasLine(TypedDict):
    """JSON shape of a NAS message line."""

    kind: Literal["nas"]
    time_ms: float
    kind2: str
    identity_kind: str
    identity_value: str
    m_tmsi: Optional[str]
    integrity_valid: bool


TraceLine = Union[PhyLine, PdcpLine, NasLine]


@dataclass
class TraceStreams:
    """Records of a trace split by layer, each in trace order."""

    phy: list[PucchObservation] = field(default_factory=list)
    pdcp: list[PdcpRecord] = field(default_factory=list)
    nas: list[NasRecord] = field(default_factory=list)


def record_to_json(record: TraceRecord) -> TraceLine:
    """Return the JSON shape of `record`."""
    if isinstance(record, PucchObservation):
        return PhyLine(
            kind="phy",
            kind2=record.kind.value,
            sfn=record.tti.sfn,
            subframe=record.tti.subframe,
            pucch_index=record.pucch_index,
            ta_us=record.ta_us,
            snr_db=record.snr_db,
        )
    if isinstance(record, PdcpRecord):
        return PdcpLine(
            kind="pdcp",
            direction=record.direction.value,
            time_ms=record.time_ms,
            seq=record.seq,
            lcid=record.lcid,
            drb=record.drb,
            pdu_len=record.pdu_len,
        )
    return NasLine(
        kind="nas",
        time_ms=record.time_ms,
        kind2=record.kind.value,
        identity_kind=record.identity_kind.value,
        identity_value=record.identity_value,
        m_tmsi=None if record.m_tmsi is None else f"{record.m_tmsi:08x}",
        integrity_valid=record.integrity_valid,
    )


def _field(
    raw: Mapping[str, Any], name: str, kind: type | tuple[type, ...]
) -> Any:
    try:
        value = raw[name]
    except KeyError:
        raise TraceFormatError(f"missing field {name!r}") from None
    # bool is an int subclass but never a valid number here
    if isinstance(value, bool) and kind is not bool:
        raise TraceFormatError(f"field {name!r} must not be a boolean")
    if not isinstance(value, kind):
        raise TraceFormatError(
            f"field {name!r} has type {type(value).__name__}"
        )
    return value


_NUMBER = (int, float)


def record_from_json(raw: Any) -> TraceRecord:
    """Build a trace record from one parsed line.

    Raises
    ------
    TraceFormatError
        For unknown kinds, missing fields, wrong types or invalid values.
    """
    if not isinstance(raw, Mapping):
        raise TraceFormatError("line is not a JSON object")
    kind = raw.get("kind")
    try:
        if kind == "phy":
            return PucchObservation(
                kind=ObservationKind(_field(raw, "kind2", str)),
                tti=Tti(_field(raw, "sfn", int), _field(raw, "subframe", int)),
                pucch_index=_field(raw, "pucch_index", int),
                ta_us=float(_field(raw, "ta_us", _NUMBER)),
                snr_db=float(_field(raw, "snr_db", _NUMBER)),
            )
        if kind == "pdcp":
            return PdcpRecord(
                direction=Direction(_field(raw, "direction", str)),
                time_ms=float(_field(raw, "time_ms", _NUMBER)),
                seq=_field(raw, "seq", int),
                lcid=_field(raw, "lcid", int),
                drb=_field(raw, "drb", int),
                pdu_len=_field(raw, "pdu_len", int),
            )
        if kind == "nas":
            m_tmsi = raw.get("m_tmsi")
            if m_tmsi is not None and not isinstance(m_tmsi, str):
                raise TraceFormatError("m_tmsi must be a hex string or null")
            return NasRecord(
                time_ms=float(_field(raw, "time_ms", _NUMBER)),
                kind=NasKind(_field(raw, "kind2", str)),
                identity_kind=IdentityKind(
                    raw.get("identity_kind", IdentityKind.NONE.value)
                ),
                identity_value=str(raw.get("identity_value", "")),
                m_tmsi=None if m_tmsi is None else int(m_tmsi, 16),
                integrity_valid=_field(raw, "integrity_valid", bool),
            )
    except TraceFormatError:
        raise
    except ValueError as err:
        raise TraceFormatError(str(err)) from err
    raise TraceFormatError(f"unknown record kind {kind!r}")


def parse_trace(
    lines: Iterable[str], source: str = "<trace>"
) -> list[TraceRecord]:
    """Parse trace lines; blank lines are skipped.

    Errors carry the source name and the 1-based line number.
    """
    records: list[TraceRecord] = []
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(record_from_json(json.loads(line)))
        except json.JSONDecodeError as err:
            raise TraceFormatError(
                f"{source}:{line_no}: invalid JSON ({err.msg})"
            ) from err
        except TraceFormatError as err:
            raise TraceFormatError(f"{source}:{line_no}: {err}") from err
    return records


def read_trace(path: PathType) -> list[TraceRecord]:
    """Read a trace file.

    Raises
    ------
    FileNotFoundError
        If `path` does not exist.
    TraceFormatError
        On the first line violating the schema.
    """
    with open(path, encoding="utf-8") as fobj:
        records = parse_trace(fobj, str(path))
    logger.info("Read %d records from %s", len(records), path)
    return records


def write_trace(path: PathType, records: Iterable[TraceRecord]) -> None:
    """Write `records` to `path`, one JSON line each."""
    write_lines(path, (dumps_line(record_to_json(r)) for r in records))


def split_streams(records: Iterable[TraceRecord]) -> TraceStreams:
    """Split a trace into its PHY, PDCP and NAS records."""
    streams = TraceStreams()
    for record in records:
        if isinstance(record, PucchObservation):
            streams.phy.append(record)
        elif isinstance(record, PdcpRecord):
            streams.pdcp.append(record)
        else:
            streams.nas.append(record)
    return streams


def truth_paths(trace_path: PathType) -> tuple[Path, Path]:
    """Return the per line and summary truth paths of a trace.

    Examples
    --------
    >>> [p.name for p in truth_paths("out/call.jsonl")]
    ['call.truth.jsonl', 'call.truth.json']
    """
    path = Path(trace_path)
    stem = path.name[: -len(path.suffix)] if path.suffix else path.name
    return (
        path.with_name(f"{stem}.truth.jsonl"),
        path.with_name(f"{stem}.truth.json"),
    )


def write_generated(path: PathType, trace: GeneratedTrace) -> None:
    """Write a generated trace with its truth sidecar and summary."""
    write_trace(path, trace.records)
    lines_path, summary_path = truth_paths(path)
    write_lines(lines_path, (dumps_line(t.as_dict()) for t in trace.truth))
    write_lines(summary_path, [dumps_canonical(trace.summary.as_dict())])
    logger.info("Wrote %d records to %s", len(trace.records), path)


def read_truth(trace_path: PathType) -> tuple[list[dict[str, Any]], Any]:
    """Read the truth sidecar and summary of a trace."""
    lines_path, summary_path = truth_paths(trace_path)
    with open(lines_path, encoding="utf-8") as fobj:
        lines = [json.loads(line) for line in fobj if line.strip()]
    with open(summary_path, encoding="utf-8") as fobj:
        summary = json.load(fobj)
    return lines, summary


def _check_log_version(raw: Mapping[str, Any], source: str) -> None:
    try:
        version = Version(str(raw.get("format_version", LOG_FORMAT_VERSION)))
    except InvalidVersion as err:
        raise TraceFormatError(f"{source}: {err}") from err
    if version not in LOG_FORMAT_VERSIONS:
        raise TraceFormatError(f"{source}: unsupported format {version}")


def write_attacker_log(path: PathType, log: AttackerCallLog) -> None:
    """Write the attacker's call log as JSON."""
    document = {
        "format_version": LOG_FORMAT_VERSION,
        "calls": [
            {
                "phone_number": call.phone_number,
                "dial_time_ms": call.dial_time_ms,
                "outcome": call.outcome,
            }
            for call in log.entries
        ],
    }
    write_lines(path, [dumps_canonical(document)])


def read_attacker_log(path: PathType) -> AttackerCallLog:
    """Read an attacker call log.

    Raises
    ------
    TraceFormatError
        For malformed documents or dial times that do not increase.
    """
    raw = _load_json(path)
    if not isinstance(raw, Mapping):
        raise TraceFormatError(f"{path}: attacker log must be an object")
    _check_log_version(raw, str(path))
    try:
        calls = tuple(
            AttackerCall(
                str(_field(entry, "phone_number", str)),
                float(_field(entry, "dial_time_ms", _NUMBER)),
                str(entry.get("outcome", "")),
            )
            for entry in _field(raw, "calls", list)
        )
        return AttackerCallLog(calls)
    except (ValueError, TypeError, AttributeError) as err:
        raise TraceFormatError(f"{path}: {err}") from err


def read_reallocations(path: PathType) -> list[tuple[str, float]]:
    """Read identity reallocation events.

    The document is a list of ``{"identity": ..., "time_ms": ...}``.
    """
    raw = _load_json(path)
    if not isinstance(raw, Sequence) or isinstance(raw, str):
        raise TraceFormatError(f"{path}: reallocations must be a list")
    try:
        return [
            (
                str(_field(event, "identity", str)),
                float(_field(event, "time_ms", _NUMBER)),
            )
            for event in raw
        ]
    except (TraceFormatError, TypeError, AttributeError) as err:
        raise TraceFormatError(f"{path}: {err}") from err


def _load_json(path: PathType) -> Any:
    with open(path, encoding="utf-8") as fobj:
        try:
            return json.load(fobj)
        except json.JSONDecodeError as err:
            raise TraceFormatError(f"{path}: {err}") from err
