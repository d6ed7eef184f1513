"""Build, write and render analysis reports.

A report is one JSON document with the sections ``phy_params``,
``signalling_log``, ``call_records``, ``activity`` and ``bindings``.  Sections
a command did not compute are null.  The document embeds the tool version and
the configuration that produced it, and holds nothing that varies between
identical runs.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, Optional

from typing_extensions import TypedDict

from . import __version__
from .activity import ActivityTimeline, FrameClass
from .identity import IdentityBinding
from .pdcp import Direction
from .phy import CqiConfig, GuessAction, SrConfig
from .sip import CallRecord, SipEvent
from .tools import PathType, dumps_canonical, write_lines

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = "1.0"
SECTIONS = (
    "phy_params",
    "signalling_log",
    "call_records",
    "activity",
    "bindings",
)


class EventLine(TypedDict):
    """JSON shape of one signalling log entry."""

    time_ms: float
    direction: str
    payload_size: int
    candidates: list[str]
    resolved: Optional[str]
    status: Optional[str]


def phy_section(
    sr: SrConfig | None,
    cqi: CqiConfig | None,
    actions: Iterable[GuessAction] = (),
    errors: Mapping[str, str] | None = None,
) -> dict[str, Any]:
    """Return the recovered radio configurations and the relay's actions."""
    return {
        "sr": None if sr is None else dict(vars(sr)),
        "cqi": None if cqi is None else dict(vars(cqi)),
        "actions": [
            {
                "sfn": action.tti.sfn,
                "subframe": action.tti.subframe,
                "kind": action.kind.value,
                "action": action.action,
                "note": action.note,
            }
            for action in actions
        ],
        "errors": dict(errors or {}),
    }


def signalling_section(events: Iterable[SipEvent]) -> list[EventLine]:
    """Return the revised signalling log."""
    return [
        EventLine(
            time_ms=event.time_ms,
            direction=event.direction.value,
            payload_size=event.payload_size,
            candidates=list(event.candidates),
            resolved=event.resolved,
            status=None if event.status is None else event.status.value,
        )
        for event in events
    ]


def _enum_value(value: Any) -> Any:
    return None if value is None else value.value


def call_records_section(calls: Iterable[CallRecord]) -> list[dict[str, Any]]:
    """Return one entry per recovered call."""
    return [
        {
            "identity": call.identity,
            "timestamp_ms": call.timestamp_ms,
            "call_direction": call.call_direction.value,
            "establish_status": _enum_value(call.establish_status),
            "termination_cause": _enum_value(call.termination_cause),
            "duration_s": call.duration_s,
            "incomplete": call.incomplete,
            "voicemail": call.voicemail,
            "drb3_consistent": call.drb3_consistent,
        }
        for call in calls
    ]


def activity_section(
    timeline: ActivityTimeline,
    counts: Mapping[Direction, Mapping[FrameClass, int]],
    removed_rtcp: int = 0,
) -> dict[str, Any]:
    """Return the activity timelines with per direction packet counts."""
    return {
        "window_ms": timeline.window_ms,
        "removed_rtcp": removed_rtcp,
        "timelines": {
            direction.value: [
                [interval.start_ms, interval.end_ms, interval.state.value]
                for interval in intervals
            ]
            for direction, intervals in sorted(timeline.intervals.items())
        },
        "packet_counts": {
            direction.value: {
                frame.value: int(n) for frame, n in sorted(frames.items())
            }
            for direction, frames in sorted(counts.items())
        },
    }


def bindings_section(
    bindings: Iterable[IdentityBinding],
) -> list[dict[str, Any]]:
    """Return the identity bindings."""
    return [
        {
            "identity": binding.identity_value,
            "phone_number": binding.phone_number,
            "established_at_ms": binding.established_at_ms,
            "method": binding.method.value,
            "confidence": binding.confidence.value,
            "stale": binding.stale,
        }
        for binding in bindings
    ]


def build_report(
    config: Mapping[str, Any],
    sections: Mapping[str, Any],
    provenance: Mapping[str, Any],
) -> dict[str, Any]:
    """Assemble a report document.

    Raises
    ------
    ValueError
        For section names outside the report schema.
    """
    unknown = set(sections) - set(SECTIONS)
    if unknown:
        raise ValueError(f"unknown report sections {sorted(unknown)}")
    report: dict[str, Any] = {
        "format_version": REPORT_FORMAT_VERSION,
        "tool": {"name": "voltelab", "version": __version__},
        "config": dict(config),
        "provenance": dict(provenance),
    }
    for name in SECTIONS:
        report[name] = sections.get(name)
    return report


def _render_phy(phy: Mapping[str, Any]) -> list[str]:
    lines = []
    for name in ("sr", "cqi"):
        config = phy.get(name)
        if config is None:
            continue
        fields = ", ".join(
            f"{key}={value}"
            for key, value in sorted(config.items())
            if value is not None
        )
        lines.append(f"  {name.upper()}: {fields}")
    for stage, error in sorted(phy.get("errors", {}).items()):
        lines.append(f"  {stage.upper()} failed: {error}")
    return lines


def _render_events(events: Sequence[Mapping[str, Any]]) -> list[str]:
    lines = []
    for event in events:
        label = event["resolved"] or event["status"] or "?"
        if event["status"] == "Unresolvable":
            label += " {" + " | ".join(event["candidates"]) + "}"
        short = "UL" if event["direction"] == Direction.UPLINK.value else "DL"
        lines.append(
            f"  {event['time_ms']:12.1f} {short} "
            f"{event['payload_size']:6d}  {label}"
        )
    return lines


def _render_calls(calls: Sequence[Mapping[str, Any]]) -> list[str]:
    lines = []
    for call in calls:
        status = call["establish_status"] or "?"
        cause = call["termination_cause"] or "?"
        line = (
            f"  {call['timestamp_ms']:12.1f} {call['identity']} "
            f"{call['call_direction']} {status} {cause}"
        )
        if call["duration_s"]:
            line += f" {call['duration_s']:.1f} s"
        if call["incomplete"]:
            line += " (incomplete)"
        if call["voicemail"]:
            line += " (voicemail)"
        lines.append(line)
    return lines


def _render_activity(activity: Mapping[str, Any]) -> list[str]:
    lines = []
    for direction, intervals in activity["timelines"].items():
        speaking = sum(
            end - start
            for start, end, state in intervals
            if state == "Speaking"
        )
        counts = activity["packet_counts"].get(direction, {})
        lines.append(
            f"  {direction}: {len(intervals)} intervals, "
            f"{speaking / 1000:.1f} s speaking, "
            f"{sum(counts.values())} packets"
        )
        lines.extend(
            f"    {start:12.1f} {end:12.1f} {state}"
            for start, end, state in intervals
        )
    return lines


def _render_bindings(bindings: Sequence[Mapping[str, Any]]) -> list[str]:
    return [
        f"  {b['phone_number']} <- {b['identity']} "
        f"({b['method']}, {b['confidence']}"
        f"{', stale' if b['stale'] else ''})"
        for b in bindings
    ]


_RENDERERS = {
    "phy_params": _render_phy,
    "signalling_log": _render_events,
    "call_records": _render_calls,
    "activity": _render_activity,
    "bindings": _render_bindings,
}


def render_text(report: Mapping[str, Any]) -> str:
    """Return a human readable rendering of `report`."""
    tool = report["tool"]
    lines = [f"{tool['name']} {tool['version']} report"]
    config = report.get("config", {})
    if config.get("profile"):
        lines.append(
            f"profile {config['profile']}, device {config.get('device')}"
        )
    for name in SECTIONS:
        section = report.get(name)
        if section is None:
            continue
        title = name.replace("_", " ")
        lines.append("")
        lines.append(f"{title}:")
        body = _RENDERERS[name](section)
        lines.extend(body or ["  (none)"])
    return "\n".join(lines) + "\n"


def write_report(
    path: PathType, report: Mapping[str, Any], text: bool = False
) -> list[Path]:
    """Write `report` as JSON, and its text rendering when `text` is set.

    The rendering goes next to the JSON with a ``.txt`` suffix.  Returns the
    paths written.
    """
    path = Path(path)
    write_lines(path, [dumps_canonical(report)])
    written = [path]
    if text:
        text_path = path.with_suffix(".txt")
        write_lines(text_path, [render_text(report)])
        written.append(text_path)
    logger.info("Wrote report to %s", ", ".join(map(str, written)))
    return written
