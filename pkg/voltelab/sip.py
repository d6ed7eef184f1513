"""Classify encrypted SIP messages by size and recover call records.

Encrypted SIP messages keep their length.  A per carrier and per device
fingerprint database lists the size ranges of each operation in each
direction; a size may match several operations, and the call flow context
settles most of those ambiguities.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Any, Union

from packaging.specifiers import SpecifierSet
from packaging.version import InvalidVersion, Version

from .pdcp import Direction
from .scenarios import (
    ACK_OK,
    BYE,
    CANCEL,
    DECLINE_OPERATIONS,
    INVITE,
    KEEPALIVE_OPERATIONS,
    OK_INVITE,
    SCRIPTS,
    Scenario,
    Step,
)

logger = logging.getLogger(__name__)

DATA_PATH = Path(__file__).parent / "data"
DB_FORMAT_VERSIONS = SpecifierSet(">=1.0,<2")

DbSource = Union[str, os.PathLike, Mapping[str, Any]]


class FingerprintError(ValueError):
    """Raised for malformed fingerprint databases."""


@dataclass(frozen=True)
class SizeRange:
    """Sizes within `tolerance` bytes of `center`."""

    center: int
    tolerance: int

    def __post_init__(self) -> None:
        if self.tolerance < 0:
            raise FingerprintError(f"negative tolerance {self.tolerance}")
        if self.center - self.tolerance < 1:
            raise FingerprintError(f"non-positive sizes in {self}")

    def matches(self, size: int) -> bool:
        """Return True if `size` lies within the range."""
        return abs(size - self.center) <= self.tolerance

    @property
    def sizes(self) -> range:
        """All sizes in the range."""
        return range(
            self.center - self.tolerance, self.center + self.tolerance + 1
        )


@dataclass(frozen=True)
class FingerprintEntry:
    """Size ranges of one operation in one direction."""

    operation: str
    direction: Direction
    ranges: tuple[SizeRange, ...]

    def __post_init__(self) -> None:
        if not self.ranges:
            raise FingerprintError(f"no ranges for {self.operation}")

    def matches(self, size: int) -> bool:
        """Return True if any range matches `size`."""
        return any(size_range.matches(size) for size_range in self.ranges)


@dataclass(frozen=True)
class FingerprintDb:
    """Fingerprints of one device on one carrier."""

    carrier: str
    device: str
    entries: tuple[FingerprintEntry, ...]

    def __post_init__(self) -> None:
        seen: set[tuple[str, Direction]] = set()
        for entry in self.entries:
            key = (entry.operation, entry.direction)
            if key in seen:
                raise FingerprintError(
                    f"duplicate entry {entry.operation} {entry.direction.value}"
                )
            seen.add(key)
        for direction in Direction:
            if not any(entry.direction is direction for entry in self.entries):
                raise FingerprintError(f"no {direction.value} entries")

    def entry(
        self, operation: str, direction: Direction
    ) -> FingerprintEntry | None:
        """Return the entry for `operation` in `direction`, if listed."""
        for entry in self.entries:
            if entry.operation == operation and entry.direction is direction:
                return entry
        return None


def _parse_entry(raw: Mapping[str, Any]) -> FingerprintEntry:
    try:
        return FingerprintEntry(
            operation=str(raw["operation"]),
            direction=Direction(raw["direction"]),
            ranges=tuple(
                SizeRange(int(item["center"]), int(item["tolerance"]))
                for item in raw["ranges"]
            ),
        )
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, FingerprintError):
            raise
        raise FingerprintError(f"malformed entry {raw!r}: {err}") from err


def _log_overlaps(db: FingerprintDb) -> None:
    for first, second in combinations(db.entries, 2):
        if first.direction is not second.direction:
            continue
        shared = {
            size
            for size_range in first.ranges
            for size in size_range.sizes
            if second.matches(size)
        }
        if shared:
            logger.warning(
                "%s/%s %s: %s and %s share sizes %d-%d",
                db.carrier,
                db.device,
                first.direction.value,
                first.operation,
                second.operation,
                min(shared),
                max(shared),
            )


def load_db(source: DbSource) -> FingerprintDb:
    """Load and validate a fingerprint database.

    Parameters
    ----------
    source : str or PathLike or mapping
        Path of a JSON document, or the already parsed document.

    Returns
    -------
    FingerprintDb

    Raises
    ------
    FingerprintError
        On unsupported ``format_version``, malformed entries, negative
        tolerances or duplicate ``(operation, direction)`` pairs.
    """
    if isinstance(source, Mapping):
        raw = source
    else:
        with open(source, encoding="utf-8") as fobj:
            try:
                raw = json.load(fobj)
            except json.JSONDecodeError as err:
                raise FingerprintError(f"{source}: {err}") from err
    if not isinstance(raw, Mapping):
        raise FingerprintError("fingerprint database must be a JSON object")
    try:
        version = Version(str(raw.get("format_version", "1.0")))
    except InvalidVersion as err:
        raise FingerprintError(str(err)) from err
    if version not in DB_FORMAT_VERSIONS:
        raise FingerprintError(
            f"unsupported fingerprint format {version} "
            f"(supported: {DB_FORMAT_VERSIONS})"
        )
    try:
        carrier, device, entries = raw["carrier"], raw["device"], raw["entries"]
    except KeyError as err:
        raise FingerprintError(f"missing field {err}") from err
    db = FingerprintDb(
        carrier=str(carrier),
        device=str(device),
        entries=tuple(_parse_entry(entry) for entry in entries),
    )
    _log_overlaps(db)
    logger.debug(
        "Loaded %d fingerprints for %s/%s",
        len(db.entries),
        db.carrier,
        db.device,
    )
    return db


def classify_size(
    size: int, direction: Direction, db: FingerprintDb
) -> tuple[str, ...]:
    """Return the operations whose fingerprint matches `size`.

    The result keeps database order; an empty tuple means unknown.
    """
    return tuple(
        entry.operation
        for entry in db.entries
        if entry.direction is direction and entry.matches(size)
    )


def top_candidate(candidates: Sequence[str]) -> str | None:
    """Return the context free label of a candidate set.

    Only an unambiguous match names an operation.

    Examples
    --------
    >>> top_candidate(["Invite"])
    'Invite'
    >>> top_candidate(["180 Ring (Invite)", "486 Busy Here"]) is None
    True
    """
    return candidates[0] if len(candidates) == 1 else None


class Resolution(str, Enum):
    """Outcome of revising one event."""

    RESOLVED = "resolved"
    UNKNOWN = "Unknown"
    UNRESOLVABLE = "Unresolvable"


@dataclass(frozen=True)
class SipEvent:
    """One encrypted SIP message seen by the relay.

    `packet` indexes the reassembled packet the event was built from.
    """

    time_ms: float
    direction: Direction
    payload_size: int
    candidates: tuple[str, ...]
    resolved: str | None = None
    status: Resolution | None = None
    packet: int | None = None

    def __post_init__(self) -> None:
        if self.resolved is not None and self.resolved not in self.candidates:
            raise ValueError(
                f"{self.resolved} is not a candidate of {self.candidates}"
            )

    @property
    def label(self) -> str:
        """Resolved operation, resolution status or candidate list."""
        if self.resolved is not None:
            return self.resolved
        if self.status is not None:
            return self.status.value
        return "{" + " | ".join(self.candidates) + "}"


State = Union[tuple[Scenario, int], None]
IDLE: State = None


@dataclass(frozen=True)
class ContextRules:
    """Call flow context used to revise a signalling log.

    The scenario scripts are merged into one nondeterministic automaton whose
    states are ``(scenario, position of the last matched step)`` plus an idle
    state.  The restart operation opens a new call from any state and
    keepalive operations never change state.
    """

    scripts: Mapping[Scenario, tuple[Step, ...]] = SCRIPTS
    restart: str = INVITE
    keepalive: frozenset[str] = KEEPALIVE_OPERATIONS

    @property
    def states(self) -> list[State]:
        """All automaton states."""
        return [IDLE] + [
            (scenario, position)
            for scenario, script in self.scripts.items()
            for position in range(len(script))
        ]

    def _scan(
        self, scenario: Scenario, start: int, operation: str
    ) -> set[State]:
        targets: set[State] = set()
        script = self.scripts[scenario]
        for position in range(start, len(script)):
            step = script[position]
            if operation in step.operations:
                targets.add((scenario, position))
            if step.required:
                break
        return targets

    def step(self, state: State, operation: str) -> set[State]:
        """Return the states reachable from `state` on `operation`."""
        if operation in self.keepalive:
            return {state}
        targets: set[State] = set()
        if operation == self.restart:
            for scenario in self.scripts:
                targets |= self._scan(scenario, 0, operation)
        if state is not None:
            scenario, position = state
            targets |= self._scan(scenario, position + 1, operation)
        return targets


DEFAULT_RULES = ContextRules()


def revise_log(
    events: Sequence[SipEvent], rules: ContextRules = DEFAULT_RULES
) -> list[SipEvent]:
    """Resolve candidate sets against the call flow context.

    An operation is kept for an event if some run of the automaton over the
    whole log takes it at that event.  Events with a single surviving
    operation are resolved; events with no candidates are ``Unknown`` and do
    not move the automaton.  Events with several survivors, or none, are
    ``Unresolvable``; those with none are skipped by the automaton as well.

    Parameters
    ----------
    events : sequence of SipEvent
        Time ordered events with candidates populated.
    rules : ContextRules, optional
        Call flow context.

    Returns
    -------
    list of SipEvent
        Copies of `events` with ``resolved`` and ``status`` set.
    """
    live = [i for i, event in enumerate(events) if event.candidates]
    # forward pass: states reachable before each live event
    forward: list[set[State]] = []
    dead: set[int] = set()
    states: set[State] = {IDLE}
    for i in live:
        forward.append(states)
        following = {
            target
            for state in states
            for operation in events[i].candidates
            for target in rules.step(state, operation)
        }
        if following:
            states = following
        else:
            dead.add(i)
    # backward pass: states from which the rest of the log can be read
    all_states = set(rules.states)
    backward: list[set[State]] = [all_states]
    for i in reversed(live):
        after = backward[-1]
        if i in dead:
            backward.append(after)
            continue
        backward.append(
            {
                state
                for state in all_states
                if any(
                    rules.step(state, operation) & after
                    for operation in events[i].candidates
                )
            }
        )
    backward.reverse()
    viable: dict[int, list[str]] = {}
    for k, i in enumerate(live):
        if i in dead:
            viable[i] = []
            continue
        after = backward[k + 1]
        viable[i] = [
            operation
            for operation in events[i].candidates
            if any(rules.step(state, operation) & after for state in forward[k])
        ]
    revised = []
    for i, event in enumerate(events):
        if not event.candidates:
            revised.append(
                replace(event, resolved=None, status=Resolution.UNKNOWN)
            )
            continue
        survivors = viable[i]
        if len(survivors) == 1:
            revised.append(
                replace(
                    event, resolved=survivors[0], status=Resolution.RESOLVED
                )
            )
            logger.debug(
                "%.1f ms %s %d -> %s",
                event.time_ms,
                event.direction.short,
                event.payload_size,
                survivors[0],
            )
            continue
        logger.warning(
            "%.1f ms %s %d bytes unresolvable, context allows %s",
            event.time_ms,
            event.direction.short,
            event.payload_size,
            survivors or "nothing",
        )
        revised.append(
            replace(event, resolved=None, status=Resolution.UNRESOLVABLE)
        )
    return revised


class CallDirection(str, Enum):
    """Call direction from the victim's point of view."""

    INCOMING = "Incoming"
    OUTGOING = "Outgoing"


class EstablishStatus(str, Enum):
    """How the call setup ended."""

    ACCEPTED = "Accepted"
    DECLINED = "Declined"
    MISSED = "Missed"


class TerminationCause(str, Enum):
    """Who ended the call, and how."""

    CALLER_CANCEL_RINGING = "CallerCancelRinging"
    CALLER_BYE = "CallerBye"
    CALLEE_BUSY = "CalleeBusy"
    CALLEE_BYE = "CalleeBye"


# Termination cause of each scenario; the mapping is one to one
SCENARIO_TERMINATION: Mapping[Scenario, TerminationCause] = {
    Scenario.CALLER_CANCEL: TerminationCause.CALLER_CANCEL_RINGING,
    Scenario.CALLER_BYE: TerminationCause.CALLER_BYE,
    Scenario.CALLEE_DECLINE: TerminationCause.CALLEE_BUSY,
    Scenario.CALLEE_BYE: TerminationCause.CALLEE_BYE,
}


@dataclass(frozen=True)
class CallRecord:
    """Features of one recovered call.

    ``incomplete`` calls lack the message that would end them;
    ``drb3_consistent`` is None when no DRB3 lifetime was checked.
    """

    identity: str
    timestamp_ms: float
    call_direction: CallDirection
    establish_status: EstablishStatus | None
    termination_cause: TerminationCause | None
    duration_s: float = 0.0
    incomplete: bool = False
    voicemail: bool = False
    drb3_consistent: bool | None = None

    def __post_init__(self) -> None:
        if (
            self.duration_s
            and self.establish_status is not EstablishStatus.ACCEPTED
        ):
            raise ValueError("only accepted calls have a duration")
        if self.duration_s < 0:
            raise ValueError("negative duration")


def _split_calls(events: Iterable[SipEvent]) -> list[list[SipEvent]]:
    calls: list[list[SipEvent]] = []
    skipped = 0
    for event in events:
        if event.resolved is None:
            continue
        if event.resolved == INVITE:
            calls.append([event])
        elif calls:
            calls[-1].append(event)
        else:
            skipped += 1
    if skipped:
        logger.debug("%d resolved events precede the first Invite", skipped)
    return calls


def _first(
    events: Sequence[SipEvent], operations: Iterable[str], start: int = 0
) -> int | None:
    wanted = set(operations)
    for i in range(start, len(events)):
        if events[i].resolved in wanted:
            return i
    return None


def _call_record(
    call: Sequence[SipEvent],
    identity: str,
    drb3_lifetime: tuple[float, float] | None,
    drb3_tolerance_ms: float,
) -> CallRecord:
    invite = call[0]
    outgoing = invite.direction is Direction.UPLINK
    call_direction = (
        CallDirection.OUTGOING if outgoing else CallDirection.INCOMING
    )
    end = _first(call, {OK_INVITE, CANCEL} | DECLINE_OPERATIONS, 1)
    if end is None:
        return CallRecord(
            identity,
            invite.time_ms,
            call_direction,
            None,
            None,
            incomplete=True,
        )
    if call[end].resolved == CANCEL:
        return CallRecord(
            identity,
            invite.time_ms,
            call_direction,
            EstablishStatus.MISSED,
            TerminationCause.CALLER_CANCEL_RINGING,
        )
    if call[end].resolved in DECLINE_OPERATIONS:
        return CallRecord(
            identity,
            invite.time_ms,
            call_direction,
            EstablishStatus.DECLINED,
            TerminationCause.CALLEE_BUSY,
            voicemail=_first(call, {OK_INVITE}, end + 1) is not None,
        )
    ack = _first(call, {ACK_OK}, end + 1)
    start = call[end if ack is None else ack]
    bye = _first(call, {BYE}, end + 1)
    if bye is None:
        return CallRecord(
            identity,
            invite.time_ms,
            call_direction,
            EstablishStatus.ACCEPTED,
            None,
            incomplete=True,
        )
    # the caller's Bye travels the same way as the Invite
    caller_bye = call[bye].direction is invite.direction
    duration_ms = call[bye].time_ms - start.time_ms
    consistent = None
    if drb3_lifetime is not None:
        first, last = drb3_lifetime
        if first < call[bye].time_ms and last > start.time_ms:
            consistent = abs((last - first) - duration_ms) <= drb3_tolerance_ms
            if not consistent:
                logger.warning(
                    "DRB3 active for %.1f s but call lasted %.1f s",
                    (last - first) / 1000,
                    duration_ms / 1000,
                )
    return CallRecord(
        identity,
        invite.time_ms,
        call_direction,
        EstablishStatus.ACCEPTED,
        (
            TerminationCause.CALLER_BYE
            if caller_bye
            else TerminationCause.CALLEE_BYE
        ),
        duration_s=duration_ms / 1000,
        drb3_consistent=consistent,
    )


def extract_call_records(
    events: Iterable[SipEvent],
    drb3_lifetime: tuple[float, float] | None = None,
    identity: str = "unknown",
    *,
    drb3_tolerance_ms: float = 1000.0,
) -> list[CallRecord]:
    """Return one call record per resolved Invite.

    Parameters
    ----------
    events : iterable of SipEvent
        Revised events in time order; unresolved events are ignored.
    drb3_lifetime : None or (float, float), optional
        First and last DRB3 record times, used to cross check durations of
        answered calls overlapping it.
    identity : str, optional
        Subscriber identity attached to every record.
    drb3_tolerance_ms : float, optional
        Largest accepted gap between DRB3 lifetime and call duration.

    Returns
    -------
    list of CallRecord
    """
    records = [
        _call_record(call, identity, drb3_lifetime, drb3_tolerance_ms)
        for call in _split_calls(events)
    ]
    logger.info(
        "Extracted %d calls (%d incomplete)",
        len(records),
        sum(record.incomplete for record in records),
    )
    return records


def render_signalling_log(events: Iterable[SipEvent]) -> str:
    """Return a text table of `events`, one line per event."""
    lines = [
        f"{event.time_ms:12.1f} {event.direction.short} "
        f"{event.payload_size:6d}  {event.label}"
        for event in events
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def bundled_db_path(carrier: str, device: str) -> Path:
    """Return the path of the packaged database for `carrier` and `device`."""
    return DATA_PATH / "fingerprints" / f"{carrier}-{device}.json"
