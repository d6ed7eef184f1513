"""Tests for size classification, log revision and call records."""

from __future__ import annotations

from typing import Any

import pytest

from ..pdcp import Direction
from ..scenarios import (
    ACK_OK,
    BYE,
    INVITE,
    OK_BYE,
    OK_INVITE,
    OPTIONS,
    REJECTED,
    RING,
)
from ..sip import (
    CallDirection,
    EstablishStatus,
    FingerprintDb,
    FingerprintError,
    Resolution,
    SipEvent,
    TerminationCause,
    bundled_db_path,
    classify_size,
    extract_call_records,
    load_db,
    render_signalling_log,
    revise_log,
)

UL = Direction.UPLINK
DL = Direction.DOWNLINK


def _events(
    db: FingerprintDb, rows: list[tuple[float, Direction, int]]
) -> list[SipEvent]:
    return [
        SipEvent(time_ms, direction, size, classify_size(size, direction, db))
        for time_ms, direction, size in rows
    ]


def _labelled(
    rows: list[tuple[float, Direction, tuple[str, ...]]],
) -> list[SipEvent]:
    return [
        SipEvent(time_ms, direction, 100 + i, candidates)
        for i, (time_ms, direction, candidates) in enumerate(rows)
    ]


# victim is the callee of a declined call
DECLINED = [
    (0.0, DL, 2358),
    (150.0, UL, 338),
    (300.0, UL, 1437),
    (500.0, UL, 877),
    (3500.0, UL, 878),
]

# victim is the caller of an answered call and hangs up
ANSWERED = [
    (0.0, UL, 2479),
    (100.0, DL, 445),
    (200.0, DL, 1417),
    (400.0, DL, 843),
    (3400.0, DL, 1086),
    (3500.0, UL, 1026),
    (33500.0, UL, 1104),
    (33600.0, DL, 459),
]

# victim is the caller of a call it cancels while ringing
CANCELLED = [
    (0.0, UL, 2479),
    (120.0, DL, 445),
    (260.0, DL, 1624),
    (400.0, DL, 868),
    (3400.0, UL, 639),
    (3600.0, DL, 478),
    (3700.0, UL, 672),
]


def test_classify_size(s7_db: FingerprintDb) -> None:
    assert classify_size(2479, UL, s7_db) == ("Invite",)
    assert classify_size(877, UL, s7_db) == (
        "180 Ring (Invite)",
        "486 Busy Here",
    )
    assert classify_size(1437, UL, s7_db) == (
        "183 Session Process",
        "200 OK (Invite)",
    )
    assert classify_size(2479, DL, s7_db) == ()


@pytest.mark.parametrize(
    "carrier, device",
    [
        ("carrier1", "s7"),
        ("carrier1", "s8"),
        ("carrier1", "iphone11"),
        ("carrier2", "iphone11"),
    ],
)
def test_every_listed_size_classifies(carrier: str, device: str) -> None:
    db = load_db(bundled_db_path(carrier, device))
    for entry in db.entries:
        for size_range in entry.ranges:
            for size in size_range.sizes:
                candidates = classify_size(size, entry.direction, db)
                assert entry.operation in candidates, (size, entry)

def test_revise_log_settles_overlaps(s7_db: FingerprintDb) -> None:
    events = _events(s7_db, DECLINED)
    assert sum(len(event.candidates) > 1 for event in events) == 3
    revised = revise_log(events)
    assert [event.label for event in revised] == [
        "Invite",
        "100 Trying (Invite)",
        "183 Session Process",
        "180 Ring (Invite)",
        "486 Busy Here",
    ]
    assert {event.status for event in revised} == {Resolution.RESOLVED}
    (record,) = extract_call_records(revised, identity="G1")
    assert record.identity == "G1"
    assert record.call_direction is CallDirection.INCOMING
    assert record.establish_status is EstablishStatus.DECLINED
    assert record.termination_cause is TerminationCause.CALLEE_BUSY
    assert not record.voicemail


def test_revise_log_unknown_and_unresolvable(s7_db: FingerprintDb) -> None:
    rows = [*DECLINED[:2], (200.0, DL, 5000), (250.0, UL, 1104), *DECLINED[2:]]
    revised = revise_log(_events(s7_db, rows))
    assert revised[2].status is Resolution.UNKNOWN
    assert revised[2].label == "Unknown"
    # a Bye cannot follow 100 Trying; the automaton skips it
    assert revised[3].status is Resolution.UNRESOLVABLE
    assert [event.resolved for event in revised[4:]] == [
        "183 Session Process",
        "180 Ring (Invite)",
        "486 Busy Here",
    ]


def test_keepalive_does_not_move_context() -> None:
    events = _labelled(
        [
            (0.0, UL, (INVITE,)),
            (10.0, DL, (OPTIONS,)),
            (400.0, DL, (RING,)),
        ]
    )
    assert [event.resolved for event in revise_log(events)] == [
        INVITE,
        OPTIONS,
        RING,
    ]


def test_answered_call_record(s7_db: FingerprintDb) -> None:
    revised = revise_log(_events(s7_db, ANSWERED))
    assert all(event.status is Resolution.RESOLVED for event in revised)
    (record,) = extract_call_records(revised, (3520.0, 33480.0))
    assert record.call_direction is CallDirection.OUTGOING
    assert record.establish_status is EstablishStatus.ACCEPTED
    assert record.termination_cause is TerminationCause.CALLER_BYE
    assert record.duration_s == pytest.approx(30.0)
    assert record.drb3_consistent is True
    (short,) = extract_call_records(revised, (3520.0, 10000.0))
    assert short.drb3_consistent is False
    (unchecked,) = extract_call_records(revised)
    assert unchecked.drb3_consistent is None


def test_cancelled_and_following_call(s7_db: FingerprintDb) -> None:
    rows = CANCELLED + [(t + 60_000, d, n) for t, d, n in ANSWERED]
    records = extract_call_records(revise_log(_events(s7_db, rows)))
    assert [
        (r.establish_status, r.termination_cause) for r in records
    ] == [
        (EstablishStatus.MISSED, TerminationCause.CALLER_CANCEL_RINGING),
        (EstablishStatus.ACCEPTED, TerminationCause.CALLER_BYE),
    ]
    assert records[1].timestamp_ms == 60_000.0


def test_voicemail_call_record() -> None:
    events = _labelled(
        [
            (0.0, UL, (INVITE,)),
            (400.0, DL, (RING,)),
            (3400.0, DL, (REJECTED,)),
            (3600.0, DL, (OK_INVITE,)),
            (3700.0, UL, (ACK_OK,)),
            (20_000.0, UL, (BYE,)),
            (20_100.0, DL, (OK_BYE,)),
        ]
    )
    revised = revise_log(events)
    assert all(event.status is Resolution.RESOLVED for event in revised)
    (record,) = extract_call_records(revised)
    assert record.establish_status is EstablishStatus.DECLINED
    assert record.voicemail
    assert record.duration_s == 0


def test_incomplete_call() -> None:
    events = revise_log(_labelled([(0.0, DL, (INVITE,)), (9.0, UL, (RING,))]))
    (record,) = extract_call_records(events)
    assert record.incomplete
    assert record.establish_status is None
    assert extract_call_records([]) == []


def test_event_rejects_foreign_resolution() -> None:
    with pytest.raises(ValueError, match="not a candidate"):
        SipEvent(0.0, UL, 10, ("Invite",), resolved="Bye")


def test_render_signalling_log(s7_db: FingerprintDb) -> None:
    text = render_signalling_log(revise_log(_events(s7_db, DECLINED[:2])))
    assert text.splitlines() == [
        "         0.0 DL   2358  Invite",
        "       150.0 UL    338  100 Trying (Invite)",
    ]
    assert render_signalling_log([]) == ""


def _db(**changes: Any) -> dict[str, Any]:
    raw: dict[str, Any] = {
        "format_version": "1.0",
        "carrier": "lab",
        "device": "phone",
        "entries": [
            {
                "operation": "Invite",
                "direction": "uplink",
                "ranges": [{"center": 900, "tolerance": 2}],
            },
            {
                "operation": "Invite",
                "direction": "downlink",
                "ranges": [{"center": 950, "tolerance": 0}],
            },
        ],
    }
    raw.update(changes)
    return raw


def test_load_db_from_mapping() -> None:
    db = load_db(_db())
    assert (db.carrier, db.device, len(db.entries)) == ("lab", "phone", 2)
    assert classify_size(902, UL, db) == ("Invite",)
    assert classify_size(903, UL, db) == ()


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"format_version": "2.0"}, "unsupported fingerprint format"),
        ({"device": None, "entries": []}, "no uplink entries"),
        (
            {
                "entries": [
                    {
                        "operation": "Bye",
                        "direction": "uplink",
                        "ranges": [{"center": 5, "tolerance": -1}],
                    }
                ]
            },
            "negative tolerance",
        ),
        (
            {
                "entries": _db()["entries"] + _db()["entries"][:1],
            },
            "duplicate entry",
        ),
        ({"entries": [{"operation": "Bye"}]}, "malformed entry"),
    ],
)
def test_load_db_errors(changes: dict[str, Any], message: str) -> None:
    with pytest.raises(FingerprintError, match=message):
        load_db(_db(**changes))


def test_load_db_missing_field() -> None:
    raw = _db()
    del raw["carrier"]
    with pytest.raises(FingerprintError, match="missing field"):
        load_db(raw)
