"""Tests for passive and active identity mapping."""

from __future__ import annotations

from collections.abc import Iterable

import pytest

from ..identity import (
    TAMPERED_M_TMSI,
    AttackerCall,
    AttackerCallLog,
    Confidence,
    IdentityBinding,
    IdentityError,
    IdentityKind,
    Method,
    NasKind,
    NasRecord,
    NoExtractionOpportunity,
    Subscriber,
    binding_validity,
    extract_imsi,
    identity_from_nas,
    passive_map,
    tamper_attach,
)
from ..sip import CallDirection, CallRecord, EstablishStatus, TerminationCause
from ..tools import rng_for
from ..tracegen import attach_records, gen_attach_trace, make_subscriber


def _incoming(identity: str, time_ms: float) -> CallRecord:
    return CallRecord(
        identity,
        time_ms,
        CallDirection.INCOMING,
        EstablishStatus.MISSED,
        TerminationCause.CALLER_CANCEL_RINGING,
    )


def test_passive_map_window() -> None:
    log = AttackerCallLog(
        (
            AttackerCall("+15550100", 10_000.0),
            AttackerCall("+15550101", 40_000.0),
            AttackerCall("+15550102", 70_000.0),
        )
    )
    calls = [
        _incoming("G0", 10_800.0),
        _incoming("G1", 45_000.0),
        _incoming("G2", 45_000.1),
        _incoming("G3", 70_000.0),
        CallRecord("G4", 70_500.0, CallDirection.OUTGOING, None, None),
    ]
    bindings = passive_map(log, calls)
    assert [
        (b.identity_value, b.phone_number, b.confidence) for b in bindings
    ] == [
        ("G0", "+15550100", Confidence.UNIQUE),
        ("G1", "+15550101", Confidence.UNIQUE),
    ]
    assert all(b.method is Method.PASSIVE for b in bindings)
    wide = passive_map(log, calls, window_ms=5000.1)
    assert [(b.identity_value, b.confidence) for b in wide[1:]] == [
        ("G1", Confidence.AMBIGUOUS),
        ("G2", Confidence.AMBIGUOUS),
    ]
    with pytest.raises(ValueError):
        passive_map(log, calls, window_ms=0)


def test_attacker_log_must_increase() -> None:
    with pytest.raises(IdentityError, match="not increasing"):
        AttackerCallLog((AttackerCall("+1", 5.0), AttackerCall("+2", 5.0)))


def test_tamper_attach_changes_only_mtmsi(subscriber: Subscriber) -> None:
    (attach, *_) = attach_records(subscriber, rng_for(0, "nas"))
    tampered = tamper_attach(attach)
    assert tampered.m_tmsi == TAMPERED_M_TMSI != attach.m_tmsi
    assert not tampered.integrity_valid
    assert (tampered.time_ms, tampered.identity_value) == (
        attach.time_ms,
        attach.identity_value,
    )
    with pytest.raises(IdentityError, match="not a GUTI attach"):
        tamper_attach(NasRecord(0.0, NasKind.AUTH_REQUEST))
    suci = NasRecord(0.0, NasKind.ATTACH_REQUEST, IdentityKind.SUCI, "s")
    with pytest.raises(IdentityError):
        tamper_attach(suci)


def test_nas_record_validation() -> None:
    with pytest.raises(IdentityError, match="32 bits"):
        NasRecord(0.0, NasKind.ATTACH_REQUEST, m_tmsi=2**32)
    with pytest.raises(IdentityError, match="without M-TMSI"):
        NasRecord(0.0, NasKind.ATTACH_REQUEST, IdentityKind.GUTI, "G")


def _nas(trace_records: Iterable[object]) -> list[NasRecord]:
    return [r for r in trace_records if isinstance(r, NasRecord)]


def test_extract_imsi(subscriber: Subscriber) -> None:
    tampered = _nas(gen_attach_trace(subscriber, tampered=True).records)
    assert [r.kind for r in tampered] == [
        NasKind.ATTACH_REQUEST,
        NasKind.IDENTITY_REQUEST,
        NasKind.IDENTITY_RESPONSE,
        NasKind.AUTH_REQUEST,
        NasKind.AUTH_RESPONSE,
    ]
    extraction = extract_imsi(tampered)
    assert extraction.imsi == subscriber.imsi
    assert extraction.attach.m_tmsi == TAMPERED_M_TMSI
    assert identity_from_nas(tampered) == subscriber.imsi
    plain = _nas(gen_attach_trace(subscriber).records)
    assert [r.kind for r in plain] == [
        NasKind.ATTACH_REQUEST,
        NasKind.AUTH_REQUEST,
        NasKind.AUTH_RESPONSE,
    ]
    with pytest.raises(NoExtractionOpportunity):
        extract_imsi(plain)
    assert identity_from_nas(plain) == subscriber.guti
    assert identity_from_nas([]) is None


@pytest.mark.parametrize("seed", range(6))
def test_only_tampered_attaches_reveal_imsi(seed: int) -> None:
    subscriber = make_subscriber(seed)
    for kind in (IdentityKind.GUTI, IdentityKind.SUCI):
        plain = gen_attach_trace(subscriber, seed=seed, identity_kind=kind)
        with pytest.raises(NoExtractionOpportunity):
            extract_imsi(_nas(plain.records))
    tampered = gen_attach_trace(subscriber, tampered=True, seed=seed)
    assert extract_imsi(_nas(tampered.records)).imsi == subscriber.imsi


def test_extract_imsi_needs_pending_request(subscriber: Subscriber) -> None:
    response = NasRecord(
        5.0, NasKind.IDENTITY_RESPONSE, IdentityKind.IMSI, subscriber.imsi
    )
    with pytest.raises(NoExtractionOpportunity):
        extract_imsi([response])
    attach = tamper_attach(
        NasRecord(
            0.0,
            NasKind.ATTACH_REQUEST,
            IdentityKind.GUTI,
            subscriber.guti,
            subscriber.m_tmsi,
        )
    )
    # a later valid attach closes the opportunity
    fresh = NasRecord(
        3.0,
        NasKind.ATTACH_REQUEST,
        IdentityKind.GUTI,
        subscriber.guti,
        subscriber.m_tmsi,
    )
    request = NasRecord(4.0, NasKind.IDENTITY_REQUEST)
    with pytest.raises(NoExtractionOpportunity):
        extract_imsi([attach, fresh, request, response])
    assert extract_imsi([attach, request, response]).imsi == subscriber.imsi


def test_binding_validity() -> None:
    bindings = [
        IdentityBinding(
            "G1", "+1", 1000.0, Method.PASSIVE, Confidence.UNIQUE
        ),
        IdentityBinding(
            "G2", "+2", 1000.0, Method.ACTIVE, Confidence.UNIQUE
        ),
    ]
    checked = binding_validity(bindings, [("G1", 500.0), ("G2", 2000.0)])
    assert [b.stale for b in checked] == [False, True]
    assert binding_validity(bindings, []) == bindings
