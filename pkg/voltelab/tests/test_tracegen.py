"""Tests for the synthetic trace generator."""

from __future__ import annotations

import pytest

from ..identity import NasRecord, Subscriber
from ..pdcp import Direction, PdcpRecord, reassemble
from ..phy import PucchObservation, sr_config_lookup
from ..profiles import CarrierProfile, ProfileMismatchError, load_profile
from ..scenarios import Role, Scenario
from ..tools import rng_for
from ..tracegen import (
    ScenarioSpec,
    VadInterval,
    gen_call_trace,
    gen_phy_param_corpus,
    make_subscriber,
    random_vad,
)


def _spec(
    profile: CarrierProfile, scenario: Scenario, **kwargs: object
) -> ScenarioSpec:
    return ScenarioSpec(
        scenario=scenario,
        profile=profile,
        device="s7",
        subscriber=make_subscriber(0),
        **kwargs,  # type: ignore[arg-type]
    )


def test_generation_is_deterministic(carrier1: CarrierProfile) -> None:
    spec = _spec(carrier1, Scenario.CALLER_BYE, seed=5)
    first = gen_call_trace(spec)
    second = gen_call_trace(spec)
    assert first.records == second.records
    assert first.truth == second.truth
    assert first.summary == second.summary
    other = gen_call_trace(_spec(carrier1, Scenario.CALLER_BYE, seed=6))
    assert other.records != first.records


def test_cancelled_call(carrier1: CarrierProfile) -> None:
    trace = gen_call_trace(_spec(carrier1, Scenario.CALLER_CANCEL))
    (call,) = trace.summary.calls
    assert call.victim_role is Role.CALLER
    # the S7 database lists no 200 OK (Cancel) nor any Update the caller sees
    assert [message.operation for message in call.messages] == [
        "Invite",
        "100 Trying (Invite)",
        "183 Session Process",
        "Pack",
        "200 OK (Pack)",
        "180 Ring (Invite)",
        "Cancel",
        "487 Request Terminated",
        "ACK (487 Request Terminated)",
    ]
    assert call.messages[0].direction is Direction.UPLINK
    assert call.invite_ms == call.messages[0].time_ms
    assert call.conversation is None
    assert trace.summary.drb3_lifetime is None
    assert not any(
        isinstance(r, PdcpRecord) and r.drb == 3 for r in trace.records
    )
    labels = [t.label for t in trace.truth]
    assert labels.index("SYNC") < labels.index("SYNC_ACK") < labels.index(
        "Invite"
    )
    assert [t.index for t in trace.truth] == list(range(len(trace.records)))
    assert len(trace.truth) == len(trace.records)


def test_truth_lineage_matches_reassembly(carrier1: CarrierProfile) -> None:
    trace = gen_call_trace(_spec(carrier1, Scenario.CALLEE_BYE, seed=2))
    indices = [
        i
        for i, record in enumerate(trace.records)
        if isinstance(record, PdcpRecord) and record.drb == 2
    ]
    sip_records = [trace.records[i] for i in indices]
    packets = reassemble(sip_records, carrier1.mtu)  # type: ignore[arg-type]
    assert packets
    for packet in packets:
        truth = [trace.truth[indices[i]] for i in packet.records]
        assert len({t.packet for t in truth}) == 1
        assert [t.fragment for t in truth] == list(range(len(truth)))
        assert truth[0].fragment_count == packet.fragment_count
        assert truth[-1].terminator is not packet.unterminated


def test_answered_call_voice(carrier1: CarrierProfile) -> None:
    trace = gen_call_trace(
        _spec(carrier1, Scenario.CALLER_BYE, conversation_length_ms=10_000)
    )
    summary = trace.summary
    (call,) = summary.calls
    assert call.conversation is not None
    start, end = call.conversation
    assert end - start == 10_000
    assert summary.drb3_lifetime is not None
    first, last = summary.drb3_lifetime
    assert start < first and last <= end
    voice = [
        t.label
        for t, r in zip(trace.truth, trace.records)
        if isinstance(r, PdcpRecord)
        and r.drb == 3
        and r.direction is Direction.UPLINK
    ]
    assert voice[:4] == ["RohcInit"] * 4
    assert "RohcInit" not in voice[4:]
    for direction in Direction:
        intervals = summary.vad[direction]
        assert intervals[0].start_ms == start
        assert intervals[-1].end_ms == end


def test_phy_and_nas_records(carrier1: CarrierProfile) -> None:
    trace = gen_call_trace(_spec(carrier1, Scenario.CALLER_CANCEL))
    nas = [r for r in trace.records if isinstance(r, NasRecord)]
    phy = [r for r in trace.records if isinstance(r, PucchObservation)]
    assert nas[0].kind.value == "AttachRequest"
    assert nas[0].identity_value == make_subscriber(0).guti
    assert phy
    sr = trace.summary.sr
    assert sr is not None
    assert sr_config_lookup(sr.periodicity_ms, sr.subframe_offset) == (
        sr.sr_config_index
    )


def test_scenario_spec_validation(
    carrier1: CarrierProfile, subscriber: Subscriber
) -> None:
    with pytest.raises(ProfileMismatchError, match="voicemail"):
        _spec(carrier1, Scenario.CALLER_CANCEL, voicemail=True)
    with pytest.raises(ProfileMismatchError, match="voicemail"):
        _spec(
            carrier1,
            Scenario.CALLEE_DECLINE,
            voicemail=True,
            victim_role=Role.CALLEE,
        )
    with pytest.raises(ValueError, match="loss"):
        _spec(carrier1, Scenario.CALLER_CANCEL, loss=1.0)
    with pytest.raises(ValueError, match="jitter"):
        _spec(carrier1, Scenario.CALLER_CANCEL, jitter_ms=10.0)
    with pytest.raises(ValueError, match="start_ms"):
        _spec(carrier1, Scenario.CALLER_CANCEL, start_ms=10.0)
    with pytest.raises(ProfileMismatchError, match="tampering needs a GUTI"):
        ScenarioSpec(
            Scenario.CALLER_CANCEL,
            load_profile("carrier1-sa"),
            "s7",
            subscriber,
            tamper_attach=True,
        )


@pytest.mark.parametrize(
    "scenario, victim",
    [(Scenario.CALLER_BYE, Role.CALLEE), (Scenario.CALLEE_BYE, Role.CALLER)],
)
def test_hang_up_needs_bye(
    carrier1: CarrierProfile, scenario: Scenario, victim: Role
) -> None:
    # the S7 database has no downlink Bye
    with pytest.raises(ProfileMismatchError, match="no downlink Bye"):
        gen_call_trace(_spec(carrier1, scenario, victim_role=victim))
    spec = ScenarioSpec(
        scenario,
        carrier1,
        "iphone11",
        make_subscriber(0),
        victim_role=victim,
        conversation_length_ms=5000.0,
    )
    (call,) = gen_call_trace(spec).summary.calls
    byes = [m for m in call.messages if m.operation == "Bye"]
    assert [m.direction for m in byes] == [Direction.DOWNLINK]
    assert call.messages[-1].operation == "200 OK (Bye)"


def test_unknown_device(carrier1: CarrierProfile) -> None:
    spec = ScenarioSpec(
        Scenario.CALLER_CANCEL, carrier1, "pixel", make_subscriber(0)
    )
    with pytest.raises(ProfileMismatchError, match="not fingerprinted"):
        gen_call_trace(spec)


def test_vad_pattern_checks(carrier1: CarrierProfile) -> None:
    late = {
        Direction.UPLINK: [VadInterval(20.0, 1000.0, True)],
        Direction.DOWNLINK: [VadInterval(0.0, 1000.0, True)],
    }
    spec = _spec(
        carrier1,
        Scenario.CALLER_BYE,
        vad_pattern=late,
        conversation_length_ms=1000,
    )
    with pytest.raises(ValueError, match="open with speech"):
        gen_call_trace(spec)
    pattern = random_vad(rng_for(0, "vad"), 20_000.0, first_ms=80.0)
    assert pattern[0].speaking and pattern[0].end_ms >= 80.0
    assert pattern[-1].end_ms == 20_000.0
    assert all(a.end_ms == b.start_ms for a, b in zip(pattern, pattern[1:]))


def test_phy_corpus(carrier1: CarrierProfile) -> None:
    corpus = gen_phy_param_corpus(20, carrier1, seed=1)
    assert len(corpus) == 20
    assert corpus == gen_phy_param_corpus(20, carrier1, seed=1)
    for item in corpus:
        assert item.mimo
        assert item.sr.periodicity_ms == 10
        assert item.cqi.ri_config_index == 474
        assert item.known_periodicity == 10
    with pytest.raises(ValueError):
        gen_phy_param_corpus(0, carrier1)
    with pytest.raises(ValueError):
        gen_phy_param_corpus(1, carrier1, loss=1.0)
