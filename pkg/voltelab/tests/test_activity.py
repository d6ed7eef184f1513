"""Tests for frame classification and voice activity timelines."""

from __future__ import annotations

import numpy as np
import pytest

from ..activity import (
    ActivityInterval,
    ActivityTimeline,
    FrameClass,
    RtpRecord,
    VoiceState,
    activity_timeline,
    classify_frame,
    expected_rtp_count,
    filter_rtcp,
    packet_counts,
    rtp_from_pdcp,
    window_states,
)
from ..pdcp import Direction, PdcpError, PdcpRecord

UL = Direction.UPLINK
DL = Direction.DOWNLINK
SPEAKING = VoiceState.SPEAKING
SILENT = VoiceState.SILENT

CALL_MS = 105_000


def _speak_then_listen(direction: Direction, talk_ms: int) -> list[RtpRecord]:
    """Audio frames over ``(0, talk_ms]``, then comfort noise to the end."""
    audio = [RtpRecord(direction, t, 64) for t in range(20, talk_ms + 1, 20)]
    noise = [
        RtpRecord(direction, t, 10)
        for t in range(talk_ms + 160, CALL_MS + 1, 160)
    ]
    return audio + noise


def test_classify_frame_bounds() -> None:
    assert classify_frame(10) is FrameClass.COMFORT_NOISE
    assert classify_frame(11) is FrameClass.AUDIO
    assert classify_frame(70) is FrameClass.AUDIO
    assert classify_frame(71) is FrameClass.ROHC_INIT
    assert classify_frame(121) is FrameClass.ROHC_INIT
    assert classify_frame(12, cn_threshold=12) is FrameClass.COMFORT_NOISE
    with pytest.raises(ValueError):
        classify_frame(10, cn_threshold=0)


def test_long_call_timeline() -> None:
    uplink = _speak_then_listen(UL, 96_180)
    downlink = _speak_then_listen(DL, 61_640)
    assert len(uplink) == 4864 == expected_rtp_count(96_180, 8_820)
    assert len(downlink) == 3353 == expected_rtp_count(61_640, 43_360)
    timeline = activity_timeline(uplink + downlink)
    assert timeline.intervals[UL] == (
        ActivityInterval(0.0, 96_180.0, SPEAKING),
        ActivityInterval(96_180.0, 104_980.0, SILENT),
    )
    assert timeline.intervals[DL] == (
        ActivityInterval(0.0, 61_640.0, SPEAKING),
        ActivityInterval(61_640.0, 105_000.0, SILENT),
    )
    assert timeline.speaking_ms(UL) == 96_180.0
    assert timeline.state_at(DL, 61_640.0) is SPEAKING
    assert timeline.state_at(DL, 61_641.0) is SILENT
    assert timeline.state_at(DL, 0.0) is None
    counts = packet_counts(uplink + downlink)
    assert counts[UL][FrameClass.AUDIO] == 4809
    assert counts[UL][FrameClass.COMFORT_NOISE] == 55
    assert counts[DL][FrameClass.COMFORT_NOISE] == 271


def test_timeline_speech_wins_and_gaps_hold() -> None:
    # a comfort noise frame covering the last audio frame does not silence it
    stream = [
        RtpRecord(UL, 20.0, 64),
        RtpRecord(UL, 40.0, 64),
        RtpRecord(UL, 60.0, 10),
        RtpRecord(UL, 220.0, 10),
        RtpRecord(UL, 1000.0, 64),
    ]
    (head, pause, tail) = activity_timeline(stream).intervals[UL]
    assert (head.start_ms, head.end_ms, head.state) == (0.0, 40.0, SPEAKING)
    assert (pause.start_ms, pause.end_ms, pause.state) == (40.0, 980.0, SILENT)
    assert (tail.end_ms, tail.state) == (1000.0, SPEAKING)


def test_empty_and_unordered_streams() -> None:
    assert activity_timeline([]).empty
    stream = [RtpRecord(UL, 40.0, 64), RtpRecord(UL, 20.0, 64)]
    with pytest.raises(ValueError, match="not time ordered"):
        activity_timeline(stream)


def test_timeline_validation() -> None:
    with pytest.raises(ValueError, match="gap"):
        ActivityTimeline(
            {
                UL: (
                    ActivityInterval(0.0, 20.0, SPEAKING),
                    ActivityInterval(40.0, 60.0, SILENT),
                )
            }
        )
    with pytest.raises(ValueError, match="alternate"):
        ActivityTimeline(
            {
                UL: (
                    ActivityInterval(0.0, 20.0, SPEAKING),
                    ActivityInterval(20.0, 60.0, SPEAKING),
                )
            }
        )


def test_filter_rtcp() -> None:
    stream = [RtpRecord(UL, float(t), n) for t, n in enumerate([64, 128, 10])]
    kept, removed = filter_rtcp(stream, [128, 140])
    assert [packet.payload_len for packet in kept] == [64, 10]
    assert removed == 1
    with pytest.raises(ValueError, match="no RTCP sizes"):
        filter_rtcp(stream, [])


def _two_turns(direction: Direction) -> list[RtpRecord]:
    """Speech, silence, speech and silence over 12 s."""
    return sorted(
        [
            *(RtpRecord(direction, t, 64) for t in range(20, 2001, 20)),
            *(RtpRecord(direction, t, 10) for t in range(2160, 6001, 160)),
            *(RtpRecord(direction, t, 64) for t in range(6020, 8001, 20)),
            *(RtpRecord(direction, t, 10) for t in range(8160, 12_001, 160)),
        ],
        key=lambda packet: packet.time_ms,
    )


@pytest.mark.parametrize("sizes", [[128], [128, 140]])
def test_rtcp_does_not_change_timeline(sizes: list[int]) -> None:
    voice = _two_turns(UL) + _two_turns(DL)
    rtcp = [
        RtpRecord(direction, t + 7.0, sizes[t // 5000 % len(sizes)])
        for direction in (UL, DL)
        for t in range(0, 12_000, 2500)
    ]
    mixed = sorted(voice + rtcp, key=lambda packet: packet.time_ms)
    kept, removed = filter_rtcp(mixed, sizes)
    assert removed == len(rtcp)
    assert activity_timeline(kept).intervals == (
        activity_timeline(voice).intervals
    )


def test_added_audio_never_shortens_speech() -> None:
    base = _two_turns(UL)
    speaking = activity_timeline(base).speaking_ms(UL)
    for t in range(2100, 11_900, 370):
        frame = RtpRecord(UL, float(t), 64)
        stream = sorted([*base, frame], key=lambda packet: packet.time_ms)
        assert activity_timeline(stream).speaking_ms(UL) >= speaking


def test_rtp_from_pdcp() -> None:
    records = [
        PdcpRecord(UL, 0.0, 0, 4, 2, 900),
        PdcpRecord(UL, 20.0, 0, 5, 3, 66),
        PdcpRecord(DL, 25.0, 0, 5, 3, 12),
    ]
    packets = rtp_from_pdcp(records, pdcp_overhead_bytes=2)
    assert [(p.direction, p.payload_len) for p in packets] == [
        (UL, 64),
        (DL, 10),
    ]
    with pytest.raises(PdcpError, match="underflow"):
        rtp_from_pdcp(records, pdcp_overhead_bytes=12)


def test_window_states() -> None:
    intervals = [
        ActivityInterval(0.0, 40.0, SPEAKING),
        ActivityInterval(40.0, 100.0, SILENT),
    ]
    states = window_states(intervals, 0.0, 6)
    np.testing.assert_array_equal(states, [1, 1, 0, 0, 0, -1])
    np.testing.assert_array_equal(window_states([], 0.0, 2), [-1, -1])
