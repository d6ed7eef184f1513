"""Voice activity of each call side from voice bearer packet sizes.

AMR sends one audio frame every 20 ms while the speaker talks and one comfort
noise frame every 160 ms while they are silent.  ROHC squeezes headers to a
few bytes, so the two frame types differ clearly in size, and the sequence of
sizes gives a speaking timeline with 20 ms resolution.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .pdcp import Direction, PdcpError, PdcpRecord

logger = logging.getLogger(__name__)

WINDOW_MS = 20
AUDIO_CADENCE_MS = 20
CN_CADENCE_MS = 160
DEFAULT_CN_THRESHOLD = 10
DEFAULT_MAX_AUDIO_BYTES = 70
VOICE_DRB = 3


class FrameClass(str, Enum):
    """Type of an RTP frame judged from its size."""

    AUDIO = "Audio"
    COMFORT_NOISE = "ComfortNoise"
    ROHC_INIT = "RohcInit"


class VoiceState(str, Enum):
    """State of a speaker over a window."""

    SPEAKING = "Speaking"
    SILENT = "Silent"


@dataclass(frozen=True)
class RtpRecord:
    """One voice bearer packet with its on-air payload size."""

    direction: Direction
    time_ms: float
    payload_len: int

    def __post_init__(self) -> None:
        if self.payload_len < 1:
            raise ValueError(
                f"payload_len must be positive, got {self.payload_len}"
            )


@dataclass(frozen=True)
class ActivityInterval:
    """Half open interval ``(start_ms, end_ms]`` in one voice state."""

    start_ms: float
    end_ms: float
    state: VoiceState

    @property
    def length_ms(self) -> float:
        """Interval length."""
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class ActivityTimeline:
    """Speaking and silent intervals of each direction."""

    intervals: Mapping[Direction, tuple[ActivityInterval, ...]] = field(
        default_factory=dict
    )
    window_ms: int = WINDOW_MS

    def __post_init__(self) -> None:
        for direction, intervals in self.intervals.items():
            for before, after in zip(intervals, intervals[1:]):
                if before.end_ms != after.start_ms:
                    raise ValueError(f"{direction.value} timeline has a gap")
                if before.state is after.state:
                    raise ValueError(
                        f"{direction.value} timeline states do not alternate"
                    )

    def state_at(
        self, direction: Direction, time_ms: float
    ) -> VoiceState | None:
        """Return the state at `time_ms`, None outside the call span."""
        for interval in self.intervals.get(direction, ()):
            if interval.start_ms < time_ms <= interval.end_ms:
                return interval.state
        return None

    def speaking_ms(self, direction: Direction) -> float:
        """Return the total speaking time of `direction`."""
        return sum(
            interval.length_ms
            for interval in self.intervals.get(direction, ())
            if interval.state is VoiceState.SPEAKING
        )

    @property
    def empty(self) -> bool:
        """True if no direction has any interval."""
        return not any(self.intervals.values())


def classify_frame(
    payload_len: int,
    cn_threshold: int = DEFAULT_CN_THRESHOLD,
    max_audio_bytes: int = DEFAULT_MAX_AUDIO_BYTES,
) -> FrameClass:
    """Return the frame type of a voice payload of `payload_len` bytes.

    A comfort noise frame is 6 bytes plus one byte of AMR header and three of
    ROHC header.  Frames sent before the ROHC context is established carry
    full headers and are larger than any compressed audio frame.

    Examples
    --------
    >>> classify_frame(10).value
    'ComfortNoise'
    >>> classify_frame(63).value
    'Audio'
    >>> classify_frame(120, max_audio_bytes=70).value
    'RohcInit'
    """
    if cn_threshold <= 0:
        raise ValueError(f"cn_threshold must be positive, got {cn_threshold}")
    if payload_len <= cn_threshold:
        return FrameClass.COMFORT_NOISE
    if payload_len > max_audio_bytes:
        return FrameClass.ROHC_INIT
    return FrameClass.AUDIO


def filter_rtcp(
    packets: Iterable[RtpRecord], rtcp_sizes: Iterable[int]
) -> tuple[list[RtpRecord], int]:
    """Drop RTCP packets, recognised by their fixed sizes.

    Returns
    -------
    packets : list of RtpRecord
        The packets whose size is not an RTCP size, in input order.
    removed : int
        Number of packets dropped.

    Examples
    --------
    >>> stream = [RtpRecord(Direction.UPLINK, i, n)
    ...           for i, n in enumerate([128, 33, 140, 10])]
    >>> kept, removed = filter_rtcp(stream, {128, 140})
    >>> [p.payload_len for p in kept], removed
    ([33, 10], 2)
    """
    sizes = frozenset(rtcp_sizes)
    if not sizes:
        raise ValueError("no RTCP sizes given")
    packets = list(packets)
    kept = [packet for packet in packets if packet.payload_len not in sizes]
    removed = len(packets) - len(kept)
    logger.info("Removed %d RTCP packets of %d", removed, len(packets))
    return kept, removed


def rtp_from_pdcp(
    records: Iterable[PdcpRecord],
    pdcp_overhead_bytes: int = 0,
    drb: int = VOICE_DRB,
) -> list[RtpRecord]:
    """Return the voice bearer records of a PDCP stream as RTP records."""
    packets = []
    for record in records:
        if record.drb != drb:
            continue
        payload = record.pdu_len - pdcp_overhead_bytes
        if payload < 1:
            raise PdcpError(
                f"underflow: {record.pdu_len} byte PDU on DRB{drb} is smaller "
                f"than the PDCP overhead"
            )
        packets.append(RtpRecord(record.direction, record.time_ms, payload))
    return packets


def packet_counts(
    stream: Iterable[RtpRecord],
    cn_threshold: int = DEFAULT_CN_THRESHOLD,
    max_audio_bytes: int = DEFAULT_MAX_AUDIO_BYTES,
) -> dict[Direction, Counter[FrameClass]]:
    """Count frames per direction and frame type."""
    counts: dict[Direction, Counter[FrameClass]] = {}
    for packet in stream:
        frame = classify_frame(
            packet.payload_len, cn_threshold, max_audio_bytes
        )
        counts.setdefault(packet.direction, Counter())[frame] += 1
    return counts


def expected_rtp_count(speaking_ms: float, silent_ms: float) -> int:
    """Return the RTP packets sent over `speaking_ms` and `silent_ms`.

    Examples
    --------
    >>> expected_rtp_count(30_000, 30_000)
    1687
    """
    return int(speaking_ms // AUDIO_CADENCE_MS + silent_ms // CN_CADENCE_MS)


def _mark_windows(
    counts: np.ndarray, marks: np.ndarray, origin: float, window_ms: int
) -> None:
    """Count marks ``(start, end]`` on the windows ending inside them."""
    n = len(counts) - 1
    for start, end in marks:
        low = max(0, math.floor((start - origin) / window_ms))
        high = min(n, math.floor((end - origin) / window_ms))
        if low < high:
            counts[low] += 1
            counts[high] -= 1


def _direction_timeline(
    packets: Sequence[RtpRecord],
    cn_threshold: int,
    max_audio_bytes: int,
    audio_cadence_ms: int,
    cn_cadence_ms: int,
    window_ms: int,
) -> tuple[ActivityInterval, ...]:
    times = np.array([packet.time_ms for packet in packets], dtype=float)
    silent = np.array(
        [
            classify_frame(packet.payload_len, cn_threshold, max_audio_bytes)
            is FrameClass.COMFORT_NOISE
            for packet in packets
        ]
    )
    reach = np.where(silent, cn_cadence_ms, audio_cadence_ms)
    span_start = max(0.0, float(np.min(times - reach)))
    span_end = float(times[-1])
    origin = math.floor(span_start / window_ms) * window_ms
    n_windows = math.ceil((span_end - origin) / window_ms)
    if n_windows <= 0:
        return ()
    marks = np.column_stack((times - reach, times))
    speaking = np.zeros(n_windows + 1, dtype=int)
    silence = np.zeros(n_windows + 1, dtype=int)
    _mark_windows(speaking, marks[~silent], origin, window_ms)
    _mark_windows(silence, marks[silent], origin, window_ms)
    is_speaking = np.cumsum(speaking)[:-1] > 0
    labeled = is_speaking | (np.cumsum(silence)[:-1] > 0)
    # unlabeled windows keep the state of the last labeled one
    last = np.maximum.accumulate(
        np.where(labeled, np.arange(n_windows), -1)
    )
    states = np.where(last >= 0, is_speaking[np.maximum(last, 0)], ~silent[0])
    change = np.flatnonzero(np.diff(states.astype(int))) + 1
    bounds = [0, *change.tolist(), n_windows]
    intervals = []
    for first, stop in zip(bounds, bounds[1:]):
        intervals.append(
            ActivityInterval(
                start_ms=float(max(span_start, origin + first * window_ms)),
                end_ms=float(min(span_end, origin + stop * window_ms)),
                state=(
                    VoiceState.SPEAKING
                    if states[first]
                    else VoiceState.SILENT
                ),
            )
        )
    return tuple(intervals)


def activity_timeline(
    stream: Iterable[RtpRecord],
    *,
    cn_threshold: int = DEFAULT_CN_THRESHOLD,
    max_audio_bytes: int = DEFAULT_MAX_AUDIO_BYTES,
    audio_cadence_ms: int = AUDIO_CADENCE_MS,
    cn_cadence_ms: int = CN_CADENCE_MS,
    window_ms: int = WINDOW_MS,
) -> ActivityTimeline:
    """Recover speaking and silent intervals from an RTP stream.

    A comfort noise frame at time t means silence over ``(t - 160, t]``; an
    audio (or ROHC initialisation) frame at t means speech over
    ``(t - 20, t]``.  Speech wins where both apply.  Windows without any
    packet keep the previous state; windows before the first labeled one take
    the state of the first packet.

    Parameters
    ----------
    stream : iterable of RtpRecord
        Time ordered voice packets with RTCP already removed.  Directions are
        processed independently.
    cn_threshold, max_audio_bytes : int, optional
        Frame size limits, see :func:`classify_frame`.
    audio_cadence_ms, cn_cadence_ms : int, optional
        Frame intervals of audio and comfort noise.
    window_ms : int, optional
        Timeline resolution.

    Returns
    -------
    ActivityTimeline
        Empty for an empty stream.

    Examples
    --------
    >>> up = Direction.UPLINK
    >>> audio = [RtpRecord(up, t, 63) for t in range(20, 520, 20)]
    >>> noise = [RtpRecord(up, t, 10) for t in (660, 820)]
    >>> timeline = activity_timeline(audio + noise)
    >>> [(i.start_ms, i.end_ms, i.state.value)
    ...  for i in timeline.intervals[Direction.UPLINK]]
    [(0.0, 500.0, 'Speaking'), (500.0, 820.0, 'Silent')]
    """
    by_direction: dict[Direction, list[RtpRecord]] = {}
    for packet in stream:
        by_direction.setdefault(packet.direction, []).append(packet)
    intervals = {}
    for direction, packets in by_direction.items():
        if any(b.time_ms < a.time_ms for a, b in zip(packets, packets[1:])):
            raise ValueError(f"{direction.value} stream is not time ordered")
        intervals[direction] = _direction_timeline(
            packets,
            cn_threshold,
            max_audio_bytes,
            audio_cadence_ms,
            cn_cadence_ms,
            window_ms,
        )
        logger.info(
            "%s: %d packets, %d activity intervals",
            direction.short,
            len(packets),
            len(intervals[direction]),
        )
    return ActivityTimeline(intervals, window_ms)


def window_states(
    intervals: Sequence[ActivityInterval],
    start_ms: float,
    n_windows: int,
    window_ms: int = WINDOW_MS,
) -> np.ndarray:
    """Return per window states as an int array.

    Window k is ``(start_ms + k * window_ms, start_ms + (k + 1) * window_ms]``
    and takes the state holding at its midpoint: 1 speaking, 0 silent, -1
    outside every interval.
    """
    mids = start_ms + (np.arange(n_windows) + 0.5) * window_ms
    states = np.full(n_windows, -1, dtype=int)
    if not intervals:
        return states
    starts = np.array([interval.start_ms for interval in intervals])
    ends = np.array([interval.end_ms for interval in intervals])
    speaking = np.array(
        [interval.state is VoiceState.SPEAKING for interval in intervals]
    )
    slot = np.searchsorted(ends, mids, side="left")
    inside = slot < len(intervals)
    slot = np.minimum(slot, len(intervals) - 1)
    inside &= mids > starts[slot]
    states[inside] = speaking[slot[inside]].astype(int)
    return states
