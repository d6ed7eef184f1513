"""Generate relay traces with ground truth.

The generator plays the part of the victim UE, the cell and the IMS: it emits
the PUCCH reports, PDCP records and NAS messages a mobile relay would see for
a call scenario, and records for each emitted line what it really was.  All
randomness comes from the scenario seed.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from itertools import count
from typing import Any, Union

import numpy as np

from .activity import VOICE_DRB, FrameClass
from .identity import (
    TAMPERED_M_TMSI,
    AttackerCall,
    AttackerCallLog,
    IdentityKind,
    NasKind,
    NasRecord,
    Subscriber,
    tamper_attach,
)
from .pdcp import Direction, PdcpRecord, Protocol, split_to_pdcp
from .phy import (
    CqiConfig,
    ObservationKind,
    Origin,
    PucchObservation,
    SrConfig,
    Tti,
    cqi_pmi_config_lookup,
    ri_timing,
    sr_config_lookup,
)
from .profiles import (
    RTP_BEARER,
    SIP_BEARER,
    CarrierProfile,
    ProfileMismatchError,
)
from .scenarios import (
    ACK_OK,
    DEFAULT_VICTIM_ROLE,
    OK_INVITE,
    RING,
    SCRIPTS,
    Role,
    Scenario,
    sender_direction,
)
from .sip import FingerprintDb, FingerprintEntry
from .tools import rng_for, weighted_choice

logger = logging.getLogger(__name__)

TraceRecord = Union[PucchObservation, PdcpRecord, NasRecord]

SIP_GAP_MS = (50, 300)
FRAGMENT_SPACING_MS = 1.0
TCP_ACK_DELAY_MS = (1.0, 3.0)
NAS_GAP_MS = (20, 60)
# uncompressed IPv6 + UDP + RTP headers, before the ROHC context exists
RTP_HEADERS_BYTES = 60
ROHC_HEADER_BYTES = 3
AMR_HEADER_BYTES = 1
VAD_GRID_MS = 20
TALK_SPURT_MS = (1000.0, 5000.0)
PAUSE_MS = (500.0, 3000.0)
INTERFERENCE_TA_US = 20.0
PHY_SPAN_MS = 600
# jitter must keep 20 ms frames in order
AMR_FRAME_JITTER_LIMIT = 10.0
# preamble offsets before the first Invite
ATTACH_LEAD_MS = 950.0
PHY_LEAD_MS = 700.0
HANDSHAKE_LEAD_MS = 150.0
POPULATION_DIAL_START_MS = 10_000.0
POPULATION_DIAL_SPACING_MS = 30_000.0
INVITE_LATENCY_MS = (300, 1500)


@dataclass(frozen=True)
class VadInterval:
    """Speaking or silent stretch ``(start_ms, end_ms]`` of one speaker."""

    start_ms: float
    end_ms: float
    speaking: bool

    def __post_init__(self) -> None:
        if not self.end_ms > self.start_ms:
            raise ValueError(f"empty VAD interval {self}")


VadPattern = Mapping[Direction, Sequence[VadInterval]]


@dataclass(frozen=True)
class RecordTruth:
    """What one trace line really is.

    Fragments of one IP packet share `packet`; `terminator` marks the last
    fragment when it is shorter than the MTU.
    """

    index: int
    label: str
    packet: int | None = None
    fragment: int | None = None
    fragment_count: int | None = None
    terminator: bool | None = None
    call: int | None = None
    origin: Origin | None = None

    def as_dict(self) -> dict[str, Any]:
        """Return the JSON shape of the sidecar line."""
        return {
            "index": self.index,
            "label": self.label,
            "packet": self.packet,
            "fragment": self.fragment,
            "fragment_count": self.fragment_count,
            "terminator": self.terminator,
            "call": self.call,
            "origin": None if self.origin is None else self.origin.value,
        }


@dataclass(frozen=True)
class SipTruth:
    """One SIP message as sent: arrival of its last fragment and operation."""

    time_ms: float
    direction: Direction
    operation: str
    size: int


@dataclass(frozen=True)
class CallTruth:
    """One generated call."""

    scenario: Scenario
    victim_role: Role
    voicemail: bool
    messages: tuple[SipTruth, ...]
    conversation: tuple[float, float] | None = None

    @property
    def invite_ms(self) -> float:
        """Arrival time of the Invite."""
        return self.messages[0].time_ms


@dataclass(frozen=True)
class GroundTruth:
    """Summary ground truth of a generated trace."""

    profile: str
    device: str | None
    subscriber: Subscriber
    identity_kind: IdentityKind = IdentityKind.GUTI
    tampered: bool = False
    sr: SrConfig | None = None
    sr_lcid: int | None = None
    cqi: CqiConfig | None = None
    calls: tuple[CallTruth, ...] = ()
    vad: Mapping[Direction, tuple[VadInterval, ...]] = field(
        default_factory=dict
    )
    drb3_lifetime: tuple[float, float] | None = None

    def as_dict(self) -> dict[str, Any]:
        """Return the JSON shape of the summary document."""
        subscriber = self.subscriber
        return {
            "profile": self.profile,
            "device": self.device,
            "subscriber": {
                "imsi": subscriber.imsi,
                "guti": subscriber.guti,
                "m_tmsi": f"{subscriber.m_tmsi:08x}",
                "suci": subscriber.suci,
                "phone": subscriber.phone,
            },
            "identity_kind": self.identity_kind.value,
            "tampered": self.tampered,
            "sr": None if self.sr is None else _config_dict(self.sr),
            "sr_lcid": self.sr_lcid,
            "cqi": None if self.cqi is None else _config_dict(self.cqi),
            "calls": [
                {
                    "scenario": int(call.scenario),
                    "victim_role": call.victim_role.value,
                    "voicemail": call.voicemail,
                    "conversation": (
                        None
                        if call.conversation is None
                        else list(call.conversation)
                    ),
                    "messages": [
                        {
                            "time_ms": message.time_ms,
                            "direction": message.direction.value,
                            "operation": message.operation,
                            "size": message.size,
                        }
                        for message in call.messages
                    ],
                }
                for call in self.calls
            ],
            "vad": {
                direction.value: [
                    [interval.start_ms, interval.end_ms, interval.speaking]
                    for interval in intervals
                ]
                for direction, intervals in self.vad.items()
            },
            "drb3_lifetime": (
                None
                if self.drb3_lifetime is None
                else list(self.drb3_lifetime)
            ),
        }


def _config_dict(config: SrConfig | CqiConfig) -> dict[str, Any]:
    return dict(vars(config))


@dataclass(frozen=True)
class GeneratedTrace:
    """Trace lines, one truth entry per line, and the summary truth."""

    records: list[TraceRecord]
    truth: list[RecordTruth]
    summary: GroundTruth


@dataclass(frozen=True)
class PhyCorpusItem:
    """One randomized connection for the parameter guessing experiment."""

    observations: tuple[PucchObservation, ...]
    sr: SrConfig
    cqi: CqiConfig
    lcid: int
    mimo: bool

    @property
    def known_periodicity(self) -> int:
        """SR periodicity fixed by the carrier for the bearer."""
        return self.sr.periodicity_ms


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to generate one call trace.

    `vad_pattern` intervals are relative to the start of the conversation;
    random patterns are drawn when it is None.  `victim_role` defaults to the
    usual side of the relayed victim for the scenario.
    """

    scenario: Scenario
    profile: CarrierProfile
    device: str
    subscriber: Subscriber
    victim_role: Role | None = None
    vad_pattern: VadPattern | None = None
    conversation_length_ms: float = 30_000.0
    seed: int = 0
    start_ms: float = 1000.0
    ring_ms: float = 3000.0
    voicemail: bool = False
    tamper_attach: bool = False
    jitter_ms: float = 0.0
    loss: float = 0.0

    def __post_init__(self) -> None:
        if self.start_ms < ATTACH_LEAD_MS:
            raise ValueError(f"start_ms must be at least {ATTACH_LEAD_MS}")
        if self.conversation_length_ms <= 0 or self.ring_ms <= 0:
            raise ValueError("call durations must be positive")
        if not 0 <= self.jitter_ms < AMR_FRAME_JITTER_LIMIT:
            raise ValueError(
                f"jitter_ms must lie in [0, {AMR_FRAME_JITTER_LIMIT})"
            )
        if not 0 <= self.loss < 1:
            raise ValueError(f"loss {self.loss} outside [0, 1)")
        if self.voicemail and (
            self.scenario is not Scenario.CALLEE_DECLINE
            or self.victim is not Role.CALLER
        ):
            raise ProfileMismatchError(
                "voicemail redirection is seen by the caller of a declined call"
            )
        if self.tamper_attach and self.profile.identity_kind != "GUTI":
            raise ProfileMismatchError(
                f"{self.profile.name} attaches with "
                f"{self.profile.identity_kind}, tampering needs a GUTI"
            )

    @property
    def victim(self) -> Role:
        """Side of the call the relayed victim is on."""
        if self.victim_role is not None:
            return self.victim_role
        return DEFAULT_VICTIM_ROLE[self.scenario]

    @property
    def has_conversation(self) -> bool:
        """True if voice flows on DRB3 for the victim."""
        return self.scenario.reaches_conversation or self.voicemail


class _TraceBuilder:
    """Collect records with their truth, then order and number them."""

    def __init__(self) -> None:
        self._items: list[tuple[float, TraceRecord, RecordTruth]] = []
        self._packets = count()

    def add(
        self, time_ms: float, record: TraceRecord, truth: RecordTruth
    ) -> None:
        self._items.append((time_ms, record, truth))

    def add_packet(
        self,
        ip_len: int,
        direction: Direction,
        time_ms: float,
        label: str,
        profile: CarrierProfile,
        *,
        drb: int = SIP_BEARER.drb,
        lcid: int = SIP_BEARER.lcid,
        call: int | None = None,
    ) -> float:
        """Fragment an IP packet onto PDCP records; return the last time."""
        records = split_to_pdcp(
            ip_len,
            direction,
            profile.mtu,
            time_ms=time_ms,
            lcid=lcid,
            drb=drb,
            fragment_spacing_ms=FRAGMENT_SPACING_MS,
        )
        packet = next(self._packets)
        limit = profile.mtu.for_direction(direction)
        for i, record in enumerate(records):
            last = i == len(records) - 1
            self.add(
                record.time_ms,
                record,
                RecordTruth(
                    index=-1,
                    label=label,
                    packet=packet,
                    fragment=i,
                    fragment_count=len(records),
                    terminator=last and record.pdu_len < limit,
                    call=call,
                ),
            )
        return records[-1].time_ms

    def build(self) -> tuple[list[TraceRecord], list[RecordTruth]]:
        """Return records in time order with PDCP sequence numbers set."""
        ordered = sorted(self._items, key=lambda item: item[0])
        seqs: dict[tuple[Direction, int], int] = {}
        records: list[TraceRecord] = []
        truth = []
        for index, (_, record, record_truth) in enumerate(ordered):
            if isinstance(record, PdcpRecord):
                key = (record.direction, record.drb)
                seq = seqs.get(key, 0)
                seqs[key] = seq + 1
                record = replace(record, seq=seq)
            records.append(record)
            truth.append(replace(record_truth, index=index))
        return records, truth


def _snap(time_ms: float, grid: float = VAD_GRID_MS) -> float:
    return float(math.ceil(time_ms / grid) * grid)


def make_subscriber(seed: int, index: int = 0) -> Subscriber:
    """Return the identities of subscriber `index` of a seeded population.

    Examples
    --------
    >>> make_subscriber(1, 0) == make_subscriber(1, 0)
    True
    >>> make_subscriber(1, 0).imsi != make_subscriber(1, 1).imsi
    True
    """
    rng = rng_for(seed, "subscriber", index)
    msin = int(rng.integers(10**10))
    m_tmsi = int(rng.integers(1, 2**32))
    if m_tmsi == TAMPERED_M_TMSI:
        m_tmsi += 1
    return Subscriber(
        imsi=f"00101{msin:010d}",
        guti=f"00101-8001-01-{m_tmsi:08x}",
        m_tmsi=m_tmsi,
        suci=f"suci-0-001-01-0000-1-1-{rng.bytes(8).hex()}",
        phone=f"+1555{100 + index:04d}",
    )


def attach_records(
    subscriber: Subscriber,
    rng: np.random.Generator,
    start_ms: float = 0.0,
    *,
    tampered: bool = False,
    identity_kind: IdentityKind = IdentityKind.GUTI,
) -> list[NasRecord]:
    """Return the NAS messages of one attach procedure.

    A tampered attach fails its integrity check at the core, which then asks
    for the IMSI before authenticating.
    """
    attach = NasRecord(
        start_ms,
        NasKind.ATTACH_REQUEST,
        identity_kind,
        subscriber.identity(identity_kind),
        subscriber.m_tmsi if identity_kind is IdentityKind.GUTI else None,
    )
    if tampered:
        attach = tamper_attach(attach)
    # the gaps are drawn before branching so timings line up across variants
    gaps = np.cumsum(rng.integers(NAS_GAP_MS[0], NAS_GAP_MS[1] + 1, size=4))
    times = [start_ms + float(gap) for gap in gaps]
    follow: list[NasRecord] = []
    if tampered:
        follow += [
            NasRecord(times[0], NasKind.IDENTITY_REQUEST),
            NasRecord(
                times[1],
                NasKind.IDENTITY_RESPONSE,
                IdentityKind.IMSI,
                subscriber.imsi,
            ),
        ]
    follow += [
        NasRecord(times[len(follow)], NasKind.AUTH_REQUEST),
        NasRecord(times[len(follow) + 1], NasKind.AUTH_RESPONSE),
    ]
    return [attach, *follow]


def gen_attach_trace(
    subscriber: Subscriber,
    tampered: bool = False,
    seed: int = 0,
    *,
    identity_kind: IdentityKind = IdentityKind.GUTI,
    start_ms: float = 0.0,
    profile: str = "",
) -> GeneratedTrace:
    """Generate the NAS trace of one attach, tampered or not.

    Untampered attaches give ``AttachRequest, AuthRequest, AuthResponse``;
    tampered ones insert ``IdentityRequest, IdentityResponse(IMSI)`` after the
    corrupted attach request.
    """
    builder = _TraceBuilder()
    for record in attach_records(
        subscriber,
        rng_for(seed, "nas"),
        start_ms,
        tampered=tampered,
        identity_kind=identity_kind,
    ):
        builder.add(
            record.time_ms, record, RecordTruth(-1, record.kind.value)
        )
    records, truth = builder.build()
    summary = GroundTruth(
        profile=profile,
        device=None,
        subscriber=subscriber,
        identity_kind=identity_kind,
        tampered=tampered,
    )
    return GeneratedTrace(records, truth, summary)


def _victim_observation(
    kind: ObservationKind, time_ms: int, pucch: int, rng: np.random.Generator
) -> PucchObservation:
    return PucchObservation(
        kind=kind,
        tti=Tti.from_index(time_ms),
        pucch_index=pucch,
        ta_us=float(min(abs(rng.normal(0.0, 0.3)), 1.5)),
        snr_db=float(rng.uniform(18.0, 30.0)),
    )


def draw_phy_config(
    profile: CarrierProfile, rng: np.random.Generator
) -> tuple[SrConfig, CqiConfig, int]:
    """Draw SR and channel report configurations from `profile`.

    Returns the configurations and the logical channel the SR serves.
    """
    lcid = int(weighted_choice(rng, sorted(profile.sr_periodicity_by_lcid)))
    period = profile.sr_periodicity_by_lcid[lcid]
    offset = int(rng.integers(period))
    sr = SrConfig(
        periodicity_ms=period,
        subframe_offset=offset,
        sr_config_index=sr_config_lookup(period, offset),
        sr_pucch_resource_index=profile.sr_pucch_resource_index.sample(rng),
        dsr_trans_max=profile.dsr_trans_max,
    )
    cqi_period = profile.cqi_periodicity_ms.sample(rng)
    cqi_offset = int(rng.integers(cqi_period))
    cqi_pucch = profile.cqi_pucch_resource_index.sample(rng)
    ri_index = ri_period = ri_offset = None
    if profile.mimo:
        ri_index = profile.ri_config_index.sample(rng)
        ri_period, ri_offset = ri_timing(cqi_period, cqi_offset, ri_index)
    cqi = CqiConfig(
        cqi_pucch_resource_index=cqi_pucch,
        cqi_pmi_config_index=cqi_pmi_config_lookup(cqi_period, cqi_offset),
        periodicity_ms=cqi_period,
        subframe_offset=cqi_offset,
        ri_config_index=ri_index,
        ri_periodicity_ms=ri_period,
        ri_offset=ri_offset,
    )
    return sr, cqi, lcid


def _first_at(start_ms: int, period: int, offset: int) -> int:
    return start_ms + (offset - start_ms) % period


def phy_observations(
    profile: CarrierProfile,
    sr: SrConfig,
    cqi: CqiConfig,
    rng: np.random.Generator,
    start_ms: int,
    loss: float = 0.0,
) -> list[tuple[int, PucchObservation, Origin]]:
    """Return the PUCCH reports seen while the victim connects.

    The victim re-sends its scheduling request every period until the relay
    has seen two (the first is dropped, the second granted) or `dsr-TransMax`
    is exhausted; it sends three CQI reports, and three RI reports when MIMO
    is used.  Each scheduling request is lost with probability `loss` and
    re-sent on the next opportunity; a missed channel report would drop the
    connection, so those always arrive.  Reports of other UEs in the cell
    are scattered over the same span.

    Returns
    -------
    list of (int, PucchObservation, Origin)
        Absolute time in ms, observation and true sender, in time order.
    """
    occupied: set[tuple[ObservationKind, Tti, int]] = set()
    found: list[tuple[int, PucchObservation, Origin]] = []

    def emit(kind: ObservationKind, time_ms: int, pucch: int) -> bool:
        observation = _victim_observation(kind, time_ms, pucch, rng)
        if kind is ObservationKind.SR and rng.random() < loss:
            logger.debug("%s at %d ms lost", kind.value, time_ms)
            return False
        occupied.add((kind, observation.tti, pucch))
        found.append((time_ms, observation, Origin.VICTIM))
        return True

    first = _first_at(start_ms, sr.periodicity_ms, sr.subframe_offset)
    decoded = 0
    for attempt in range(sr.dsr_trans_max):
        if decoded == 2:
            break
        time_ms = first + attempt * sr.periodicity_ms
        decoded += emit(
            ObservationKind.SR, time_ms, sr.sr_pucch_resource_index
        )
    reports = [
        (ObservationKind.CQI, cqi.periodicity_ms, cqi.subframe_offset)
    ]
    if cqi.ri_periodicity_ms is not None and cqi.ri_offset is not None:
        reports.append(
            (ObservationKind.RI, cqi.ri_periodicity_ms, cqi.ri_offset)
        )
    for kind, period, offset in reports:
        first = _first_at(start_ms, period, offset)
        for k in range(3):
            emit(kind, first + k * period, cqi.cqi_pucch_resource_index)
    kinds = [ObservationKind.SR, ObservationKind.CQI]
    if profile.mimo:
        kinds.append(ObservationKind.RI)
    n_other = int(rng.poisson(profile.interference_per_s * PHY_SPAN_MS / 1000))
    for _ in range(n_other):
        time_ms = start_ms + int(rng.integers(PHY_SPAN_MS))
        kind = weighted_choice(rng, kinds)
        observation = PucchObservation(
            kind=kind,
            tti=Tti.from_index(time_ms),
            pucch_index=int(rng.integers(profile.pucch_resource_count)),
            ta_us=float(rng.uniform(-INTERFERENCE_TA_US, INTERFERENCE_TA_US)),
            snr_db=float(rng.uniform(-10.0, 0.0)),
        )
        key = (kind, observation.tti, observation.pucch_index)
        if key in occupied:
            continue
        occupied.add(key)
        found.append((time_ms, observation, Origin.OTHER))
    found.sort(key=lambda item: item[0])
    return found


def gen_phy_param_corpus(
    n: int, profile: CarrierProfile, seed: int = 0, loss: float = 0.0
) -> list[PhyCorpusItem]:
    """Generate `n` independent connections with their true configurations.

    Fixed profile parameters stay constant; variable ones are drawn from the
    profile distributions.  Connections start at random points of the system
    frame cycle so TTI wrap-around is exercised.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if not 0 <= loss < 1:
        raise ValueError(f"loss {loss} outside [0, 1)")
    corpus = []
    for i in range(n):
        rng = rng_for(seed, "corpus", i)
        sr, cqi, lcid = draw_phy_config(profile, rng)
        start = int(rng.integers(10240))
        found = phy_observations(profile, sr, cqi, rng, start, loss)
        corpus.append(
            PhyCorpusItem(
                observations=tuple(obs for _, obs, _ in found),
                sr=sr,
                cqi=cqi,
                lcid=lcid,
                mimo=profile.mimo,
            )
        )
    logger.info("Generated %d PHY streams for %s", n, profile.name)
    return corpus


def random_vad(
    rng: np.random.Generator, length_ms: float, first_ms: float = 0.0
) -> tuple[VadInterval, ...]:
    """Draw alternating talk spurts and pauses covering ``(0, length_ms]``.

    The pattern opens with a talk spurt of at least `first_ms`.
    """
    intervals = []
    start = 0.0
    speaking = True
    while start < length_ms:
        low, high = TALK_SPURT_MS if speaking else PAUSE_MS
        duration = max(
            VAD_GRID_MS,
            round(float(rng.uniform(low, high)) / VAD_GRID_MS) * VAD_GRID_MS,
        )
        if not intervals:
            duration = max(duration, _snap(first_ms))
        end = min(length_ms, start + duration)
        intervals.append(VadInterval(start, end, speaking))
        start = end
        speaking = not speaking
    return tuple(intervals)


def _check_vad(
    intervals: Sequence[VadInterval], length_ms: float, first_ms: float
) -> None:
    if not intervals:
        raise ValueError("empty VAD pattern")
    head = intervals[0]
    if head.start_ms != 0 or not head.speaking:
        raise ValueError("VAD pattern must open with speech at 0 ms")
    if head.end_ms < first_ms:
        raise ValueError(
            f"first talk spurt shorter than the {first_ms} ms ROHC set-up"
        )
    for before, after in zip(intervals, intervals[1:]):
        if after.start_ms < before.end_ms:
            raise ValueError("VAD intervals overlap or are unordered")
    if intervals[-1].end_ms > length_ms:
        raise ValueError("VAD pattern outlasts the conversation")


def _sample_size(entry: FingerprintEntry, rng: np.random.Generator) -> int:
    sizes = weighted_choice(rng, entry.ranges).sizes
    return int(rng.integers(sizes.start, sizes.stop))


def _sip_messages(
    spec: ScenarioSpec, db: FingerprintDb, rng: np.random.Generator
) -> tuple[list[tuple[float, Direction, str, int]], float | None]:
    """Return ``(first fragment time, direction, operation, size)`` tuples.

    Also returns the start of the conversation, if any.
    """
    victim = spec.victim
    messages: list[tuple[float, Direction, str, int]] = []
    conversation: float | None = None
    time_ms = spec.start_ms
    for step in SCRIPTS[spec.scenario]:
        if step.voicemail and not spec.voicemail:
            continue
        direction = sender_direction(step.sender, victim)
        available = [
            (operation, entry)
            for operation in step.operations
            if (entry := db.entry(operation, direction)) is not None
        ]
        if not available:
            if step.required:
                raise ProfileMismatchError(
                    f"{db.device} on {db.carrier} has no {direction.value} "
                    f"{' or '.join(step.operations)}"
                )
            logger.debug(
                "%s: no %s %s, skipped",
                db.device,
                direction.value,
                step.operations[0],
            )
            continue
        operation, entry = weighted_choice(rng, available)
        if messages:
            previous = messages[-1][2]
            if previous == RING:
                time_ms += spec.ring_ms
            elif (
                conversation is not None
                and operation not in (OK_INVITE, ACK_OK)
                and time_ms < conversation + spec.conversation_length_ms
            ):
                # the call is torn down once the conversation is over
                time_ms = conversation + spec.conversation_length_ms
            else:
                time_ms += int(rng.integers(SIP_GAP_MS[0], SIP_GAP_MS[1] + 1))
        if operation in (OK_INVITE, ACK_OK):
            time_ms = _snap(time_ms)
            conversation = time_ms
        size = _sample_size(entry, rng)
        messages.append((time_ms, direction, operation, size))
    if not spec.has_conversation:
        conversation = None
    return messages, conversation


def _voice_frames(
    spec: ScenarioSpec,
    pattern: Sequence[VadInterval],
    conversation: float,
    rng: np.random.Generator,
) -> list[tuple[float, int, FrameClass]]:
    profile = spec.profile
    frames: list[tuple[float, int, FrameClass]] = []
    for interval in pattern:
        start = conversation + interval.start_ms
        end = conversation + interval.end_ms
        cadence = 20 if interval.speaking else 160
        frame = (
            profile.audio_frame_bytes
            if interval.speaking
            else profile.cn_frame_bytes
        )
        k = 1
        while start + k * cadence <= end:
            if len(frames) < profile.rohc_init_frames:
                size = RTP_HEADERS_BYTES + AMR_HEADER_BYTES + frame
                kind = FrameClass.ROHC_INIT
            else:
                size = ROHC_HEADER_BYTES + AMR_HEADER_BYTES + frame
                kind = (
                    FrameClass.AUDIO
                    if interval.speaking
                    else FrameClass.COMFORT_NOISE
                )
            time_ms = start + k * cadence
            if spec.jitter_ms:
                time_ms += float(rng.uniform(-spec.jitter_ms, spec.jitter_ms))
            frames.append((round(time_ms, 1), size, kind))
            k += 1
    return frames


def gen_call_trace(spec: ScenarioSpec) -> GeneratedTrace:
    """Generate the relay trace of one call.

    The trace opens with the victim's attach, the PUCCH reports of its
    connection set-up and the TCP handshake of its SIP connection, then
    carries the scenario's SIP messages on DRB2, TCP acknowledgements, and
    voice and RTCP packets while the conversation lasts.

    Raises
    ------
    ProfileMismatchError
        If the device is unknown on the carrier or lacks a message the
        scenario requires.
    """
    profile = spec.profile
    db = profile.fingerprint_db(spec.device)
    ctx = profile.transport_context()
    builder = _TraceBuilder()
    identity_kind = IdentityKind(profile.identity_kind)

    nas_start = spec.start_ms - ATTACH_LEAD_MS
    for record in attach_records(
        spec.subscriber,
        rng_for(spec.seed, "nas"),
        nas_start,
        tampered=spec.tamper_attach,
        identity_kind=identity_kind,
    ):
        builder.add(
            record.time_ms, record, RecordTruth(-1, record.kind.value)
        )

    phy_rng = rng_for(spec.seed, "phy")
    sr, cqi, lcid = draw_phy_config(profile, phy_rng)
    for time_ms, observation, origin in phy_observations(
        profile,
        sr,
        cqi,
        phy_rng,
        int(spec.start_ms - PHY_LEAD_MS),
        spec.loss,
    ):
        builder.add(
            float(time_ms),
            observation,
            RecordTruth(-1, observation.kind.value, origin=origin),
        )

    tcp_rng = rng_for(spec.seed, "tcp")
    tcp = profile.protocol is Protocol.TCP
    if tcp:
        time_ms = spec.start_ms - HANDSHAKE_LEAD_MS
        builder.add_packet(
            ctx.overhead("SYNC"), Direction.UPLINK, time_ms, "SYNC", profile
        )
        time_ms += int(tcp_rng.integers(20, 61))
        builder.add_packet(
            ctx.overhead("SYNC_ACK"),
            Direction.DOWNLINK,
            time_ms,
            "SYNC_ACK",
            profile,
        )
        time_ms += round(float(tcp_rng.uniform(*TCP_ACK_DELAY_MS)), 1)
        builder.add_packet(
            ctx.overhead("ACK"), Direction.UPLINK, time_ms, "ACK", profile
        )

    sip_rng = rng_for(spec.seed, "sip")
    messages, conversation = _sip_messages(spec, db, sip_rng)
    sent = []
    for time_ms, direction, operation, size in messages:
        last = builder.add_packet(
            size + ctx.overhead("data"),
            direction,
            time_ms,
            operation,
            profile,
            call=0,
        )
        sent.append(SipTruth(last, direction, operation, size))
        if tcp and profile.tcp_acks:
            delay = round(float(tcp_rng.uniform(*TCP_ACK_DELAY_MS)), 1)
            builder.add_packet(
                ctx.overhead("ACK"),
                direction.reverse(),
                last + delay,
                "ACK",
                profile,
                call=0,
            )

    vad: dict[Direction, tuple[VadInterval, ...]] = {}
    lifetime = None
    span = None
    if conversation is not None:
        # the voice bearer is released when the Bye is sent
        length = spec.conversation_length_ms
        span = (conversation, conversation + length)
        first_ms = profile.rohc_init_frames * 20
        vad_rng = rng_for(spec.seed, "vad")
        drb3_times = []
        for direction in Direction:
            if spec.vad_pattern is not None:
                pattern = tuple(spec.vad_pattern.get(direction, ()))
                _check_vad(pattern, length, first_ms)
            else:
                pattern = random_vad(vad_rng, length, first_ms)
            vad[direction] = tuple(
                VadInterval(
                    conversation + interval.start_ms,
                    conversation + interval.end_ms,
                    interval.speaking,
                )
                for interval in pattern
            )
            rtp_rng = rng_for(spec.seed, "rtp", direction.value)
            for time_ms, size, kind in _voice_frames(
                spec, pattern, conversation, rtp_rng
            ):
                builder.add(
                    time_ms,
                    PdcpRecord(
                        direction,
                        time_ms,
                        0,
                        RTP_BEARER.lcid,
                        VOICE_DRB,
                        size + profile.pdcp_overhead_bytes,
                    ),
                    RecordTruth(-1, kind.value, call=0),
                )
                drb3_times.append(time_ms)
            _add_rtcp(builder, profile, direction, span, rtp_rng, drb3_times)
        if drb3_times:
            lifetime = (min(drb3_times), max(drb3_times))

    records, truth = builder.build()
    summary = GroundTruth(
        profile=profile.name,
        device=spec.device,
        subscriber=spec.subscriber,
        identity_kind=identity_kind,
        tampered=spec.tamper_attach,
        sr=sr,
        sr_lcid=lcid,
        cqi=cqi,
        calls=(
            CallTruth(
                spec.scenario, spec.victim, spec.voicemail, tuple(sent), span
            ),
        ),
        vad=vad,
        drb3_lifetime=lifetime,
    )
    logger.info(
        "Scenario %d on %s/%s: %d records, %d SIP messages",
        spec.scenario,
        profile.name,
        spec.device,
        len(records),
        len(sent),
    )
    return GeneratedTrace(records, truth, summary)


def _add_rtcp(
    builder: _TraceBuilder,
    profile: CarrierProfile,
    direction: Direction,
    span: tuple[float, float],
    rng: np.random.Generator,
    drb3_times: list[float],
) -> None:
    """Add one RTCP report per interval on the profile's RTCP bearer."""
    start, end = span
    sizes = sorted(profile.rtcp_sizes)
    phase = float(rng.uniform(1000.0, profile.rtcp_interval_ms))
    time_ms = start + round(phase, 1)
    on_voice = profile.rtcp_bearer == VOICE_DRB
    while time_ms < end - 50.0:
        size = int(weighted_choice(rng, sizes))
        if on_voice:
            builder.add(
                time_ms,
                PdcpRecord(
                    direction,
                    time_ms,
                    0,
                    RTP_BEARER.lcid,
                    VOICE_DRB,
                    size + profile.pdcp_overhead_bytes,
                ),
                RecordTruth(-1, "RTCP", call=0),
            )
            drb3_times.append(time_ms)
        else:
            builder.add_packet(
                size, direction, time_ms, "RTCP", profile, call=0
            )
        time_ms += profile.rtcp_interval_ms


@dataclass(frozen=True)
class Population:
    """Victim traces of a population and the attacker's call log."""

    traces: tuple[GeneratedTrace, ...]
    attacker_log: AttackerCallLog


def gen_population(
    n: int,
    profile: CarrierProfile,
    device: str,
    seed: int = 0,
    *,
    tamper: bool = False,
) -> Population:
    """Generate `n` victims each called once by the attacker.

    The attacker dials every victim in turn and hangs up while it rings, so
    each victim trace holds one incoming, cancelled call arriving between
    300 and 1500 ms after the dial.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    traces = []
    dials = []
    for i in range(n):
        rng = rng_for(seed, "population", i)
        subscriber = make_subscriber(seed, i)
        dial = POPULATION_DIAL_START_MS + i * POPULATION_DIAL_SPACING_MS
        low, high = INVITE_LATENCY_MS
        latency = int(rng.integers(low, high + 1))
        spec = ScenarioSpec(
            scenario=Scenario.CALLER_CANCEL,
            profile=profile,
            device=device,
            subscriber=subscriber,
            victim_role=Role.CALLEE,
            seed=int(rng.integers(2**31)),
            start_ms=dial + latency,
            tamper_attach=tamper,
        )
        traces.append(gen_call_trace(spec))
        dials.append(AttackerCall(subscriber.phone, dial, "cancelled"))
    logger.info("Generated population of %d on %s", n, profile.name)
    return Population(tuple(traces), AttackerCallLog(tuple(dials)))
