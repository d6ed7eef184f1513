"""PDCP record streams: fragmenting IP packets and reassembling their sizes.

The relay sees encrypted PDCP PDUs only.  IP packets larger than the MTU of
their direction are carried as a run of full-MTU PDUs followed by one shorter
PDU, so packet sizes can be rebuilt from PDU sizes alone.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from enum import Enum
from types import MappingProxyType

from typing_extensions import Literal

logger = logging.getLogger(__name__)

IPV6_HEADER_BYTES = 40
IPV4_HEADER_BYTES = 20
UDP_HEADER_BYTES = 8
# TCP header length by packet role; SYN and SYN/ACK carry options
TCP_HEADER_BYTES = MappingProxyType(
    {"SYNC": 40, "SYNC_ACK": 32, "ACK": 20, "data": 20}
)
MIN_MTU = 576
DEFAULT_FRAGMENT_GAP_MS = 5.0

PacketRole = Literal["data", "SYNC", "SYNC_ACK", "ACK"]
CONTROL_ROLES: tuple[PacketRole, ...] = ("SYNC", "SYNC_ACK", "ACK")


class PdcpError(ValueError):
    """Raised for PDCP streams or packets that violate size constraints."""


class Direction(str, Enum):
    """Link direction of a record, seen from the victim UE."""

    UPLINK = "uplink"
    DOWNLINK = "downlink"

    @property
    def short(self) -> str:
        """Two letter tag used in text logs."""
        return "UL" if self is Direction.UPLINK else "DL"

    def reverse(self) -> Direction:
        """Return the opposite direction."""
        if self is Direction.UPLINK:
            return Direction.DOWNLINK
        return Direction.UPLINK


class Protocol(str, Enum):
    """Transport protocol carrying SIP."""

    TCP = "TCP"
    UDP = "UDP"


class IpsecMode(str, Enum):
    """IPsec protection of SIP traffic.

    ``plaintext`` is ESP with null encryption: headers are present but the
    payload is not padded to a cipher block.
    """

    NONE = "none"
    PLAINTEXT = "plaintext"
    ENCRYPTED = "encrypted"


@dataclass(frozen=True)
class MtuConfig:
    """Per direction maximum transmission units in bytes."""

    uplink_mtu: int
    downlink_mtu: int

    def __post_init__(self) -> None:
        for name in ("uplink_mtu", "downlink_mtu"):
            if getattr(self, name) < MIN_MTU:
                raise ValueError(f"{name} below {MIN_MTU}")

    def for_direction(self, direction: Direction) -> int:
        """Return the MTU of `direction`."""
        if direction is Direction.UPLINK:
            return self.uplink_mtu
        return self.downlink_mtu


@dataclass(frozen=True)
class PdcpRecord:
    """One encrypted PDCP PDU as seen by the relay."""

    direction: Direction
    time_ms: float
    seq: int
    lcid: int
    drb: int
    pdu_len: int

    def __post_init__(self) -> None:
        if self.pdu_len < 1:
            raise ValueError(f"pdu_len must be positive, got {self.pdu_len}")


@dataclass(frozen=True)
class IpPacketMeta:
    """Size metadata of one reassembled IP packet.

    `records` holds the positions of the constituent PDUs in the sequence
    passed to :func:`reassemble`.
    """

    direction: Direction
    time_ms: float
    total_len: int
    fragment_count: int
    bearer: int
    records: tuple[int, ...] = ()
    unterminated: bool = False
    control: PacketRole | None = None


@dataclass(frozen=True)
class TransportContext:
    """Header overheads of the transport carrying SIP.

    `header_overhead_bytes` maps ``(protocol, ipsec_mode, role)`` to the bytes
    added on top of the SIP payload (or of nothing, for TCP control packets).
    """

    protocol: Protocol
    ipsec_mode: IpsecMode
    header_overhead_bytes: Mapping[tuple[Protocol, IpsecMode, str], int]

    def __post_init__(self) -> None:
        if not self.header_overhead_bytes:
            raise ValueError("empty overhead table")
        if any(value <= 0 for value in self.header_overhead_bytes.values()):
            raise ValueError("header overheads must be positive")
        tcp = self.header_overhead_bytes.get(
            (Protocol.TCP, self.ipsec_mode, "data")
        )
        udp = self.header_overhead_bytes.get(
            (Protocol.UDP, self.ipsec_mode, "data")
        )
        if tcp is not None and udp is not None and tcp < udp:
            raise ValueError("TCP overhead smaller than UDP overhead")

    @classmethod
    def build(
        cls,
        protocol: Protocol,
        ipsec_mode: IpsecMode = IpsecMode.NONE,
        *,
        ip_header_bytes: int = IPV6_HEADER_BYTES,
        ipsec_overhead_bytes: int = 0,
    ) -> TransportContext:
        """Return a context with the standard TCP and UDP header sizes.

        Examples
        --------
        >>> ctx = TransportContext.build(Protocol.TCP)
        >>> ctx.overhead("SYNC"), ctx.overhead("data")
        (80, 60)
        """
        if ipsec_mode is IpsecMode.NONE and ipsec_overhead_bytes:
            raise ValueError("IPsec overhead given without IPsec")
        base = ip_header_bytes + ipsec_overhead_bytes
        table: dict[tuple[Protocol, IpsecMode, str], int] = {
            (Protocol.TCP, ipsec_mode, role): base + header
            for role, header in TCP_HEADER_BYTES.items()
        }
        table[(Protocol.UDP, ipsec_mode, "data")] = base + UDP_HEADER_BYTES
        return cls(protocol, ipsec_mode, MappingProxyType(table))

    def overhead(self, role: PacketRole = "data") -> int:
        """Return the overhead in bytes of a packet playing `role`."""
        try:
            return self.header_overhead_bytes[
                (self.protocol, self.ipsec_mode, role)
            ]
        except KeyError:
            raise PdcpError(
                f"no overhead for {role} over {self.protocol.value}"
            ) from None


def split_to_pdcp(
    ip_len: int,
    direction: Direction,
    mtu: MtuConfig,
    start_seq: int = 0,
    time_ms: float = 0.0,
    *,
    lcid: int = 4,
    drb: int = 2,
    fragment_spacing_ms: float = 0.0,
) -> list[PdcpRecord]:
    """Split an IP packet of `ip_len` bytes into PDCP records.

    Every record but the last is exactly one MTU long.

    Parameters
    ----------
    ip_len : int
        IP packet size in bytes.
    direction : Direction
        Link direction, selecting the MTU.
    mtu : MtuConfig
        MTUs of the connection.
    start_seq : int, optional
        Sequence number of the first record.
    time_ms : float, optional
        Arrival time of the first record.
    lcid, drb : int, optional
        Logical channel and bearer of the records.
    fragment_spacing_ms : float, optional
        Arrival time step between consecutive records.

    Returns
    -------
    list of PdcpRecord

    Examples
    --------
    >>> mtu = MtuConfig(1212, 1212)
    >>> [r.pdu_len for r in split_to_pdcp(2574, Direction.UPLINK, mtu)]
    [1212, 1212, 150]
    """
    if ip_len < 1:
        raise ValueError(f"ip_len must be positive, got {ip_len}")
    limit = mtu.for_direction(direction)
    count = -(-ip_len // limit)
    sizes = [limit] * (count - 1) + [ip_len - (count - 1) * limit]
    return [
        PdcpRecord(
            direction=direction,
            time_ms=time_ms + i * fragment_spacing_ms,
            seq=start_seq + i,
            lcid=lcid,
            drb=drb,
            pdu_len=size,
        )
        for i, size in enumerate(sizes)
    ]


def _close(
    records: Sequence[PdcpRecord],
    run: list[int],
    unterminated: bool,
) -> IpPacketMeta:
    last = records[run[-1]]
    packet = IpPacketMeta(
        direction=last.direction,
        time_ms=last.time_ms,
        total_len=sum(records[i].pdu_len for i in run),
        fragment_count=len(run),
        bearer=last.drb,
        records=tuple(run),
        unterminated=unterminated,
    )
    if unterminated:
        logger.debug(
            "%s DRB%d packet of %d bytes at %.1f ms has no terminator",
            packet.direction.short,
            packet.bearer,
            packet.total_len,
            packet.time_ms,
        )
    return packet


def reassemble(
    records: Sequence[PdcpRecord],
    mtu: MtuConfig,
    fragment_gap_ms: float = DEFAULT_FRAGMENT_GAP_MS,
) -> list[IpPacketMeta]:
    """Rebuild IP packet sizes from a PDCP record stream.

    Records are partitioned by ``(direction, drb)``.  Within a partition a run
    of full-MTU records closes with the next shorter record.  A full-MTU run
    still open at the end of the partition, or followed by a record arriving
    more than `fragment_gap_ms` later, closes as an ``unterminated`` packet.

    Parameters
    ----------
    records : sequence of PdcpRecord
        Records in arrival order; partitions must be in sequence order.
    mtu : MtuConfig
        MTUs of the connection.
    fragment_gap_ms : float, optional
        Largest arrival gap between fragments of one packet.

    Returns
    -------
    list of IpPacketMeta
        Packets ordered by the arrival of their last fragment.

    Raises
    ------
    PdcpError
        On a record longer than its MTU ("oversized PDU") or sequence numbers
        that do not increase within a partition.
    """
    partitions: dict[tuple[Direction, int], list[int]] = {}
    for i, record in enumerate(records):
        partitions.setdefault((record.direction, record.drb), []).append(i)
    packets: list[IpPacketMeta] = []
    for (direction, drb), members in partitions.items():
        limit = mtu.for_direction(direction)
        run: list[int] = []
        previous: PdcpRecord | None = None
        for i in members:
            record = records[i]
            if record.pdu_len > limit:
                raise PdcpError(
                    f"oversized PDU: {record.pdu_len} bytes on "
                    f"{direction.value} DRB{drb} exceeds MTU {limit}"
                )
            if previous is not None and record.seq <= previous.seq:
                raise PdcpError(
                    f"sequence {record.seq} after {previous.seq} on "
                    f"{direction.value} DRB{drb}"
                )
            if (
                run
                and previous is not None
                and record.time_ms - previous.time_ms > fragment_gap_ms
            ):
                packets.append(_close(records, run, unterminated=True))
                run = []
            run.append(i)
            if record.pdu_len < limit:
                packets.append(_close(records, run, unterminated=False))
                run = []
            previous = record
        if run:
            packets.append(_close(records, run, unterminated=True))
    packets.sort(key=lambda packet: (packet.time_ms, packet.records[-1]))
    logger.info(
        "Reassembled %d packets from %d records (%d unterminated)",
        len(packets),
        len(records),
        sum(packet.unterminated for packet in packets),
    )
    return packets


def detect_control_info(
    packets: Iterable[IpPacketMeta], ctx: TransportContext
) -> list[IpPacketMeta]:
    """Tag TCP connection control packets by their size.

    A packet carrying no payload is exactly as long as its headers, so the
    SYN, SYN/ACK and bare ACK sizes are known from the transport context.
    Packets are returned untouched for UDP transports.

    Examples
    --------
    >>> ctx = TransportContext.build(Protocol.TCP)
    >>> syn = IpPacketMeta(Direction.UPLINK, 0.0, 80, 1, 2)
    >>> detect_control_info([syn], ctx)[0].control
    'SYNC'
    """
    packets = list(packets)
    if ctx.protocol is not Protocol.TCP:
        return packets
    by_size = {ctx.overhead(role): role for role in CONTROL_ROLES}
    tagged = []
    for packet in packets:
        role = None if packet.unterminated else by_size.get(packet.total_len)
        if role is not None:
            packet = replace(packet, control=role)
        tagged.append(packet)
    return tagged


def sip_payload_size(packet: IpPacketMeta, ctx: TransportContext) -> int:
    """Return the SIP payload bytes of `packet` after removing headers.

    Raises
    ------
    PdcpError
        If nothing is left ("underflow: not a SIP-bearing packet") or the
        packet is a tagged control packet.

    Examples
    --------
    >>> ctx = TransportContext.build(Protocol.UDP)
    >>> sip_payload_size(IpPacketMeta(Direction.UPLINK, 0.0, 65, 1, 2), ctx)
    17
    """
    if packet.control is not None:
        raise PdcpError(f"{packet.control} control packet carries no SIP")
    size = packet.total_len - ctx.overhead("data")
    if size <= 0:
        raise PdcpError(
            f"underflow: not a SIP-bearing packet ({packet.total_len} bytes)"
        )
    return size
