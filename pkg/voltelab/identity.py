"""Link network identities to phone numbers.

Two routes are modelled.  The passive one calls the victim and matches the
dial time with the incoming calls recovered from relayed traffic.  The active
one corrupts the M-TMSI of an attach request; the core then cannot find the
subscriber context and asks for the IMSI in plaintext.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from enum import Enum

from .sip import CallDirection, CallRecord

logger = logging.getLogger(__name__)

TAMPERED_M_TMSI = 0x12345678
DEFAULT_WINDOW_MS = 5000.0


class IdentityError(ValueError):
    """Raised for NAS records and sequences the identity stage cannot use."""


class NoExtractionOpportunity(IdentityError):
    """Raised when a NAS stream holds no tampered attach to exploit."""


class NasKind(str, Enum):
    """NAS messages of the attach procedure."""

    ATTACH_REQUEST = "AttachRequest"
    IDENTITY_REQUEST = "IdentityRequest"
    IDENTITY_RESPONSE = "IdentityResponse"
    AUTH_REQUEST = "AuthRequest"
    AUTH_RESPONSE = "AuthResponse"


class IdentityKind(str, Enum):
    """Subscriber identity carried by a NAS message."""

    GUTI = "GUTI"
    IMSI = "IMSI"
    SUCI = "SUCI"
    NONE = "none"


@dataclass(frozen=True)
class NasRecord:
    """One NAS message of the victim.

    `integrity_valid` stands for the message authentication code check the
    core would run.
    """

    time_ms: float
    kind: NasKind
    identity_kind: IdentityKind = IdentityKind.NONE
    identity_value: str = ""
    m_tmsi: int | None = None
    integrity_valid: bool = True

    def __post_init__(self) -> None:
        if self.m_tmsi is not None and not 0 <= self.m_tmsi <= 0xFFFFFFFF:
            raise IdentityError(f"M-TMSI {self.m_tmsi:#x} is not 32 bits")
        if (
            self.kind is NasKind.ATTACH_REQUEST
            and self.identity_kind is IdentityKind.GUTI
            and self.m_tmsi is None
        ):
            raise IdentityError("GUTI attach request without M-TMSI")


@dataclass(frozen=True)
class Subscriber:
    """Identities of one subscriber."""

    imsi: str
    guti: str
    m_tmsi: int
    suci: str
    phone: str

    def identity(self, kind: IdentityKind) -> str:
        """Return the identity value of `kind`."""
        if kind is IdentityKind.GUTI:
            return self.guti
        if kind is IdentityKind.IMSI:
            return self.imsi
        if kind is IdentityKind.SUCI:
            return self.suci
        raise IdentityError(f"subscriber has no {kind.value} identity")


@dataclass(frozen=True)
class AttackerCall:
    """One call placed by the attacker."""

    phone_number: str
    dial_time_ms: float
    outcome: str = ""


@dataclass(frozen=True)
class AttackerCallLog:
    """The attacker's own record of the calls it placed."""

    entries: tuple[AttackerCall, ...] = ()

    def __post_init__(self) -> None:
        for before, after in zip(self.entries, self.entries[1:]):
            if after.dial_time_ms <= before.dial_time_ms:
                raise IdentityError(
                    f"dial times not increasing at {after.dial_time_ms} ms"
                )


class Method(str, Enum):
    """How a binding was made."""

    PASSIVE = "Passive"
    ACTIVE = "Active"


class Confidence(str, Enum):
    """Whether a binding was the only candidate of its call."""

    UNIQUE = "Unique"
    AMBIGUOUS = "Ambiguous"


@dataclass(frozen=True)
class IdentityBinding:
    """A network identity linked to a phone number."""

    identity_value: str
    phone_number: str
    established_at_ms: float
    method: Method
    confidence: Confidence
    stale: bool = False


@dataclass(frozen=True)
class ImsiExtraction:
    """An IMSI with the three messages that revealed it."""

    imsi: str
    attach: NasRecord
    request: NasRecord
    response: NasRecord


def passive_map(
    attacker_log: AttackerCallLog,
    calls: Iterable[CallRecord],
    window_ms: float = DEFAULT_WINDOW_MS,
) -> list[IdentityBinding]:
    """Bind identities to the numbers the attacker dialled.

    For each dial, the incoming calls recovered within
    ``(dial_time, dial_time + window_ms]`` are candidates.  The victim does
    not need to answer: the Invite alone reaches the relay.

    Parameters
    ----------
    attacker_log : AttackerCallLog
        Calls placed by the attacker.
    calls : iterable of CallRecord
        Calls recovered from relayed traffic, carrying identities.
    window_ms : float, optional
        Largest delay between dialling and the Invite reaching the victim.

    Returns
    -------
    list of IdentityBinding
        One Unique binding per dial with a single candidate, one Ambiguous
        binding per candidate otherwise.

    Examples
    --------
    >>> log = AttackerCallLog((AttackerCall("+15550100", 1000.0),))
    >>> call = CallRecord("G1", 1450.0, CallDirection.INCOMING, None, None)
    >>> [(b.identity_value, b.confidence.value)
    ...  for b in passive_map(log, [call])]
    [('G1', 'Unique')]
    """
    if window_ms <= 0:
        raise ValueError(f"window_ms must be positive, got {window_ms}")
    incoming = [
        call
        for call in calls
        if call.call_direction is CallDirection.INCOMING
    ]
    bindings = []
    for dial in attacker_log.entries:
        candidates = [
            call
            for call in incoming
            if dial.dial_time_ms
            < call.timestamp_ms
            <= dial.dial_time_ms + window_ms
        ]
        if not candidates:
            logger.debug("No incoming call for %s", dial.phone_number)
            continue
        confidence = (
            Confidence.UNIQUE if len(candidates) == 1 else Confidence.AMBIGUOUS
        )
        bindings.extend(
            IdentityBinding(
                call.identity,
                dial.phone_number,
                call.timestamp_ms,
                Method.PASSIVE,
                confidence,
            )
            for call in candidates
        )
    logger.info(
        "%d bindings (%d unique) from %d dials",
        len(bindings),
        sum(b.confidence is Confidence.UNIQUE for b in bindings),
        len(attacker_log.entries),
    )
    return bindings


def tamper_attach(request: NasRecord) -> NasRecord:
    """Return `request` with its M-TMSI corrupted.

    Only the M-TMSI and the integrity flag change.

    Raises
    ------
    IdentityError
        If `request` is not an attach request carrying a GUTI.

    Examples
    --------
    >>> attach = NasRecord(0.0, NasKind.ATTACH_REQUEST, IdentityKind.GUTI,
    ...                    "G1", 0xC0FFEE12)
    >>> tampered = tamper_attach(attach)
    >>> hex(tampered.m_tmsi), tampered.integrity_valid
    ('0x12345678', False)
    """
    if (
        request.kind is not NasKind.ATTACH_REQUEST
        or request.identity_kind is not IdentityKind.GUTI
    ):
        raise IdentityError("not a GUTI attach")
    return replace(request, m_tmsi=TAMPERED_M_TMSI, integrity_valid=False)


def extract_imsi(stream: Iterable[NasRecord]) -> ImsiExtraction:
    """Return the IMSI revealed after a tampered attach.

    The IMSI is read from the first identity response that follows an
    identity request, itself following an attach request that failed its
    integrity check.

    Raises
    ------
    NoExtractionOpportunity
        If the stream holds no such sequence.
    """
    attach: NasRecord | None = None
    request: NasRecord | None = None
    for record in stream:
        if record.kind is NasKind.ATTACH_REQUEST:
            attach = None if record.integrity_valid else record
            request = None
        elif record.kind is NasKind.IDENTITY_REQUEST and attach is not None:
            request = record
        elif record.kind is NasKind.IDENTITY_RESPONSE:
            if (
                attach is not None
                and request is not None
                and record.identity_kind is IdentityKind.IMSI
            ):
                logger.info("IMSI revealed at %.1f ms", record.time_ms)
                return ImsiExtraction(
                    record.identity_value, attach, request, record
                )
            logger.debug(
                "Identity response at %.1f ms without a pending request",
                record.time_ms,
            )
    raise NoExtractionOpportunity("no extraction opportunity")


def binding_validity(
    bindings: Iterable[IdentityBinding],
    reallocations: Iterable[tuple[str, float]],
) -> list[IdentityBinding]:
    """Mark bindings whose identity was reallocated after they were made.

    Examples
    --------
    >>> b = IdentityBinding("G1", "+15550100", 1000.0, Method.PASSIVE,
    ...                     Confidence.UNIQUE)
    >>> binding_validity([b], [("G1", 5000.0)])[0].stale
    True
    >>> binding_validity([b], [("G2", 5000.0)])[0].stale
    False
    """
    last: dict[str, float] = {}
    for identity, time_ms in reallocations:
        last[identity] = max(time_ms, last.get(identity, time_ms))
    checked = []
    for binding in bindings:
        reallocated = last.get(binding.identity_value)
        if reallocated is not None and reallocated > binding.established_at_ms:
            binding = replace(binding, stale=True)
        checked.append(binding)
    return checked


def identity_from_nas(stream: Sequence[NasRecord]) -> str | None:
    """Return the identity to attach to call records.

    The IMSI when the stream reveals one, else the identity of the first
    attach request, else None.
    """
    try:
        return extract_imsi(stream).imsi
    except NoExtractionOpportunity:
        pass
    for record in stream:
        if (
            record.kind is NasKind.ATTACH_REQUEST
            and record.identity_kind is not IdentityKind.NONE
        ):
            return record.identity_value
    return None
