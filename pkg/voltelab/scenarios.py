"""Call scenario scripts shared by the trace generator and the log reviser.

A script is the ordered list of SIP messages of one call flow.  Steps name
who sends the message (caller or callee); whether that is uplink or downlink
depends on which side of the call the relayed victim is.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from enum import Enum, IntEnum
from types import MappingProxyType

from .pdcp import Direction

INVITE = "Invite"
TRYING = "100 Trying (Invite)"
SESSION_PROGRESS = "183 Session Process"
PACK = "Pack"
OK_PACK = "200 OK (Pack)"
UPDATE = "Update"
OK_UPDATE = "200 OK (Update)"
RING = "180 Ring (Invite)"
CANCEL = "Cancel"
OK_CANCEL = "200 OK (Cancel)"
TERMINATED = "487 Request Terminated"
ACK_TERMINATED = "ACK (487 Request Terminated)"
OK_INVITE = "200 OK (Invite)"
ACK_OK = "ACK (200 OK (Invite))"
BYE = "Bye"
OK_BYE = "200 OK (Bye)"
BUSY = "486 Busy Here"
REJECTED = "486 Call Rejected By User (Invite)"
OPTIONS = "Options"
OK_OPTIONS = "200 OK (Options)"

DECLINE_OPERATIONS = frozenset({BUSY, REJECTED})
KEEPALIVE_OPERATIONS = frozenset({OPTIONS, OK_OPTIONS})


class Scenario(IntEnum):
    """The four call flows of the lab."""

    CALLER_CANCEL = 1
    CALLER_BYE = 2
    CALLEE_DECLINE = 3
    CALLEE_BYE = 4

    @property
    def reaches_conversation(self) -> bool:
        """True if the call is answered and audio flows."""
        return self in (Scenario.CALLER_BYE, Scenario.CALLEE_BYE)


class Role(str, Enum):
    """Side of a call."""

    CALLER = "caller"
    CALLEE = "callee"

    def other(self) -> Role:
        """Return the opposite side."""
        return Role.CALLEE if self is Role.CALLER else Role.CALLER


@dataclass(frozen=True)
class Step:
    """One message slot of a scenario script.

    A step lists alternative operations when devices answer differently (the
    decline response for instance).  A required step cannot be skipped when
    matching later messages; optional steps may be absent from a log because
    a device never sends them or the fingerprint database does not list them.
    Voicemail steps are emitted only for calls redirected to voicemail.
    """

    operations: tuple[str, ...]
    sender: Role
    required: bool = False
    voicemail: bool = False


def _step(operation: str, sender: Role, **kwargs: bool) -> Step:
    return Step((operation,), sender, **kwargs)


_SETUP = (
    _step(INVITE, Role.CALLER, required=True),
    _step(TRYING, Role.CALLEE),
    _step(SESSION_PROGRESS, Role.CALLEE),
    _step(PACK, Role.CALLER),
    _step(OK_PACK, Role.CALLEE),
    _step(UPDATE, Role.CALLER),
    _step(OK_UPDATE, Role.CALLEE),
    _step(RING, Role.CALLEE, required=True),
)

SCRIPTS: Mapping[Scenario, tuple[Step, ...]] = MappingProxyType(
    {
        Scenario.CALLER_CANCEL: _SETUP
        + (
            _step(CANCEL, Role.CALLER, required=True),
            _step(OK_CANCEL, Role.CALLEE),
            _step(TERMINATED, Role.CALLEE),
            _step(ACK_TERMINATED, Role.CALLER),
        ),
        Scenario.CALLER_BYE: _SETUP
        + (
            _step(OK_INVITE, Role.CALLEE, required=True),
            _step(ACK_OK, Role.CALLER),
            _step(BYE, Role.CALLER, required=True),
            _step(OK_BYE, Role.CALLEE),
        ),
        Scenario.CALLEE_DECLINE: _SETUP
        + (
            Step((BUSY, REJECTED), Role.CALLEE, required=True),
            _step(OK_INVITE, Role.CALLEE, voicemail=True),
            _step(ACK_OK, Role.CALLER, voicemail=True),
            _step(BYE, Role.CALLER, voicemail=True),
            _step(OK_BYE, Role.CALLEE, voicemail=True),
        ),
        Scenario.CALLEE_BYE: _SETUP
        + (
            _step(OK_INVITE, Role.CALLEE, required=True),
            _step(ACK_OK, Role.CALLER),
            _step(BYE, Role.CALLEE, required=True),
            _step(OK_BYE, Role.CALLER),
        ),
    }
)

# Side of the call the relayed victim is on unless a scenario says otherwise
DEFAULT_VICTIM_ROLE: Mapping[Scenario, Role] = MappingProxyType(
    {
        Scenario.CALLER_CANCEL: Role.CALLER,
        Scenario.CALLER_BYE: Role.CALLER,
        Scenario.CALLEE_DECLINE: Role.CALLEE,
        Scenario.CALLEE_BYE: Role.CALLEE,
    }
)


def sender_direction(sender: Role, victim: Role) -> Direction:
    """Return the link direction of a message sent by `sender`.

    Examples
    --------
    >>> sender_direction(Role.CALLER, Role.CALLEE).value
    'downlink'
    """
    return Direction.UPLINK if sender is victim else Direction.DOWNLINK
