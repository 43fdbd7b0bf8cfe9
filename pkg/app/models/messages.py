"""
Messages and roles of the action auction protocol.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

PROTOCOL_VERSION = "PS2A1"
BROADCAST = "*"
WILDCARD = "*"


class MessageType(Enum):
    REQUEST = "REQUEST"
    RESPONSE = "RESPONSE"
    CONFIRM = "CONFIRM"
    REJECT = "REJECT"
    FEEDBACK = "FEEDBACK"
    FINISH = "FINISH"
    CANCEL = "CANCEL"


@dataclass(frozen=True)
class AuctionMessage:
    msg_type: MessageType
    sender_id: str
    recipient_id: str
    action_name: str
    args: Tuple[str, ...] = ()
    auction_seq: int = 0
    completion: float = 0.0
    success: bool = False
    status_text: str = ""
    protocol_version: str = PROTOCOL_VERSION

    @property
    def label(self) -> str:
        return f"({' '.join((self.action_name,) + tuple(self.args))})"

    def __str__(self) -> str:
        return (f"{self.msg_type.value} #{self.auction_seq} {self.sender_id}->"
                f"{self.recipient_id} {self.label}")


class PerformerState(Enum):
    INACTIVE = "inactive"
    COMMITTED = "committed"
    ACTIVE = "active"


@dataclass(frozen=True)
class PerformerSpec:
    """
    Which requests a performer serves: one action, optionally restricted by
    per-position argument values (``*`` matches anything).
    """
    performer_id: str
    action_name: str
    specialization: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.performer_id or self.performer_id == BROADCAST:
            raise ValueError(f"Invalid performer id '{self.performer_id}'")

    def validate(self, arity: int) -> None:
        if len(self.specialization) > arity:
            raise ValueError(
                f"Performer {self.performer_id}: {len(self.specialization)} constraints for "
                f"'{self.action_name}' with {arity} parameters")

    def matches(self, action_name: str, args: Sequence[str]) -> bool:
        if action_name != self.action_name or len(self.specialization) > len(args):
            return False
        return all(c == WILDCARD or c == a for c, a in zip(self.specialization, args))


@dataclass(frozen=True)
class PerformerInfo:
    """Registry snapshot of one performer."""
    performer_id: str
    action_name: str
    specialization: Tuple[str, ...]
    state: PerformerState
    current: Optional[str] = None
    auction_seq: Optional[int] = None
