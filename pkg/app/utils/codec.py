"""
Wire format of auction messages.

One UTF-8 record per message, newline terminated, ten tab-separated fields:
version, type, sender, recipient, action, comma-separated args, auction
sequence, completion, success flag (0/1) and status text.
"""
import math
from typing import Iterable, List

from app.models.messages import PROTOCOL_VERSION, AuctionMessage, MessageType

FIELD_COUNT = 10
_FORBIDDEN = ("\t", "\n", "\r")


class CodecError(ValueError):
    """Malformed record or unsupported protocol version."""
    pass


def _check_field(name: str, value: str, allow_empty: bool = False) -> str:
    if not value and not allow_empty:
        raise CodecError(f"Empty {name}")
    if any(c in value for c in _FORBIDDEN):
        raise CodecError(f"Tab or newline in {name}: {value!r}")
    return value


def _format_completion(value: float) -> str:
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise CodecError(f"Completion {value} outside [0, 1]")
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def encode(message: AuctionMessage) -> bytes:
    """
    Raises:
        CodecError: If a field cannot be represented in the record layout.
    """
    if message.protocol_version != PROTOCOL_VERSION:
        raise CodecError(f"Unsupported protocol version '{message.protocol_version}'")
    for arg in message.args:
        _check_field("argument", arg)
        if "," in arg:
            raise CodecError(f"Comma in argument {arg!r}")
    if message.auction_seq < 0:
        raise CodecError(f"Negative auction sequence {message.auction_seq}")
    fields = [
        message.protocol_version,
        message.msg_type.value,
        _check_field("sender", message.sender_id),
        _check_field("recipient", message.recipient_id),
        _check_field("action", message.action_name),
        ",".join(message.args),
        str(message.auction_seq),
        _format_completion(message.completion),
        "1" if message.success else "0",
        _check_field("status text", message.status_text, allow_empty=True),
    ]
    return ("\t".join(fields) + "\n").encode("utf-8")


def decode(data: bytes) -> AuctionMessage:
    """
    Raises:
        CodecError: Malformed record or bad version.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise CodecError(f"Record is not UTF-8: {e}") from e
    if not text.endswith("\n"):
        raise CodecError("Record is not newline terminated")
    fields = text[:-1].split("\t")
    if len(fields) != FIELD_COUNT:
        raise CodecError(f"Expected {FIELD_COUNT} fields, got {len(fields)}")
    version, kind, sender, recipient, action, args, seq, completion, success, status = fields
    if version != PROTOCOL_VERSION:
        raise CodecError(f"Unsupported protocol version '{version}'")
    try:
        msg_type = MessageType(kind)
    except ValueError:
        raise CodecError(f"Unknown message type '{kind}'") from None
    if not (seq.isascii() and seq.isdigit()):
        raise CodecError(f"Bad auction sequence '{seq}'")
    try:
        completion_value = float(completion)
    except ValueError:
        raise CodecError(f"Bad completion '{completion}'") from None
    _format_completion(completion_value)
    if success not in ("0", "1"):
        raise CodecError(f"Bad success flag '{success}'")
    arg_list = tuple(args.split(",")) if args else ()
    if any(not a for a in arg_list):
        raise CodecError(f"Empty argument in '{args}'")
    for name, value in (("sender", sender), ("recipient", recipient), ("action", action)):
        _check_field(name, value)
    if "\r" in status:
        raise CodecError("Carriage return in status text")
    return AuctionMessage(
        msg_type=msg_type,
        sender_id=sender,
        recipient_id=recipient,
        action_name=action,
        args=arg_list,
        auction_seq=int(seq),
        completion=completion_value,
        success=success == "1",
        status_text=status,
        protocol_version=version,
    )


def decode_lines(lines: Iterable[str]) -> List[AuctionMessage]:
    """Decode a hub log; blank lines are skipped."""
    return [decode((line if line.endswith("\n") else line + "\n").encode("utf-8"))
            for line in lines if line.strip()]
