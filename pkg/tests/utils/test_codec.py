"""
Tests for the auction message record format.
"""
import random
import string

import pytest

from app.models.messages import AuctionMessage, MessageType
from app.utils.codec import CodecError, decode, decode_lines, encode

GOLDEN = b"PS2A1\tREQUEST\texec-1\t*\tmove\trb1,a,b\t7\t0\t0\t\n"


def random_message(rng):
    def word():
        return "".join(rng.choice(string.ascii_lowercase + "_-") for _ in range(rng.randint(1, 8)))

    return AuctionMessage(
        msg_type=rng.choice(list(MessageType)),
        sender_id=word(),
        recipient_id=rng.choice(["*", word()]),
        action_name=word(),
        args=tuple(word() for _ in range(rng.randint(0, 4))),
        auction_seq=rng.randint(0, 10 ** 6),
        completion=rng.choice([0.0, 1.0, rng.random()]),
        success=rng.random() < 0.5,
        status_text=rng.choice(["", "done", "battery low: 3%"]),
    )


class TestCodec:
    """Encoding and decoding single records."""

    def test_golden_record(self):
        message = AuctionMessage(MessageType.REQUEST, "exec-1", "*", "move",
                                 ("rb1", "a", "b"), auction_seq=7)
        assert encode(message) == GOLDEN
        assert decode(GOLDEN) == message

    def test_random_messages_survive(self):
        rng = random.Random(42)
        for _ in range(10000):
            message = random_message(rng)
            assert decode(encode(message)) == message

    @pytest.mark.parametrize("record, fragment", [
        (GOLDEN.replace(b"PS2A1", b"PS2A9"), "Unsupported protocol version"),
        (GOLDEN.replace(b"REQUEST", b"SHOUT"), "Unknown message type"),
        (GOLDEN.replace(b"\t7\t", b"\t-7\t"), "Bad auction sequence"),
        (GOLDEN[:-1], "newline"),
        (b"PS2A1\tREQUEST\n", "Expected 10 fields"),
        (GOLDEN.replace(b"\t0\t0\t", b"\t1.5\t0\t"), "outside [0, 1]"),
        (GOLDEN.replace(b"rb1,a,b", b"rb1,,b"), "Empty argument"),
    ])
    def test_malformed_records(self, record, fragment):
        with pytest.raises(CodecError) as excinfo:
            decode(record)
        assert fragment in str(excinfo.value)

    def test_unencodable_fields(self):
        with pytest.raises(CodecError, match="Comma"):
            encode(AuctionMessage(MessageType.REQUEST, "exec-1", "*", "move", ("a,b",)))
        with pytest.raises(CodecError, match="Tab or newline"):
            encode(AuctionMessage(MessageType.FEEDBACK, "p1", "exec-1", "move",
                                  status_text="two\tcolumns"))

    def test_decode_lines(self):
        text = GOLDEN.decode("utf-8") + "\n" + GOLDEN.decode("utf-8").rstrip("\n")
        assert len(decode_lines(text.splitlines())) == 2
