"""
Tests for the in-process and UDP action hubs.
"""
import pytest

from app.core.action_hub import InProcessHub, TransportDownError, UdpHub, open_hub
from app.core.clock import VirtualClock, WallClock
from app.models.messages import AuctionMessage, MessageType
from app.utils.codec import decode_lines


def request(sender="exec-1", seq=1):
    return AuctionMessage(MessageType.REQUEST, sender, "*", "move", ("rb1", "a", "b"),
                          auction_seq=seq)


class TestInProcessHub:
    """Queued delivery on a virtual clock."""

    def test_delivery_skips_sender(self):
        clock = VirtualClock()
        hub = InProcessHub(clock)
        seen = {"exec-1": [], "p1": [], "p2": []}
        for sid, inbox in seen.items():
            hub.subscribe(sid, inbox.append)

        hub.publish(request())
        clock.run_until(0.0)

        assert seen["exec-1"] == []
        assert len(seen["p1"]) == 1 and len(seen["p2"]) == 1

    def test_manual_delivery_keeps_fifo(self):
        hub = InProcessHub(VirtualClock(), auto_deliver=False)
        got = []
        hub.subscribe("exec-1", lambda m: None)
        hub.subscribe("p1", got.append)
        hub.publish(request(seq=1))
        hub.publish(request(seq=2))

        assert hub.pending() == {"p1": 2}
        assert hub.deliver("p1") and hub.deliver("p1")
        assert not hub.deliver("p1")
        assert [m.auction_seq for m in got] == [1, 2]

    def test_duplicate_subscriber(self):
        hub = InProcessHub(VirtualClock())
        hub.subscribe("p1", print)
        with pytest.raises(ValueError):
            hub.subscribe("p1", print)

    def test_publish_after_shutdown(self):
        hub = InProcessHub(VirtualClock())
        hub.shutdown()
        with pytest.raises(TransportDownError):
            hub.publish(request())

    def test_log_file(self, tmp_path):
        """Test that every published message is appended to the hub log."""
        path = tmp_path / "hub.log"
        hub = InProcessHub(VirtualClock(), log_path=str(path))
        hub.publish(request(seq=1))
        hub.publish(request(seq=2))
        hub.shutdown()

        messages = decode_lines(path.read_text(encoding="utf-8").splitlines())
        assert [m.auction_seq for m in messages] == [1, 2]

    def test_history_keeps_the_latest_messages(self):
        hub = InProcessHub(VirtualClock(), history_limit=2)
        for seq in (1, 2, 3):
            hub.publish(request(seq=seq))

        assert [m.auction_seq for m in hub.history] == [2, 3]
        assert hub.published == 3


class TestUdpHub:
    """Loopback datagrams on a wall clock."""

    def test_loopback(self):
        clock = WallClock()
        hub = UdpHub(clock, group="127.0.0.1", port=0)
        got = []
        hub.subscribe("exec-1", lambda m: None)
        hub.subscribe("p1", got.append)
        try:
            hub.publish(request(seq=5))
            assert clock.run_until_complete(lambda: bool(got), timeout=5.0)
        finally:
            hub.shutdown()

        assert got[0] == request(seq=5)

    def test_publish_after_shutdown(self):
        hub = UdpHub(WallClock(), group="127.0.0.1", port=0)
        hub.shutdown()
        with pytest.raises(TransportDownError):
            hub.publish(request())


class TestOpenHub:
    """Hubs built from configuration values."""

    def test_inprocess_runs_on_virtual_clock(self):
        hub = open_hub("inprocess")
        assert isinstance(hub, InProcessHub)
        assert isinstance(hub.clock, VirtualClock)

    def test_udp_runs_on_wall_clock(self):
        hub = open_hub("udp", "127.0.0.1", 0)
        try:
            assert isinstance(hub, UdpHub)
            assert isinstance(hub.clock, WallClock)
        finally:
            hub.shutdown()

    def test_unknown_transport(self):
        with pytest.raises(ValueError, match="Unknown hub transport"):
            open_hub("carrier-pigeon")
