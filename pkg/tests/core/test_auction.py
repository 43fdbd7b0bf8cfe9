"""
Tests for the action auction: performers, auctioneer clients and their protocol.
"""
import pytest

from app.core.action_hub import InProcessHub
from app.core.action_performer import ActionPerformer, timed_work
from app.core.clock import VirtualClock
from app.core.performer_client import ActionsMap, ClientState
from app.models.messages import MessageType, PerformerSpec, PerformerState


def performer(hub, pid, specialization=(), duration=2.0, feedback_period=0.5):
    spec = PerformerSpec(pid, "move", tuple(specialization))
    return ActionPerformer(hub, spec, timed_work(lambda job: duration),
                           feedback_period=feedback_period).start()


def sent(hub, kind, seq=None):
    return [m for m in hub.history
            if m.msg_type == kind and (seq is None or m.auction_seq == seq)]


class World:
    """Performers and auctions on a hub whose deliveries the test schedules."""

    def __init__(self, performers, auctions):
        self.clock = VirtualClock()
        self.hub = InProcessHub(self.clock, auto_deliver=False)
        self.actions = ActionsMap(self.hub, "executor")
        self.performers = [performer(self.hub, f"p{i}") for i in range(1, performers + 1)]
        self.clients = [self.actions.create("move", ("rb1", f"z{i}", "z0"))
                        for i in range(auctions)]
        for client in self.clients:
            client.start()

    def deliver(self, subscriber_id):
        self.hub.deliver(subscriber_id)
        self.clock.run_until(self.clock.now())

    def choices(self):
        return sorted(self.hub.pending())

    def signature(self):
        inboxes = tuple((sid, tuple(box)) for sid, box in sorted(self.hub._inboxes.items()))
        performers = tuple((p.state, p._commitment) for p in self.performers)
        clients = tuple((c.state, c.performer_id, tuple(c._bids)) for c in self.clients)
        return inboxes, performers, clients

    def check_safety(self):
        for client in self.clients:
            seq = client.auction_seq
            assert len(sent(self.hub, MessageType.CONFIRM, seq)) <= 1
            running = [p for p in self.performers
                       if p.state == PerformerState.ACTIVE and p.job.auction_seq == seq]
            assert len(running) <= 1

    def drain(self, limit=2000):
        """Deliver in a fixed order and let time pass until every auction is done."""
        for _ in range(limit):
            if all(c.state.finished for c in self.clients):
                return True
            pending = self.choices()
            if pending:
                self.deliver(pending[0])
            elif not self.clock.step():
                return False
            self.check_safety()
        return False


def explore(performers, auctions):
    """Every delivery order at the start instant, deduplicated by world state."""
    seen = set()
    stack = [()]
    outcomes = 0
    while stack:
        prefix = stack.pop()
        world = World(performers, auctions)
        for choice in prefix:
            world.deliver(choice)
        world.check_safety()
        signature = world.signature()
        if signature in seen:
            continue
        seen.add(signature)
        options = world.choices()
        if not options:
            assert world.drain()
            assert all(c.success for c in world.clients)
            for client in world.clients:
                assert len(sent(world.hub, MessageType.FINISH, client.auction_seq)) == 1
            outcomes += 1
            continue
        stack.extend(prefix + (choice,) for choice in options)
    return outcomes


class TestProtocolOrders:
    """Safety and liveness over delivery interleavings."""

    @pytest.mark.parametrize("performers, auctions", [(1, 1), (3, 1), (2, 2), (3, 2)])
    def test_all_delivery_orders(self, performers, auctions):
        assert explore(performers, auctions) >= 1


class TestAuction:
    """Single auctions with automatic delivery."""

    @pytest.fixture
    def clock(self):
        return VirtualClock()

    @pytest.fixture
    def hub(self, clock):
        return InProcessHub(clock)

    @pytest.fixture
    def actions(self, hub):
        return ActionsMap(hub, "executor", retry_interval=1.0)

    def test_smallest_simultaneous_bidder_wins(self, clock, hub, actions):
        losers = [performer(hub, "p3"), performer(hub, "p2")]
        winner = performer(hub, "p1")
        client = actions.create("move", ("rb1", "a", "b"))
        client.start()

        clock.run_until_complete(lambda: client.state.finished, timeout=10)

        assert client.performer_id == "p1"
        assert client.success
        assert winner.completed == [("(move rb1 a b)", True)]
        assert all(p.state == PerformerState.INACTIVE and not p.completed for p in losers)
        assert {m.recipient_id for m in sent(hub, MessageType.REJECT)} == {"p2", "p3"}

    def test_specialization(self, clock, hub, actions):
        performer(hub, "rb1_move", ("rb1",))
        performer(hub, "rb2_move", ("rb2",))
        client = actions.create("move", ("rb2", "a", "b"))
        client.start()

        clock.run_until_complete(lambda: client.state.finished, timeout=10)

        assert client.performer_id == "rb2_move"
        assert [m.sender_id for m in sent(hub, MessageType.RESPONSE)] == ["rb2_move"]

    def test_feedback_cadence_and_single_finish(self, clock, hub, actions):
        """Test that a two second action reports at least three times and finishes once."""
        performer(hub, "p1", duration=2.0, feedback_period=0.5)
        changes = []
        client = actions.create("move", ("rb1", "a", "b"), on_change=changes.append)
        client.start()

        clock.run_until_complete(lambda: client.state.finished, timeout=10)

        feedback = sent(hub, MessageType.FEEDBACK)
        assert len(feedback) >= 3
        completions = [m.completion for m in feedback]
        assert completions == sorted(completions)
        assert completions[-1] == 0.75
        assert len(sent(hub, MessageType.FINISH)) == 1
        assert client.finished_at == pytest.approx(2.0)
        assert client.state == ClientState.DONE

    def test_request_is_retried_until_someone_bids(self, clock, hub, actions):
        client = actions.create("move", ("rb1", "a", "b"))
        client.start()
        clock.run_until(2.5)
        assert client.requests_sent == 3

        performer(hub, "late")
        clock.run_until_complete(lambda: client.state.finished, timeout=10)

        assert client.performer_id == "late"
        assert client.success

    def test_cancel_before_confirm(self):
        clock = VirtualClock()
        hub = InProcessHub(clock, auto_deliver=False)
        actions = ActionsMap(hub, "executor")
        bidder = performer(hub, "p1")
        client = actions.create("move", ("rb1", "a", "b"))
        client.start()
        hub.deliver("p1")

        client.cancel()
        while hub.pending():
            for sid in sorted(hub.pending()):
                hub.deliver(sid)
            clock.run_until(clock.now())

        assert sent(hub, MessageType.CONFIRM) == []
        assert [m.recipient_id for m in sent(hub, MessageType.REJECT)] == ["p1"]
        assert bidder.state == PerformerState.INACTIVE
        assert bidder.completed == []

    def test_cancel_after_confirm(self, clock, hub, actions):
        busy = performer(hub, "p1", duration=10.0)
        client = actions.create("move", ("rb1", "a", "b"))
        client.start()
        clock.run_until(1.0)
        assert busy.state == PerformerState.ACTIVE

        client.cancel()
        clock.run_until(2.0)

        assert client.state == ClientState.CANCELLED
        assert len(sent(hub, MessageType.CANCEL)) == 1
        finish = sent(hub, MessageType.FINISH)
        assert len(finish) == 1 and not finish[0].success
        assert busy.completed == [("(move rb1 a b)", False)]
        assert busy.state == PerformerState.INACTIVE
        assert client.finished_at == 1.0

    def test_work_error_finishes_with_failure(self, clock, hub, actions):
        def explode(job):
            raise RuntimeError("gripper jammed")

        ActionPerformer(hub, PerformerSpec("p1", "move"), explode).start()
        client = actions.create("move", ("rb1", "a", "b"))
        client.start()

        clock.run_until_complete(lambda: client.state.finished, timeout=10)

        assert client.success is False
        assert "gripper jammed" in client.status_text

    def test_performer_spec_validation(self):
        with pytest.raises(ValueError):
            PerformerSpec("*", "move")
        with pytest.raises(ValueError):
            PerformerSpec("p1", "move", ("rb1", "a", "b", "c")).validate(3)
        spec = PerformerSpec("p1", "move", ("*", "a"))
        assert spec.matches("move", ("rb9", "a", "b"))
        assert not spec.matches("move", ("rb9", "b", "a"))
        assert not spec.matches("pick", ("rb9", "a"))


class TestActionsMapRetention:
    """Settled auctions are dropped after a while without losing the totals."""

    def test_old_auctions_are_dropped(self):
        clock = VirtualClock()
        hub = InProcessHub(clock)
        actions = ActionsMap(hub, "executor", keep_finished=10.0)
        performer(hub, "p1", duration=2.0)
        first = actions.create("move", ("rb1", "a", "b"))
        first.start()
        clock.run_until_complete(lambda: first.state.finished, timeout=10)
        busy = actions.busy_time()

        clock.run_until(5.0)
        actions.create("move", ("rb1", "b", "c"))
        assert actions.get(first.auction_seq) is first

        clock.run_until(20.0)
        latest = actions.create("move", ("rb1", "c", "a"))

        assert actions.get(first.auction_seq) is None
        assert actions.get(latest.auction_seq) is latest
        assert actions.succeeded == 1
        assert actions.busy_time()[0] == busy[0]

    def test_running_auctions_are_kept(self):
        clock = VirtualClock()
        hub = InProcessHub(clock)
        actions = ActionsMap(hub, "executor", keep_finished=1.0)
        performer(hub, "p1", duration=50.0)
        slow = actions.create("move", ("rb1", "a", "b"))
        slow.start()

        clock.run_until(30.0)
        actions.create("move", ("rb1", "b", "c"))

        assert actions.get(slow.auction_seq) is slow
        assert slow.state == ClientState.RUNNING
