"""
Auctioneer side of the action protocol.

The executor keeps one ActionsMap subscribed to the hub; every action it
dispatches becomes an ActionPerformerClient that auctions the action, confirms
one bidder and follows that performer's feedback until it finishes.
"""
import itertools
import logging
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

from app.core.action_hub import ActionHub, TransportDownError
from app.core.clock import Timer
from app.models.messages import BROADCAST, AuctionMessage, MessageType

logger = logging.getLogger(__name__)


class ClientState(Enum):
    AUCTIONING = "auctioning"
    CONFIRMED = "confirmed"
    RUNNING = "running"
    DONE = "done"
    CANCELLED = "cancelled"

    @property
    def finished(self) -> bool:
        return self in (ClientState.DONE, ClientState.CANCELLED)


class ActionPerformerClient:
    """
    One auctioned action.

    The first RESPONSE wins; responses delivered at the same instant are
    decided together in favour of the smallest performer id. REQUEST is
    repeated every retry_interval until someone bids or the client is cancelled.
    """

    def __init__(self, hub: ActionHub, owner_id: str, action_name: str, args: Sequence[str],
                 auction_seq: int, retry_interval: float = 1.0,
                 on_change: Optional[Callable[["ActionPerformerClient"], None]] = None):
        self.hub = hub
        self.clock = hub.clock
        self.owner_id = owner_id
        self.action_name = action_name
        self.args = tuple(args)
        self.auction_seq = auction_seq
        self.retry_interval = retry_interval
        self.on_change = on_change

        self.state = ClientState.AUCTIONING
        self.performer_id: Optional[str] = None
        self.completion = 0.0
        self.success: Optional[bool] = None
        self.status_text = ""
        self.requests_sent = 0
        self.created_at = self.clock.now()
        self.confirmed_at: Optional[float] = None
        self.finished_at: Optional[float] = None
        self._bids: List[str] = []
        self._decision: Optional[Timer] = None
        self._retry: Optional[Timer] = None

    @property
    def label(self) -> str:
        return f"({' '.join((self.action_name,) + self.args)})"

    def _message(self, msg_type: MessageType, recipient: str) -> AuctionMessage:
        return AuctionMessage(msg_type=msg_type, sender_id=self.owner_id, recipient_id=recipient,
                              action_name=self.action_name, args=self.args,
                              auction_seq=self.auction_seq)

    def _publish(self, msg_type: MessageType, recipient: str) -> None:
        try:
            self.hub.publish(self._message(msg_type, recipient))
        except TransportDownError as e:
            logger.error(f"Cannot send {msg_type.value} for {self.label}: {e}")
            self._finish(False, str(e))

    def _changed(self) -> None:
        if self.on_change is not None:
            self.on_change(self)

    def start(self) -> None:
        self._request()

    def _request(self) -> None:
        if self.state != ClientState.AUCTIONING or self._bids:
            return
        if self.requests_sent:
            logger.warning(f"No bids for {self.label}, retrying (#{self.requests_sent})")
        self.requests_sent += 1
        self._publish(MessageType.REQUEST, BROADCAST)
        if self.state == ClientState.AUCTIONING:
            self._retry = self.clock.call_later(self.retry_interval, self._request)

    def handle(self, message: AuctionMessage) -> None:
        kind = message.msg_type
        if kind == MessageType.RESPONSE:
            self._on_response(message.sender_id)
        elif message.sender_id != self.performer_id:
            logger.debug(f"Ignoring {message} for auction {self.auction_seq}")
        elif kind == MessageType.FEEDBACK and not self.state.finished:
            self.state = ClientState.RUNNING
            self.completion = message.completion
            self.status_text = message.status_text
            self._changed()
        elif kind == MessageType.FINISH:
            if self.state == ClientState.CANCELLED:
                self.finished_at = self.clock.now()
                self.status_text = message.status_text
                return
            self.completion = message.completion
            self._finish(message.success, message.status_text)

    def _on_response(self, performer_id: str) -> None:
        if self.state != ClientState.AUCTIONING:
            if performer_id != self.performer_id:
                self._publish(MessageType.REJECT, performer_id)
            return
        if performer_id not in self._bids:
            self._bids.append(performer_id)
        if self._decision is None:
            self._decision = self.clock.call_soon(self._decide)

    def _decide(self) -> None:
        if self.state != ClientState.AUCTIONING or not self._bids:
            return
        winner = min(self._bids)
        if self._retry is not None:
            self._retry.cancel()
        self.state = ClientState.CONFIRMED
        self.performer_id = winner
        self.confirmed_at = self.clock.now()
        logger.info(f"{self.label} confirmed to {winner}")
        self._publish(MessageType.CONFIRM, winner)
        for loser in sorted(set(self._bids) - {winner}):
            self._publish(MessageType.REJECT, loser)
        self._changed()

    def _finish(self, success: bool, status_text: str) -> None:
        if self.state.finished:
            return
        if self._retry is not None:
            self._retry.cancel()
        self.state = ClientState.DONE
        self.success = success
        self.status_text = status_text
        self.finished_at = self.clock.now()
        if success:
            self.completion = 1.0
        log = logger.info if success else logger.error
        log(f"{self.label} finished {'ok' if success else 'with failure'} {status_text}".rstrip())
        self._changed()

    def cancel(self) -> None:
        """Abort the auction or the running action. No CONFIRM is sent afterwards."""
        if self.state.finished:
            return
        previous = self.state
        self.state = ClientState.CANCELLED
        if self._retry is not None:
            self._retry.cancel()
        if self._decision is not None:
            self._decision.cancel()
        if previous == ClientState.AUCTIONING:
            for bidder in sorted(set(self._bids)):
                self._publish(MessageType.REJECT, bidder)
        elif self.performer_id is not None:
            self._publish(MessageType.CANCEL, self.performer_id)
        logger.info(f"{self.label} cancelled while {previous.value}")
        self._changed()


class ActionsMap:
    """
    The executor's auctions, keyed by auction sequence. Subscribes once to
    the hub and routes replies to the right client.

    Auctions settled more than keep_finished seconds ago are dropped when a
    new one is created; their busy interval and outcome are kept as totals.
    """

    def __init__(self, hub: ActionHub, owner_id: str = "executor", retry_interval: float = 1.0,
                 keep_finished: float = 60.0):
        self.hub = hub
        self.owner_id = owner_id
        self.retry_interval = retry_interval
        self.keep_finished = keep_finished
        self._seq = itertools.count(1)
        self._clients: Dict[int, ActionPerformerClient] = {}
        self._retired_busy: List[Tuple[float, float]] = []
        self._retired_succeeded = 0
        hub.subscribe(owner_id, self._on_message)

    def _on_message(self, message: AuctionMessage) -> None:
        if message.recipient_id != self.owner_id:
            return
        client = self._clients.get(message.auction_seq)
        if client is None:
            logger.warning(f"Message for unknown auction: {message}")
            return
        client.handle(message)

    def create(self, action_name: str, args: Sequence[str],
               on_change: Optional[Callable[[ActionPerformerClient], None]] = None
               ) -> ActionPerformerClient:
        self._prune()
        client = ActionPerformerClient(self.hub, self.owner_id, action_name, args,
                                       next(self._seq), self.retry_interval, on_change)
        self._clients[client.auction_seq] = client
        return client

    @staticmethod
    def _settled_at(client: ActionPerformerClient) -> Optional[float]:
        """When the client stopped expecting messages, or None if it still may get some."""
        if client.state == ClientState.DONE:
            return client.finished_at
        if client.state == ClientState.CANCELLED:
            # a confirmed performer still owes its FINISH
            return client.created_at if client.performer_id is None else client.finished_at
        return None

    def _prune(self) -> None:
        cutoff = self.hub.clock.now() - self.keep_finished
        for seq, client in list(self._clients.items()):
            settled = self._settled_at(client)
            if settled is None or settled > cutoff:
                continue
            if client.confirmed_at is not None and client.finished_at is not None:
                self._retired_busy.append((client.confirmed_at, client.finished_at))
            if client.success:
                self._retired_succeeded += 1
            del self._clients[seq]

    def __iter__(self) -> Iterator[ActionPerformerClient]:
        """The auctions still held, oldest first."""
        return iter(list(self._clients.values()))

    def __len__(self) -> int:
        return len(self._clients)

    def get(self, auction_seq: int) -> Optional[ActionPerformerClient]:
        return self._clients.get(auction_seq)

    def in_flight(self) -> List[ActionPerformerClient]:
        return [c for c in self._clients.values() if not c.state.finished]

    def cancel_all(self) -> None:
        for client in self.in_flight():
            client.cancel()

    @property
    def succeeded(self) -> int:
        """Actions that finished successfully, dropped auctions included."""
        return self._retired_succeeded + sum(1 for c in self._clients.values() if c.success)

    def busy_time(self) -> List[Tuple[float, float]]:
        """(confirmed_at, finished_at) of every action that was confirmed and finished."""
        return self._retired_busy + [
            (c.confirmed_at, c.finished_at) for c in self._clients.values()
            if c.confirmed_at is not None and c.finished_at is not None]

    def close(self) -> None:
        self.hub.unsubscribe(self.owner_id)
