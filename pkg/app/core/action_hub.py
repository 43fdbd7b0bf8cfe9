"""
The shared channel all auction participants publish to and listen on.

InProcessHub keeps one inbox per subscriber and hands messages over on the
clock; UdpHub sends encoded records as datagrams (multicast when the group
is a multicast address).
"""
import ipaddress
import logging
import socket
import socketserver
import struct
import threading
from abc import ABC, abstractmethod
from collections import deque
from typing import Callable, Deque, Dict, Optional, TextIO

from app.core.clock import Clock, VirtualClock, WallClock
from app.models.messages import AuctionMessage
from app.utils.codec import CodecError, decode, encode

logger = logging.getLogger(__name__)

Subscriber = Callable[[AuctionMessage], None]

DEFAULT_HISTORY_LIMIT = 10000


class TransportDownError(RuntimeError):
    """The hub was shut down or its socket failed."""
    pass


class ActionHub(ABC):
    """
    Publish/subscribe channel. The last history_limit published messages are
    kept in history; published counts all of them.
    """

    def __init__(self, clock: Clock, log_path: Optional[str] = None,
                 history_limit: Optional[int] = DEFAULT_HISTORY_LIMIT):
        self.clock = clock
        self.history: Deque[AuctionMessage] = deque(maxlen=history_limit)
        self.published = 0
        self._subscribers: Dict[str, Subscriber] = {}
        self._closed = False
        self._lock = threading.Lock()
        self._log: Optional[TextIO] = open(log_path, "a", encoding="utf-8") if log_path else None

    def subscribe(self, subscriber_id: str, callback: Subscriber) -> None:
        if subscriber_id in self._subscribers:
            raise ValueError(f"Subscriber '{subscriber_id}' already registered")
        self._subscribers[subscriber_id] = callback

    def unsubscribe(self, subscriber_id: str) -> None:
        self._subscribers.pop(subscriber_id, None)

    @property
    def closed(self) -> bool:
        return self._closed

    def publish(self, message: AuctionMessage) -> None:
        """
        Raises:
            TransportDownError: After shutdown.
            CodecError: If the message cannot be encoded.
        """
        if self._closed:
            raise TransportDownError("Action hub is shut down")
        record = encode(message)
        with self._lock:
            self.history.append(message)
            self.published += 1
            if self._log is not None:
                self._log.write(record.decode("utf-8"))
                self._log.flush()
        logger.debug(f"hub <- {message}")
        self._send(message, record)

    @abstractmethod
    def _send(self, message: AuctionMessage, record: bytes) -> None:
        pass

    def _dispatch(self, subscriber_id: str, message: AuctionMessage) -> None:
        callback = self._subscribers.get(subscriber_id)
        if callback is not None and not self._closed:
            callback(message)

    def shutdown(self) -> None:
        self._closed = True
        with self._lock:
            if self._log is not None:
                self._log.close()
                self._log = None


class InProcessHub(ActionHub):
    """
    Lossless hub with per-subscriber FIFO inboxes, so messages from one sender
    arrive in order. Senders do not receive their own messages.

    With auto_deliver=False nothing is handed over until deliver() is called,
    which lets tests choose the delivery order.
    """

    def __init__(self, clock: Clock, auto_deliver: bool = True, log_path: Optional[str] = None,
                 history_limit: Optional[int] = DEFAULT_HISTORY_LIMIT):
        super().__init__(clock, log_path, history_limit)
        self.auto_deliver = auto_deliver
        self._inboxes: Dict[str, Deque[AuctionMessage]] = {}

    def subscribe(self, subscriber_id: str, callback: Subscriber) -> None:
        super().subscribe(subscriber_id, callback)
        self._inboxes[subscriber_id] = deque()

    def unsubscribe(self, subscriber_id: str) -> None:
        super().unsubscribe(subscriber_id)
        self._inboxes.pop(subscriber_id, None)

    def _send(self, message: AuctionMessage, record: bytes) -> None:
        for subscriber_id, inbox in list(self._inboxes.items()):
            if subscriber_id == message.sender_id:
                continue
            inbox.append(message)
            if self.auto_deliver:
                self.clock.call_soon(self.deliver, subscriber_id)

    def pending(self) -> Dict[str, int]:
        return {sid: len(inbox) for sid, inbox in self._inboxes.items() if inbox}

    def deliver(self, subscriber_id: str) -> bool:
        """Hand the oldest queued message to one subscriber."""
        inbox = self._inboxes.get(subscriber_id)
        if not inbox:
            return False
        self._dispatch(subscriber_id, inbox.popleft())
        return True


class _DatagramHandler(socketserver.BaseRequestHandler):
    server: "_HubServer"

    def handle(self) -> None:
        data = self.request[0]
        try:
            message = decode(data)
        except CodecError as e:
            logger.warning(f"Dropping malformed datagram from {self.client_address}: {e}")
            return
        self.server.hub.received(message)


class _HubServer(socketserver.UDPServer):
    allow_reuse_address = True

    def __init__(self, address, hub: "UdpHub"):
        self.hub = hub
        super().__init__(address, _DatagramHandler)


class UdpHub(ActionHub):
    """
    Best-effort datagram hub. Every process joined to the same group and port
    sees every record; received messages are dispatched on the clock thread.
    """

    def __init__(self, clock: Clock, group: str = "127.0.0.1", port: int = 47600,
                 log_path: Optional[str] = None):
        super().__init__(clock, log_path)
        self.group = group
        self.multicast = ipaddress.ip_address(group).is_multicast
        bind_host = "" if self.multicast else group
        try:
            self._server = _HubServer((bind_host, port), self)
        except OSError as e:
            raise TransportDownError(f"Cannot bind {group}:{port}: {e}") from e
        self.port = self._server.server_address[1]
        if self.multicast:
            membership = struct.pack("4sl", socket.inet_aton(group), socket.INADDR_ANY)
            sock = self._server.socket
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, membership)
            sock.setsockopt(socket.IPPROTO_IP, socket.IP_MULTICAST_LOOP, 1)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        kwargs={"poll_interval": 0.1}, daemon=True)
        self._thread.start()
        logger.info(f"UDP action hub on {group}:{self.port}")

    def _send(self, message: AuctionMessage, record: bytes) -> None:
        try:
            self._server.socket.sendto(record, (self.group, self.port))
        except OSError as e:
            raise TransportDownError(f"Send failed: {e}") from e

    def received(self, message: AuctionMessage) -> None:
        for subscriber_id in list(self._subscribers):
            if subscriber_id != message.sender_id:
                self.clock.call_soon(self._dispatch, subscriber_id, message)

    def shutdown(self) -> None:
        if not self._closed:
            self._server.shutdown()
            self._server.server_close()
            self._thread.join(timeout=1.0)
        super().shutdown()


def open_hub(transport: str = "inprocess", group: str = "127.0.0.1", port: int = 47600,
             log_path: Optional[str] = None) -> ActionHub:
    """
    Build the hub named by the configuration: the in-process hub runs on a
    virtual clock, the UDP hub on the wall clock.

    Raises:
        ValueError: Unknown transport name.
        TransportDownError: The UDP socket cannot be bound.
    """
    if transport == "inprocess":
        return InProcessHub(VirtualClock(), log_path=log_path)
    if transport == "udp":
        return UdpHub(WallClock(), group, int(port), log_path)
    raise ValueError(f"Unknown hub transport '{transport}'")
