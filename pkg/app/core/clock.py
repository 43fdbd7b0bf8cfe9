"""
Event scheduling clocks.

Hubs, auction state machines, the executor and the simulation never sleep
themselves: they schedule callbacks on a clock. VirtualClock jumps straight
to the next event, WallClock waits for it in real time.
"""
import heapq
import logging
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional

logger = logging.getLogger(__name__)


class Timer:
    """Handle of a scheduled callback."""

    def __init__(self, when: float, callback: Callable[..., Any], args: tuple):
        self.when = when
        self.callback = callback
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def run(self) -> None:
        if not self.cancelled:
            self.callback(*self.args)


@dataclass(order=True)
class _Scheduled:
    when: float
    seq: int
    timer: Timer = field(compare=False)


class Clock(ABC):
    def __init__(self) -> None:
        self._queue: List[_Scheduled] = []
        self._seq = 0

    @abstractmethod
    def now(self) -> float:
        pass

    def _push(self, when: float, callback: Callable[..., Any], args: tuple) -> Timer:
        timer = Timer(when, callback, args)
        self._seq += 1
        heapq.heappush(self._queue, _Scheduled(when, self._seq, timer))
        return timer

    def call_at(self, when: float, callback: Callable[..., Any], *args: Any) -> Timer:
        return self._push(max(when, self.now()), callback, args)

    def call_later(self, delay: float, callback: Callable[..., Any], *args: Any) -> Timer:
        if delay < 0:
            raise ValueError("delay must be non-negative")
        return self._push(self.now() + delay, callback, args)

    def call_soon(self, callback: Callable[..., Any], *args: Any) -> Timer:
        return self._push(self.now(), callback, args)

    def pending(self) -> int:
        return sum(1 for s in self._queue if not s.timer.cancelled)

    @abstractmethod
    def run_until(self, when: float) -> None:
        pass

    @abstractmethod
    def run_until_complete(self, done: Callable[[], bool],
                           timeout: Optional[float] = None) -> bool:
        pass


class VirtualClock(Clock):
    """
    Deterministic discrete-event clock.

    Events fire in timestamp order, FIFO among equal timestamps, and time
    never moves backwards.
    """

    def __init__(self, start: float = 0.0):
        super().__init__()
        self._now = start

    def now(self) -> float:
        return self._now

    def _next(self) -> Optional[_Scheduled]:
        while self._queue and self._queue[0].timer.cancelled:
            heapq.heappop(self._queue)
        return self._queue[0] if self._queue else None

    def step(self) -> bool:
        """Fire the next event. False when nothing is scheduled."""
        head = self._next()
        if head is None:
            return False
        heapq.heappop(self._queue)
        self._now = max(self._now, head.when)
        head.timer.run()
        return True

    def run_until(self, when: float) -> None:
        while True:
            head = self._next()
            if head is None or head.when > when:
                break
            self.step()
        self._now = max(self._now, when)

    def run_until_complete(self, done: Callable[[], bool],
                           timeout: Optional[float] = None) -> bool:
        deadline = None if timeout is None else self._now + timeout
        while not done():
            head = self._next()
            if head is None:
                logger.debug(f"Virtual clock idle at t={self._now:.3f}")
                return False
            if deadline is not None and head.when > deadline:
                self._now = deadline
                return done()
            self.step()
        return True


class WallClock(Clock):
    """
    Real-time clock. Callbacks may be scheduled from any thread; they all run
    on the thread that drives run_until / run_until_complete.
    """

    def __init__(self) -> None:
        super().__init__()
        self._origin = time.monotonic()
        self._cond = threading.Condition()

    def now(self) -> float:
        return time.monotonic() - self._origin

    def _push(self, when: float, callback: Callable[..., Any], args: tuple) -> Timer:
        with self._cond:
            timer = super()._push(when, callback, args)
            self._cond.notify_all()
            return timer

    def _pop_due(self, limit: float) -> Optional[Timer]:
        """Wait until an event is due or limit passes; return the due event, if any."""
        with self._cond:
            while True:
                while self._queue and self._queue[0].timer.cancelled:
                    heapq.heappop(self._queue)
                now = self.now()
                if self._queue and self._queue[0].when <= now:
                    return heapq.heappop(self._queue).timer
                if now >= limit:
                    return None
                wake = min(limit, self._queue[0].when) if self._queue else limit
                self._cond.wait(max(0.0, wake - now))

    def run_until(self, when: float) -> None:
        while True:
            timer = self._pop_due(when)
            if timer is None:
                return
            timer.run()

    def run_until_complete(self, done: Callable[[], bool],
                           timeout: Optional[float] = None) -> bool:
        deadline = float("inf") if timeout is None else self.now() + timeout
        while not done():
            # wake at least every 100 ms so done() is polled
            timer = self._pop_due(min(deadline, self.now() + 0.1))
            if timer is not None:
                timer.run()
            elif self.now() >= deadline:
                return done()
        return True
