"""
Performer side of the action protocol: a node that implements one action,
bids for matching requests while idle and runs the confirmed one.
"""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

from app.core.action_hub import ActionHub, TransportDownError
from app.core.clock import Timer
from app.models.messages import (
    AuctionMessage,
    MessageType,
    PerformerInfo,
    PerformerSpec,
    PerformerState,
)

logger = logging.getLogger(__name__)

Work = Callable[["ActionJob"], None]


class ActionJob:
    """
    Handle the work callback uses to report progress and finish. Work must not
    block: long actions schedule their steps with call_later.
    """

    def __init__(self, performer: "ActionPerformer", client_id: str, action_name: str,
                 args: Tuple[str, ...], auction_seq: int):
        self.performer = performer
        self.clock = performer.hub.clock
        self.client_id = client_id
        self.action_name = action_name
        self.args = args
        self.auction_seq = auction_seq
        self.started_at = self.clock.now()
        self.completion = 0.0
        self.status_text = ""
        self.cancelled = False
        self.done = False
        self._timers: List[Timer] = []
        self._cancel_callbacks: List[Callable[[], None]] = []

    @property
    def label(self) -> str:
        return f"({' '.join((self.action_name,) + self.args)})"

    def report(self, completion: float, status_text: str = "") -> None:
        if not self.done:
            self.completion = min(max(completion, 0.0), 1.0)
            self.status_text = status_text

    def finish(self, success: bool = True, status_text: str = "") -> None:
        self.performer._finish(self, success, status_text)

    def call_later(self, delay: float, callback: Callable[..., None], *args) -> Timer:
        timer = self.clock.call_later(delay, self._guarded, callback, args)
        self._timers.append(timer)
        return timer

    def _guarded(self, callback: Callable[..., None], args: tuple) -> None:
        if self.done:
            return
        try:
            callback(*args)
        except Exception as e:
            logger.exception(f"Action {self.label} raised")
            self.finish(False, f"error: {e}")

    def on_cancel(self, callback: Callable[[], None]) -> None:
        self._cancel_callbacks.append(callback)

    def _close(self) -> None:
        self.done = True
        for timer in self._timers:
            timer.cancel()


class ActionPerformer:
    """
    States: INACTIVE (idle), COMMITTED (bid outstanding, ignores other
    requests) and ACTIVE (executing one confirmed action).
    """

    def __init__(self, hub: ActionHub, spec: PerformerSpec, work: Work,
                 feedback_period: float = 0.5):
        if feedback_period <= 0:
            raise ValueError("feedback_period must be positive")
        self.hub = hub
        self.clock = hub.clock
        self.spec = spec
        self.work = work
        self.feedback_period = feedback_period
        self.state = PerformerState.INACTIVE
        self.job: Optional[ActionJob] = None
        self.completed: List[Tuple[str, bool]] = []
        self._commitment: Optional[Tuple[str, int]] = None
        self._feedback: Optional[Timer] = None

    @property
    def performer_id(self) -> str:
        return self.spec.performer_id

    def start(self) -> "ActionPerformer":
        self.hub.subscribe(self.performer_id, self._on_message)
        logger.debug(f"Performer {self.performer_id} serving {self.spec.action_name}")
        return self

    def shutdown(self) -> None:
        if self.job is not None:
            self._cancel(self.job)
        self.hub.unsubscribe(self.performer_id)

    def info(self) -> PerformerInfo:
        return PerformerInfo(
            performer_id=self.performer_id,
            action_name=self.spec.action_name,
            specialization=self.spec.specialization,
            state=self.state,
            current=self.job.label if self.job is not None else None,
            auction_seq=self._commitment[1] if self._commitment else None,
        )

    def _reply(self, msg_type: MessageType, recipient: str, action_name: str,
               args: Sequence[str], auction_seq: int, completion: float = 0.0,
               success: bool = False, status_text: str = "") -> None:
        try:
            self.hub.publish(AuctionMessage(
                msg_type=msg_type, sender_id=self.performer_id, recipient_id=recipient,
                action_name=action_name, args=tuple(args), auction_seq=auction_seq,
                completion=completion, success=success, status_text=status_text))
        except TransportDownError as e:
            logger.error(f"Performer {self.performer_id} cannot send {msg_type.value}: {e}")

    def _on_message(self, message: AuctionMessage) -> None:
        kind = message.msg_type
        if kind == MessageType.REQUEST:
            self._on_request(message)
            return
        if message.recipient_id != self.performer_id:
            return
        key = (message.sender_id, message.auction_seq)
        if key != self._commitment:
            logger.warning(f"Performer {self.performer_id} ignoring stale {message}")
            return
        if kind == MessageType.CONFIRM and self.state == PerformerState.COMMITTED:
            self._activate(message)
        elif kind == MessageType.REJECT and self.state == PerformerState.COMMITTED:
            self.state = PerformerState.INACTIVE
            self._commitment = None
        elif kind == MessageType.CANCEL and self.state == PerformerState.ACTIVE and self.job:
            self._cancel(self.job)

    def _on_request(self, message: AuctionMessage) -> None:
        if self.state != PerformerState.INACTIVE:
            return
        if not self.spec.matches(message.action_name, message.args):
            return
        self.state = PerformerState.COMMITTED
        self._commitment = (message.sender_id, message.auction_seq)
        self._reply(MessageType.RESPONSE, message.sender_id, message.action_name, message.args,
                    message.auction_seq)

    def _activate(self, message: AuctionMessage) -> None:
        self.state = PerformerState.ACTIVE
        job = ActionJob(self, message.sender_id, message.action_name, message.args,
                        message.auction_seq)
        self.job = job
        logger.info(f"Performer {self.performer_id} executing {job.label}")
        self._feedback = self.clock.call_later(self.feedback_period, self._send_feedback, job)
        try:
            self.work(job)
        except Exception as e:
            logger.exception(f"Performer {self.performer_id} failed on {job.label}")
            self._finish(job, False, f"error: {e}")

    def _send_feedback(self, job: ActionJob) -> None:
        if job.done or job is not self.job:
            return
        self._reply(MessageType.FEEDBACK, job.client_id, job.action_name, job.args,
                    job.auction_seq, completion=job.completion, status_text=job.status_text)
        self._feedback = self.clock.call_later(self.feedback_period, self._send_feedback, job)

    def _cancel(self, job: ActionJob) -> None:
        job.cancelled = True
        for callback in job._cancel_callbacks:
            try:
                callback()
            except Exception:
                logger.exception(f"Cancel callback of {job.label} raised")
        self._finish(job, False, "cancelled")

    def _finish(self, job: ActionJob, success: bool, status_text: str) -> None:
        if job.done or job is not self.job:
            return
        job._close()
        if self._feedback is not None:
            self._feedback.cancel()
            self._feedback = None
        completion = 1.0 if success else job.completion
        self._reply(MessageType.FINISH, job.client_id, job.action_name, job.args,
                    job.auction_seq, completion=completion, success=success,
                    status_text=status_text)
        self.completed.append((job.label, success))
        self.state = PerformerState.INACTIVE
        self.job = None
        self._commitment = None


def timed_work(duration: Callable[["ActionJob"], float], steps: int = 4,
               on_complete: Optional[Callable[["ActionJob"], None]] = None) -> Work:
    """
    Work callback that completes after a sampled duration, reporting progress
    at every 1/steps of it (quartiles by default). on_complete runs just before
    the successful FINISH.
    """
    def complete(job: ActionJob) -> None:
        if on_complete is not None:
            on_complete(job)
        job.finish(True)

    def work(job: ActionJob) -> None:
        total = duration(job)
        for k in range(1, steps):
            job.call_later(total * k / steps, job.report, k / steps)
        job.call_later(total, complete, job)

    return work
