"""
Execution status values shared by the behavior tree, the executor and the terminal.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple


class TickStatus(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    RUNNING = "running"


class ActionPhase(Enum):
    PENDING = "pending"
    STARTED = "started"
    EXECUTING = "executing"
    FINISHED_OK = "finished_ok"
    FINISHED_FAIL = "finished_fail"

    @property
    def rank(self) -> int:
        return _PHASE_RANK[self]

    @property
    def finished(self) -> bool:
        return self in (ActionPhase.FINISHED_OK, ActionPhase.FINISHED_FAIL)


_PHASE_RANK = {
    ActionPhase.PENDING: 0,
    ActionPhase.STARTED: 1,
    ActionPhase.EXECUTING: 2,
    ActionPhase.FINISHED_OK: 3,
    ActionPhase.FINISHED_FAIL: 3,
}


class RunState(Enum):
    IDLE = "idle"
    PLANNING = "planning"
    EXECUTING = "executing"
    SUCCEEDED = "succeeded"
    FAILED = "failed"
    CANCELLED = "cancelled"

    @property
    def terminal(self) -> bool:
        return self in (RunState.SUCCEEDED, RunState.FAILED, RunState.CANCELLED)


@dataclass(frozen=True)
class ActionStatus:
    index: int
    label: str
    phase: ActionPhase = ActionPhase.PENDING
    completion: float = 0.0
    performer: Optional[str] = None
    message: str = ""
    confirmed_at: Optional[float] = None
    finished_at: Optional[float] = None


@dataclass(frozen=True)
class PlanRunStatus:
    """Immutable snapshot of one plan run."""
    plan_id: int = 0
    state: RunState = RunState.IDLE
    reason: str = ""
    actions: Tuple[ActionStatus, ...] = field(default_factory=tuple)
    started_at: Optional[float] = None
    finished_at: Optional[float] = None

    def action(self, index: int) -> ActionStatus:
        return self.actions[index]
