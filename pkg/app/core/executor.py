"""
The executor: asks the planner for a plan, compiles it into a behavior tree
and ticks the tree, dispatching every action through an auction.
"""
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, TextIO

from app.core.action_hub import ActionHub
from app.core.behavior_tree import (
    ActionDriver,
    ActionUnit,
    ActionUnitState,
    BehaviorTree,
    TreeContext,
    graph_to_bt,
)
from app.core.clock import Timer
from app.core.knowledge_base import KnowledgeBase
from app.core.performer_client import ActionPerformerClient, ActionsMap, ClientState
from app.core.plan_graph import PlanGraph, PlanGraphError, build_graph
from app.core.planner import Planner
from app.models.plan import Plan, SolverSpec
from app.models.status import ActionStatus, PlanRunStatus, RunState, TickStatus
from app.utils.plan_parser import PlannerError

logger = logging.getLogger(__name__)

NO_PLAN = "no_plan"

StatusListener = Callable[[PlanRunStatus, Optional[ActionStatus]], None]


class ExecutorError(Exception):
    """The executor cannot accept the request in its current state."""
    pass


@dataclass(frozen=True)
class ExecutorConfig:
    solver: SolverSpec = field(default_factory=SolverSpec)
    tick_period: float = 0.1
    action_wait_timeout: Optional[float] = None
    feedback_period: float = 0.5
    retry_interval: float = 1.0
    event_log: Optional[str] = None

    def __post_init__(self) -> None:
        for name in ("tick_period", "feedback_period", "retry_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.action_wait_timeout is not None and self.action_wait_timeout <= 0:
            raise ValueError("action_wait_timeout must be positive")


class AuctionDriver(ActionDriver):
    """Drives one ExecuteAction leaf through an auction client."""

    def __init__(self, actions: ActionsMap, unit: ActionUnit,
                 on_change: Callable[[], None]):
        self.actions = actions
        self.unit = unit
        self.on_change = on_change
        self.client: Optional[ActionPerformerClient] = None

    def start(self) -> None:
        self.client = self.actions.create(self.unit.action.name, self.unit.action.args,
                                          on_change=self._client_changed)
        self.client.start()

    def _client_changed(self, client: ActionPerformerClient) -> None:
        if client.state != ClientState.CANCELLED:
            self.unit.state.report(client.completion)
        self.on_change()

    def poll(self) -> TickStatus:
        client = self.client
        if client is None:
            return TickStatus.RUNNING
        if client.state == ClientState.DONE:
            if client.success:
                return TickStatus.SUCCESS
            detail = f": {client.status_text}" if client.status_text else ""
            self.unit.state.message = f"{self.unit.label} failed on {client.performer_id}{detail}"
            return TickStatus.FAILURE
        if client.state == ClientState.CANCELLED:
            return TickStatus.FAILURE
        return TickStatus.RUNNING

    def cancel(self) -> None:
        if self.client is not None:
            self.client.cancel()


class Executor:
    """
    Runs one plan at a time for the goal held in the knowledge base.

    Ticks happen every tick_period and additionally right after any auction
    changes state; all knowledge updates from effects happen inside ticks.
    """

    def __init__(self, knowledge: KnowledgeBase, hub: ActionHub,
                 config: Optional[ExecutorConfig] = None, executor_id: str = "executor",
                 planner: Optional[Planner] = None):
        self.knowledge = knowledge
        self.hub = hub
        self.clock = hub.clock
        self.config = config or ExecutorConfig()
        self.executor_id = executor_id
        self.planner = planner or Planner(self.config.solver)
        self.actions = ActionsMap(hub, executor_id, self.config.retry_interval)
        self.plan: Optional[Plan] = None
        self.graph: Optional[PlanGraph] = None
        self.tree: Optional[BehaviorTree] = None
        self._plan_ids = itertools.count(1)
        self._status = PlanRunStatus()
        self._drivers: Dict[int, AuctionDriver] = {}
        self._listeners: List[StatusListener] = []
        self._tick_pending = False
        self._periodic: Optional[Timer] = None
        self._event_log: Optional[TextIO] = None
        if self.config.event_log:
            self._event_log = open(self.config.event_log, "a", encoding="utf-8")

    # Status ---------------------------------------------------------------

    def add_listener(self, listener: StatusListener) -> None:
        self._listeners.append(listener)

    def remove_listener(self, listener: StatusListener) -> None:
        if listener in self._listeners:
            self._listeners.remove(listener)

    def status(self) -> PlanRunStatus:
        return self._status

    def _action_status(self, unit: ActionUnit) -> ActionStatus:
        driver = self._drivers.get(unit.index)
        client = driver.client if driver is not None else None
        return ActionStatus(
            index=unit.index,
            label=unit.label,
            phase=unit.state.phase,
            completion=unit.state.completion,
            performer=client.performer_id if client is not None else None,
            message=unit.state.message,
            confirmed_at=client.confirmed_at if client is not None else None,
            finished_at=client.finished_at if client is not None else None,
        )

    def _refresh(self, changed: Optional[ActionStatus] = None, **updates) -> None:
        actions = tuple(self._action_status(u) for u in self.tree.units) if self.tree else ()
        self._status = replace(self._status, actions=actions, **updates)
        self._emit(changed)

    def _emit(self, changed: Optional[ActionStatus]) -> None:
        status = self._status
        if self._event_log is not None:
            record = {"time": round(self.clock.now(), 6), "plan_id": status.plan_id}
            if changed is None:
                record.update(event="plan", state=status.state.value, reason=status.reason)
            else:
                record.update(event="action", **asdict(changed))
                record["phase"] = changed.phase.value
            self._event_log.write(json.dumps(record) + "\n")
            self._event_log.flush()
        for listener in list(self._listeners):
            try:
                listener(status, changed)
            except Exception:
                logger.exception("Status listener raised")

    def _set_state(self, state: RunState, reason: str = "") -> None:
        updates = {"state": state, "reason": reason}
        if state.terminal:
            updates["finished_at"] = self.clock.now()
        self._refresh(None, **updates)

    def _on_unit_change(self, state: ActionUnitState) -> None:
        if self.tree is None or self._status.state.terminal:
            return
        self._refresh(self._action_status(self.tree.units[state.index]))

    # Running --------------------------------------------------------------

    @property
    def running(self) -> bool:
        return self._status.state in (RunState.PLANNING, RunState.EXECUTING)

    def start_goal(self) -> PlanRunStatus:
        """
        Plan for the current goal and start executing without blocking.

        Raises:
            ExecutorError: If a plan is already running.
            PlannerError: Solver failure; the run is marked failed first.
            PlanGraphError: The plan cannot be compiled; the run is marked failed first.
        """
        if self.running:
            raise ExecutorError(f"Plan {self._status.plan_id} is still running")
        self.plan, self.graph, self.tree = None, None, None
        self._drivers = {}
        self._status = PlanRunStatus(plan_id=next(self._plan_ids), started_at=self.clock.now())
        self._set_state(RunState.PLANNING)

        snapshot = self.knowledge.snapshot()
        domain = self.knowledge.domain
        try:
            plan = self.planner.get_plan(domain, snapshot)
        except PlannerError as e:
            self._set_state(RunState.FAILED, f"planner error: {e}")
            raise
        if plan is None:
            logger.info(f"No plan for goal {snapshot.goal}")
            self._set_state(RunState.FAILED, NO_PLAN)
            return self._status
        self.plan = plan
        try:
            self.graph = build_graph(plan, domain, snapshot)
        except PlanGraphError as e:
            self._set_state(RunState.FAILED, f"plan graph error: {e}")
            raise
        context = TreeContext(self.knowledge, self._make_driver, self.clock,
                              self.config.action_wait_timeout)
        self.tree = graph_to_bt(self.graph, context)
        for unit in self.tree.units:
            unit.state.listener = self._on_unit_change
        logger.info(f"Executing plan {self._status.plan_id} with {len(plan)} actions")
        self._set_state(RunState.EXECUTING)
        self._request_tick()
        return self._status

    def _make_driver(self, unit: ActionUnit) -> AuctionDriver:
        driver = AuctionDriver(self.actions, unit, self._request_tick)
        self._drivers[unit.index] = driver
        return driver

    def _request_tick(self) -> None:
        if not self._tick_pending:
            self._tick_pending = True
            self.clock.call_soon(self._tick)

    def _tick(self) -> None:
        self._tick_pending = False
        if self._periodic is not None:
            self._periodic.cancel()
            self._periodic = None
        if self._status.state != RunState.EXECUTING or self.tree is None:
            return
        result = self.tree.tick_cycle()
        if result == TickStatus.SUCCESS:
            if self.knowledge.is_goal_satisfied():
                self._set_state(RunState.SUCCEEDED)
            else:
                self._set_state(RunState.FAILED, "plan finished but the goal does not hold")
        elif result == TickStatus.FAILURE:
            self.tree.halt()
            self.actions.cancel_all()
            reason = self.tree.failure_reason()
            logger.error(f"Plan {self._status.plan_id} failed: {reason}")
            self._set_state(RunState.FAILED, reason)
        else:
            self._periodic = self.clock.call_later(self.config.tick_period, self._request_tick)

    def execute_goal(self, timeout: Optional[float] = None) -> PlanRunStatus:
        """Plan, execute and drive the clock until the run ends (or timeout elapses)."""
        self.start_goal()
        self.clock.run_until_complete(lambda: self._status.state.terminal, timeout)
        return self._status

    def cancel(self) -> bool:
        """
        Cancel the running plan. Effects already applied stay applied.

        Returns:
            False when there was nothing to cancel.
        """
        if not self.running:
            return False
        if self.tree is not None:
            self.tree.halt()
        self.actions.cancel_all()
        logger.info(f"Plan {self._status.plan_id} cancelled")
        self._set_state(RunState.CANCELLED, "cancelled")
        return True

    def close(self) -> None:
        self.cancel()
        self.actions.close()
        if self._event_log is not None:
            self._event_log.close()
            self._event_log = None
