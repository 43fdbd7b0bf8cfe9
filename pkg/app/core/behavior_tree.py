"""
Behavior tree compiled from a plan graph, and its tick semantics.

Each plan action becomes an action unit: wait for the at start requirements,
apply the at start effects, execute while the over all requirements keep
holding, check the at end requirements and apply the at end effects. Units
are chained along the graph edges; independent flows run under Parallel nodes.
"""
import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Tuple

from app.core.knowledge_base import KnowledgeBase, KnowledgeError
from app.core.plan_graph import PlanGraph, PlanGraphError
from app.models.pddl import Condition
from app.models.plan import GroundedAction
from app.models.status import ActionPhase, TickStatus
from app.utils.resource_loader import get_resource_loader

logger = logging.getLogger(__name__)

SUCCESS = TickStatus.SUCCESS
FAILURE = TickStatus.FAILURE
RUNNING = TickStatus.RUNNING

_FAILURE_ORDER = itertools.count()


class TimeSource(Protocol):
    def now(self) -> float: ...


@dataclass
class ActionUnitState:
    """Shared record of one plan action's progress. Phases only move forward."""
    index: int
    label: str
    phase: ActionPhase = ActionPhase.PENDING
    completion: float = 0.0
    message: str = ""
    version: int = 0
    failure_order: Optional[int] = None
    listener: Optional[Callable[["ActionUnitState"], None]] = field(default=None, repr=False)

    def advance(self, phase: ActionPhase, message: str = "") -> None:
        if phase == self.phase:
            return
        if self.phase.finished or phase.rank < self.phase.rank:
            raise ValueError(f"Illegal phase change {self.phase.value} -> {phase.value} "
                             f"for {self.label}")
        self.phase = phase
        if phase == ActionPhase.FINISHED_FAIL:
            self.failure_order = next(_FAILURE_ORDER)
        if phase == ActionPhase.FINISHED_OK:
            self.completion = 1.0
        if message:
            self.message = message
        self._changed()

    def fail(self, message: str) -> None:
        if not self.phase.finished:
            self.advance(ActionPhase.FINISHED_FAIL, message)

    def report(self, completion: float) -> None:
        completion = min(max(completion, 0.0), 1.0)
        if completion != self.completion and not self.phase.finished:
            self.completion = completion
            self._changed()

    def _changed(self) -> None:
        self.version += 1
        if self.listener is not None:
            self.listener(self)


class ActionDriver(ABC):
    """Runs the real-world part of one action on behalf of an ExecuteAction leaf."""

    @abstractmethod
    def start(self) -> None:
        pass

    @abstractmethod
    def poll(self) -> TickStatus:
        pass

    @abstractmethod
    def cancel(self) -> None:
        pass


@dataclass
class ActionUnit:
    index: int
    action: GroundedAction
    state: ActionUnitState
    executions: int = 0

    @property
    def label(self) -> str:
        return self.action.label


DriverFactory = Callable[[ActionUnit], ActionDriver]


@dataclass
class TreeContext:
    """What the leaves need at tick time."""
    knowledge: KnowledgeBase
    driver_factory: DriverFactory
    clock: Optional[TimeSource] = None
    wait_timeout: Optional[float] = None
    events: List[Tuple[str, int]] = field(default_factory=list)

    def record(self, event: str, unit: ActionUnit) -> None:
        self.events.append((event, unit.index))
        logger.debug(f"{event} {unit.label}")


class BTNode:
    kind = "Node"
    shape = "box"

    def __init__(self) -> None:
        self.status: Optional[TickStatus] = None

    @property
    def children(self) -> List["BTNode"]:
        return []

    @property
    def name(self) -> str:
        return self.kind

    def tick(self) -> TickStatus:
        self.status = self._tick()
        return self.status

    def _tick(self) -> TickStatus:
        raise NotImplementedError

    def halt(self) -> None:
        for child in self.children:
            child.halt()


class Sequence(BTNode):
    """Ticks children in order and remembers the ones that already succeeded."""
    kind = "Sequence"

    def __init__(self, children: List[BTNode]):
        super().__init__()
        self._children = list(children)
        self._current = 0
        self._failed = False

    @property
    def children(self) -> List[BTNode]:
        return self._children

    def _tick(self) -> TickStatus:
        if self._failed:
            return FAILURE
        while self._current < len(self._children):
            status = self._children[self._current].tick()
            if status == RUNNING:
                return RUNNING
            if status == FAILURE:
                self._failed = True
                return FAILURE
            self._current += 1
        return SUCCESS

    def halt(self) -> None:
        if self._current < len(self._children):
            self._children[self._current].halt()


class Parallel(BTNode):
    """Ticks every unfinished child; fails as soon as one child fails."""
    kind = "Parallel"
    shape = "parallelogram"

    def __init__(self, children: List[BTNode]):
        super().__init__()
        self._children = list(children)
        self._results: Dict[int, TickStatus] = {}

    @property
    def children(self) -> List[BTNode]:
        return self._children

    def _tick(self) -> TickStatus:
        if FAILURE in self._results.values():
            return FAILURE
        for i, child in enumerate(self._children):
            if i in self._results:
                continue
            status = child.tick()
            if status != RUNNING:
                self._results[i] = status
            if status == FAILURE:
                self.halt()
                return FAILURE
        if len(self._results) == len(self._children):
            return SUCCESS
        return RUNNING

    def halt(self) -> None:
        for i, child in enumerate(self._children):
            if i not in self._results:
                child.halt()


class ReactiveCheckPair(BTNode):
    """Re-evaluates the check before every tick of the body; a failed check halts the body."""
    kind = "ReactiveCheckPair"
    shape = "diamond"

    def __init__(self, check: BTNode, body: BTNode):
        super().__init__()
        self.check = check
        self.body = body
        self._result: Optional[TickStatus] = None

    @property
    def children(self) -> List[BTNode]:
        return [self.check, self.body]

    def _tick(self) -> TickStatus:
        if self._result is not None:
            return self._result
        if self.check.tick() == FAILURE:
            self.body.halt()
            self._result = FAILURE
            return FAILURE
        status = self.body.tick()
        if status != RUNNING:
            self._result = status
        return status

    def halt(self) -> None:
        if self._result is None:
            self.body.halt()


class UnitLeaf(BTNode):
    shape = "ellipse"

    def __init__(self, unit: ActionUnit, context: TreeContext):
        super().__init__()
        self.unit = unit
        self.context = context

    @property
    def name(self) -> str:
        return f"{self.kind} {self.unit.label}"

    def _holds(self, condition: Condition, what: str) -> Optional[bool]:
        """True/False, or None after failing the unit on an evaluation error."""
        try:
            return self.context.knowledge.evaluate(condition)
        except KnowledgeError as e:
            self.unit.state.fail(f"{what} of {self.unit.label}: {e}")
            return None

    def _apply(self, which: str) -> bool:
        effect = getattr(self.unit.action, which)
        try:
            self.context.knowledge.apply(effect)
        except KnowledgeError as e:
            self.unit.state.fail(f"Cannot apply effects of {self.unit.label}: {e}")
            return False
        self.context.record(which, self.unit)
        return True


class WaitAtStartReqs(UnitLeaf):
    kind = "WaitAtStartReqs"

    def __init__(self, unit: ActionUnit, context: TreeContext):
        super().__init__(unit, context)
        self._since: Optional[float] = None

    def _tick(self) -> TickStatus:
        holds = self._holds(self.unit.action.cond_start, "at start requirements")
        if holds is None:
            return FAILURE
        if holds:
            self.context.record("start_reqs", self.unit)
            return SUCCESS
        clock, timeout = self.context.clock, self.context.wait_timeout
        if clock is not None and timeout is not None:
            if self._since is None:
                self._since = clock.now()
            elif clock.now() - self._since >= timeout:
                self.unit.state.fail(
                    f"Timed out waiting for at start requirements of {self.unit.label}")
                return FAILURE
        return RUNNING


class ApplyAtStartEffects(UnitLeaf):
    kind = "ApplyAtStartEffects"

    def _tick(self) -> TickStatus:
        if not self._apply("eff_start"):
            return FAILURE
        self.unit.state.advance(ActionPhase.STARTED)
        return SUCCESS


class CheckOverAll(UnitLeaf):
    kind = "CheckOverAll"

    def _tick(self) -> TickStatus:
        holds = self._holds(self.unit.action.cond_overall, "over all requirements")
        if holds is None:
            return FAILURE
        if not holds:
            self.unit.state.fail(
                f"Over all requirements of {self.unit.label} no longer hold: "
                f"{self.unit.action.cond_overall}")
            return FAILURE
        return SUCCESS


class ExecuteAction(UnitLeaf):
    kind = "ExecuteAction"

    def __init__(self, unit: ActionUnit, context: TreeContext):
        super().__init__(unit, context)
        self._driver: Optional[ActionDriver] = None
        self._result: Optional[TickStatus] = None

    def _tick(self) -> TickStatus:
        if self._result is not None:
            return self._result
        if self._driver is None:
            self._driver = self.context.driver_factory(self.unit)
            self.unit.executions += 1
            self.unit.state.advance(ActionPhase.EXECUTING)
            self.context.record("execute", self.unit)
            self._driver.start()
        status = self._driver.poll()
        if status == FAILURE:
            self.unit.state.fail(self.unit.state.message or f"{self.unit.label} failed")
        if status != RUNNING:
            self._result = status
        return status

    def halt(self) -> None:
        if self._driver is not None and self._result is None:
            logger.info(f"Cancelling {self.unit.label}")
            self._driver.cancel()
            self._result = FAILURE
            self.unit.state.fail(f"{self.unit.label} cancelled")


class CheckAtEndReqs(UnitLeaf):
    kind = "CheckAtEndReqs"

    def _tick(self) -> TickStatus:
        holds = self._holds(self.unit.action.cond_end, "at end requirements")
        if holds is None:
            return FAILURE
        if not holds:
            self.unit.state.fail(f"At end requirements of {self.unit.label} do not hold: "
                                 f"{self.unit.action.cond_end}")
            return FAILURE
        return SUCCESS


class ApplyAtEndEffects(UnitLeaf):
    kind = "ApplyAtEndEffects"

    def _tick(self) -> TickStatus:
        if not self._apply("eff_end"):
            return FAILURE
        self.unit.state.advance(ActionPhase.FINISHED_OK)
        return SUCCESS


class WaitForCompletion(UnitLeaf):
    kind = "WaitForCompletion"
    shape = "octagon"

    def _tick(self) -> TickStatus:
        phase = self.unit.state.phase
        if phase == ActionPhase.FINISHED_OK:
            return SUCCESS
        if phase == ActionPhase.FINISHED_FAIL:
            return FAILURE
        return RUNNING

    def halt(self) -> None:
        pass


class ActionUnitNode(Sequence):
    kind = "ActionUnit"

    def __init__(self, unit: ActionUnit, children: List[BTNode]):
        super().__init__(children)
        self.unit = unit

    @property
    def name(self) -> str:
        return f"{self.kind} {self.unit.label}"

    def _tick(self) -> TickStatus:
        status = super()._tick()
        if status == FAILURE:
            self.unit.state.fail(f"{self.unit.label} failed")
        return status

    def halt(self) -> None:
        super().halt()
        if self.unit.state.phase != ActionPhase.PENDING:
            self.unit.state.fail(f"{self.unit.label} halted")


def expand_action_unit(unit: ActionUnit, context: TreeContext) -> ActionUnitNode:
    return ActionUnitNode(unit, [
        WaitAtStartReqs(unit, context),
        ApplyAtStartEffects(unit, context),
        ReactiveCheckPair(CheckOverAll(unit, context), ExecuteAction(unit, context)),
        CheckAtEndReqs(unit, context),
        ApplyAtEndEffects(unit, context),
    ])


class BehaviorTree:
    """A compiled tree plus the per-action records its leaves share."""

    def __init__(self, root: BTNode, units: List[ActionUnit], context: TreeContext):
        self.root = root
        self.units = units
        self.context = context
        self.status: TickStatus = RUNNING

    def _progress(self) -> Tuple[int, int]:
        return (sum(u.state.version for u in self.units), len(self.context.events))

    def tick(self) -> TickStatus:
        self.status = self.root.tick()
        return self.status

    def tick_cycle(self, max_rounds: int = 1000) -> TickStatus:
        """
        Tick the root until it finishes or a tick changes nothing, so effects
        applied by one flow are seen by the others in the same cycle.
        """
        for _ in range(max_rounds):
            before = self._progress()
            status = self.tick()
            if status != RUNNING or self._progress() == before:
                return status
        logger.warning(f"Tick cycle still progressing after {max_rounds} rounds")
        return self.status

    def halt(self) -> None:
        self.root.halt()
        for unit in self.units:
            unit.state.fail(f"{unit.label} cancelled")

    def failure_reason(self) -> str:
        failed = sorted((u for u in self.units if u.state.phase == ActionPhase.FINISHED_FAIL),
                        key=lambda u: u.state.failure_order or 0)
        if not failed:
            return "behavior tree failed"
        return failed[0].state.message or f"{failed[0].label} failed"


def graph_to_bt(graph: PlanGraph, context: TreeContext) -> BehaviorTree:
    """
    Compile a plan graph into a behavior tree.

    Each flow is a Sequence. A node with several predecessors is expanded only
    under its smallest predecessor; its other predecessors' branches end in a
    WaitForCompletion leaf, and the owning branch waits for them before the unit.

    Raises:
        PlanGraphError: If the graph has a cycle.
    """
    graph.topological_order()
    units = [ActionUnit(n.index, n.action, ActionUnitState(n.index, n.label))
             for n in graph.nodes]

    def owner(index: int) -> Optional[int]:
        preds = graph.predecessors(index)
        return preds[0] if preds else None

    def subtree(index: int) -> BTNode:
        gates: List[BTNode] = [WaitForCompletion(units[p], context)
                               for p in graph.predecessors(index) if p != owner(index)]
        branch: List[BTNode] = [
            subtree(s) if owner(s) == index else WaitForCompletion(units[s], context)
            for s in graph.successors(index)
        ]
        children = gates + [expand_action_unit(units[index], context)]
        if len(branch) == 1:
            children.append(branch[0])
        elif branch:
            children.append(Parallel(branch))
        return children[0] if len(children) == 1 else Sequence(children)

    flows = [subtree(n.index) for n in graph.nodes if graph.in_degree(n.index) == 0]
    if not flows and graph.nodes:
        raise PlanGraphError("Plan graph has no root")
    root: BTNode
    if not flows:
        root = Sequence([])
    else:
        root = flows[0] if len(flows) == 1 else Parallel(flows)
    logger.info(f"Behavior tree with {len(units)} action units over {len(flows)} flows")
    return BehaviorTree(root, units, context)


def iter_nodes(root: BTNode) -> List[Tuple[int, BTNode]]:
    """Pre-order (depth, node) pairs."""
    out: List[Tuple[int, BTNode]] = []
    stack = [(0, root)]
    while stack:
        depth, node = stack.pop()
        out.append((depth, node))
        stack.extend((depth + 1, c) for c in reversed(node.children))
    return out


def dump_tree(root: BTNode) -> str:
    lines = []
    for depth, node in iter_nodes(root):
        status = f" [{node.status.value}]" if node.status is not None else ""
        lines.append(f"{'  ' * depth}{node.name}{status}")
    return "\n".join(lines) + "\n"


def tree_to_dot(root: BTNode) -> str:
    ids = {id(node): i for i, (_, node) in enumerate(iter_nodes(root))}
    nodes = [{"id": ids[id(node)], "label": node.name, "shape": node.shape}
             for _, node in iter_nodes(root)]
    edges = [(ids[id(node)], ids[id(child)])
             for _, node in iter_nodes(root) for child in node.children]
    return get_resource_loader().render("behavior_tree.dot.j2", {"nodes": nodes, "edges": edges})
