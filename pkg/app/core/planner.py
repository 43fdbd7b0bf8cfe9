"""
The Planner: pluggable plan solvers behind one ``solve`` call.

The builtin solver is a greedy best-first search over grounded actions with
an additive relaxed heuristic. External solvers are run as subprocesses and
their output is read with the plan-file parser.
"""
import heapq
import logging
import os
import subprocess
import tempfile
from dataclasses import dataclass
from itertools import count
from typing import Dict, FrozenSet, List, Optional, Tuple

from app.core.grounding import GroundingError, action_duration, ground_all
from app.core.knowledge_base import KnowledgeState, evaluate
from app.core.plan_validator import validate_plan
from app.models.pddl import Atom, Domain
from app.models.plan import EPSILON, GroundedAction, Plan, PlanItem, SolverSpec, round_time
from app.utils.pddl_printer import print_domain, print_problem
from app.utils.plan_parser import PlannerError, PlanParseError, parse_plan_file

logger = logging.getLogger(__name__)

INFINITY = float("inf")


class SolverError(PlannerError):
    """The external solver is missing, failed, timed out or printed garbage."""
    pass


class SearchBudgetExceeded(PlannerError):
    """The builtin search expanded more nodes than its budget allows."""
    pass


class UnsupportedDomainError(PlannerError):
    """The builtin solver cannot handle the domain or goal (numeric conditions)."""
    pass


@dataclass(frozen=True)
class _Encoded:
    """A grounded action with its atoms replaced by integer ids."""
    action: GroundedAction
    duration: float
    start_pos: FrozenSet[int]
    start_neg: FrozenSet[int]
    later_pos: FrozenSet[int]
    later_neg: FrozenSet[int]
    add_start: FrozenSet[int]
    del_start: FrozenSet[int]
    add_end: FrozenSet[int]
    del_end: FrozenSet[int]
    relaxed_pre: Tuple[int, ...]
    relaxed_add: Tuple[int, ...]


@dataclass
class _Node:
    atoms: FrozenSet[int]
    parent: Optional["_Node"]
    action: Optional[int]
    ready: Dict[int, float]
    last_use: Dict[int, float]
    makespan: float


class BuiltinSolver:
    """
    Greedy best-first search.

    Successors use sequential durative semantics: at-start conditions on the
    current state, then at-start effects, then over-all and at-end conditions,
    then at-end effects. Nodes are ordered by (additive heuristic, unsatisfied
    goal count, makespan of an as-soon-as-possible schedule, insertion order).
    """

    def __init__(self, node_budget: int = 200000):
        self.node_budget = node_budget

    def solve(self, domain: Domain, state: KnowledgeState) -> Optional[Plan]:
        for action in domain.actions:
            for cond in (action.cond_start, action.cond_overall, action.cond_end):
                if cond.comparisons:
                    raise UnsupportedDomainError(
                        f"Action '{action.name}' has numeric conditions; use an external solver")
        if state.goal.comparisons:
            raise UnsupportedDomainError("Goals with numeric comparisons need an external solver")

        if evaluate(state.goal, state):
            logger.info("Goal already satisfied, returning an empty plan")
            return Plan()

        self._atom_ids: Dict[Atom, int] = {}
        fluents = state.fluent_map
        actions: List[_Encoded] = []
        for grounded in ground_all(domain, state):
            try:
                duration = action_duration(grounded, fluents)
            except GroundingError as e:
                logger.debug(f"Skipping {grounded.label}: {e}")
                continue
            actions.append(self._encode(grounded, duration))
        self._actions = actions

        goal_pos = frozenset(self._id(a) for a in state.goal.positive_atoms)
        goal_neg = frozenset(self._id(a) for a in state.goal.negative_atoms)
        init = frozenset(self._id(a) for a in state.atoms)
        self._consumers: Dict[int, List[int]] = {}
        for index, enc in enumerate(actions):
            for atom in enc.relaxed_pre:
                self._consumers.setdefault(atom, []).append(index)
        self._no_pre = [i for i, enc in enumerate(actions) if not enc.relaxed_pre]

        return self._search(init, goal_pos, goal_neg)

    def _id(self, atom: Atom) -> int:
        if atom not in self._atom_ids:
            self._atom_ids[atom] = len(self._atom_ids)
        return self._atom_ids[atom]

    def _ids(self, atoms) -> FrozenSet[int]:
        return frozenset(self._id(a) for a in atoms)

    def _encode(self, action: GroundedAction, duration: float) -> _Encoded:
        add_start = self._ids(action.eff_start.adds)
        later_pos = self._ids(action.cond_overall.positive_atoms + action.cond_end.positive_atoms)
        start_pos = self._ids(action.cond_start.positive_atoms)
        return _Encoded(
            action=action,
            duration=duration,
            start_pos=start_pos,
            start_neg=self._ids(action.cond_start.negative_atoms),
            later_pos=later_pos,
            later_neg=self._ids(action.cond_overall.negative_atoms
                                + action.cond_end.negative_atoms),
            add_start=add_start,
            del_start=self._ids(action.eff_start.dels),
            add_end=self._ids(action.eff_end.adds),
            del_end=self._ids(action.eff_end.dels),
            relaxed_pre=tuple(sorted(start_pos | (later_pos - add_start))),
            relaxed_add=tuple(sorted(add_start | self._ids(action.eff_end.adds))),
        )

    def _successor(self, enc: _Encoded, atoms: FrozenSet[int]) -> Optional[FrozenSet[int]]:
        if not enc.start_pos <= atoms or enc.start_neg & atoms:
            return None
        mid = (atoms - enc.del_start) | enc.add_start
        if not enc.later_pos <= mid or enc.later_neg & mid:
            return None
        return (mid - enc.del_end) | enc.add_end

    def _h_add(self, atoms: FrozenSet[int], goal: FrozenSet[int]) -> float:
        cost: Dict[int, float] = dict.fromkeys(atoms, 0.0)
        heap = [(0.0, a) for a in atoms]
        heapq.heapify(heap)
        unsat = [len(enc.relaxed_pre) for enc in self._actions]
        acc = [0.0] * len(self._actions)

        def fire(index: int) -> None:
            c = acc[index] + 1.0
            for q in self._actions[index].relaxed_add:
                if c < cost.get(q, INFINITY):
                    cost[q] = c
                    heapq.heappush(heap, (c, q))

        for index in self._no_pre:
            fire(index)
        pending = set(goal) - set(atoms)
        while heap and pending:
            c, p = heapq.heappop(heap)
            if c > cost[p]:
                continue
            pending.discard(p)
            for index in self._consumers.get(p, ()):
                acc[index] += c
                unsat[index] -= 1
                if unsat[index] == 0:
                    fire(index)
        return sum(cost.get(g, INFINITY) for g in goal)

    def _schedule(self, node: _Node, enc: _Encoded) -> Tuple[Dict[int, float], Dict[int, float],
                                                             float]:
        start = 0.0
        for p in enc.start_pos | enc.later_pos:
            start = max(start, node.ready.get(p, 0.0))
        for q in enc.del_start | enc.del_end:
            start = max(start, node.last_use.get(q, 0.0))
        end = start + enc.duration
        ready = dict(node.ready)
        last_use = dict(node.last_use)
        for p in enc.start_pos | enc.later_pos:
            last_use[p] = max(last_use.get(p, 0.0), end)
        for q in enc.add_start | enc.add_end:
            ready[q] = end
        return ready, last_use, max(node.makespan, end)

    def _search(self, init: FrozenSet[int], goal_pos: FrozenSet[int],
                goal_neg: FrozenSet[int]) -> Optional[Plan]:
        def unsatisfied(atoms: FrozenSet[int]) -> int:
            return len(goal_pos - atoms) + len(goal_neg & atoms)

        h0 = self._h_add(init, goal_pos)
        if h0 == INFINITY:
            logger.info("Goal is unreachable in the relaxed problem")
            return None

        ticket = count()
        root = _Node(init, None, None, {}, {}, 0.0)
        open_list = [(h0, unsatisfied(init), 0.0, next(ticket), root)]
        closed = {init}
        expanded = 0
        while open_list:
            _, _, _, _, node = heapq.heappop(open_list)
            if unsatisfied(node.atoms) == 0:
                logger.info(f"Plan found after {expanded} expansions")
                return self._extract(node)
            expanded += 1
            if expanded > self.node_budget:
                raise SearchBudgetExceeded(
                    f"Search exceeded the node budget of {self.node_budget}")
            for index, enc in enumerate(self._actions):
                successor = self._successor(enc, node.atoms)
                if successor is None or successor in closed:
                    continue
                closed.add(successor)
                h = self._h_add(successor, goal_pos)
                if h == INFINITY:
                    continue
                ready, last_use, makespan = self._schedule(node, enc)
                child = _Node(successor, node, index, ready, last_use, makespan)
                heapq.heappush(open_list,
                               (h, unsatisfied(successor), makespan, next(ticket), child))
        logger.info(f"Search space exhausted after {expanded} expansions")
        return None

    def _extract(self, node: _Node) -> Plan:
        steps: List[_Encoded] = []
        while node.parent is not None:
            steps.append(self._actions[node.action])  # type: ignore[index]
            node = node.parent
        steps.reverse()
        items = []
        time = 0.0
        for enc in steps:
            items.append(PlanItem(time, enc.action.name, enc.action.args, enc.duration))
            time = round_time(time + enc.duration + EPSILON)
        return Plan(tuple(items))


class ExternalSolver:
    """
    Runs a solver executable on PDDL files written to a scratch directory.
    """

    def __init__(self, spec: SolverSpec):
        self.spec = spec

    def _command(self, domain_path: str, problem_path: str, output_path: str) -> List[str]:
        values = {"domain": domain_path, "problem": problem_path, "output": output_path}
        return [str(self.spec.executable)] + [arg.format(**values) for arg in self.spec.arguments]

    def solve(self, domain: Domain, state: KnowledgeState) -> Optional[Plan]:
        if evaluate(state.goal, state):
            return Plan()
        with tempfile.TemporaryDirectory(prefix="planexec-") as scratch:
            domain_path = os.path.join(scratch, "domain.pddl")
            problem_path = os.path.join(scratch, "problem.pddl")
            output_path = os.path.join(scratch, self.spec.output or "plan.txt")
            with open(domain_path, "w", encoding="utf-8") as f:
                f.write(print_domain(domain))
            with open(problem_path, "w", encoding="utf-8") as f:
                f.write(print_problem("problem", domain.name, state.instances, state.atoms,
                                      state.fluents, state.goal))
            command = self._command(domain_path, problem_path, output_path)
            logger.info(f"Running solver: {' '.join(command)}")
            try:
                result = subprocess.run(command, capture_output=True, text=True,
                                        timeout=self.spec.timeout)
            except FileNotFoundError as e:
                raise SolverError(f"Solver not found: {self.spec.executable}") from e
            except subprocess.TimeoutExpired as e:
                raise SolverError(f"Solver timed out after {self.spec.timeout} s") from e
            if result.returncode != 0:
                raise SolverError(
                    f"Solver exited with code {result.returncode}: {result.stderr.strip()}")
            if self.spec.output:
                if not os.path.exists(output_path):
                    return None
                with open(output_path, "r", encoding="utf-8") as f:
                    text = f.read()
            else:
                text = result.stdout

        try:
            plan = parse_plan_file(text, domain, strict=False, dialect=self.spec.dialect)
        except PlanParseError as e:
            raise SolverError(f"Unparseable solver output: {e}") from e
        if plan.is_empty:
            return None
        report = validate_plan(domain, state, plan)
        if not report.ok:
            raise SolverError(f"Solver returned an invalid plan: {report}")
        return plan


def solve(domain: Domain, state: KnowledgeState,
          solver: Optional[SolverSpec] = None) -> Optional[Plan]:
    """
    Compute a plan for the state's goal.

    Args:
        domain: The merged domain.
        state: Knowledge snapshot holding a conjunctive ground goal.
        solver: Which solver to use; the builtin one by default.

    Returns:
        A valid Plan (empty when the goal already holds), or None when no plan exists.

    Raises:
        SolverError: External solver failure.
        SearchBudgetExceeded: The builtin search ran out of budget.
        UnsupportedDomainError: Numeric conditions given to the builtin solver.
    """
    spec = solver or SolverSpec()
    if spec.kind == "external":
        return ExternalSolver(spec).solve(domain, state)
    return BuiltinSolver(spec.node_budget).solve(domain, state)


class Planner:
    """
    The planner node: one solver spec, reused for every request.
    """

    def __init__(self, spec: Optional[SolverSpec] = None):
        self.spec = spec or SolverSpec()

    def get_plan(self, domain: Domain, state: KnowledgeState) -> Optional[Plan]:
        return solve(domain, state, self.spec)

