"""
Timeline simulation of a plan, used to check solver output.

At every timestamp the actions ending there are processed before the actions
starting there. Within one group all conditions are checked first, then the
effects are applied in plan order.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

from app.core.grounding import GroundingError, ground_item, object_types
from app.core.knowledge_base import EvaluationError, KnowledgeState, apply_in, evaluate_in
from app.models.pddl import Atom, Condition, Domain, FluentTerm
from app.models.plan import GroundedAction, Plan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Violation:
    time: float
    item_index: Optional[int]
    message: str

    def __str__(self) -> str:
        where = f"item {self.item_index}" if self.item_index is not None else "goal"
        return f"t={self.time:.3f} ({where}): {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violation: Optional[Violation] = None
    final_atoms: FrozenSet[Atom] = frozenset()
    final_fluents: Dict[FluentTerm, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violation is None

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "ok" if self.ok else str(self.violation)


class _Failed(Exception):
    def __init__(self, violation: Violation):
        self.violation = violation


def _check(condition: Condition, atoms, fluents, time: float, index: int, what: str,
           action: GroundedAction) -> None:
    try:
        holds = evaluate_in(condition, atoms, fluents)
    except EvaluationError as e:
        raise _Failed(Violation(time, index, f"{what} of {action.label}: {e}"))
    if not holds:
        missing = [str(lit) for lit in condition.literals
                   if not evaluate_in(Condition((lit,)), atoms, fluents)]
        raise _Failed(Violation(
            time, index, f"{what} of {action.label} does not hold: {' '.join(missing)}"))


def validate_plan(domain: Domain, state: KnowledgeState, plan: Plan) -> ValidationReport:
    """
    Simulate a plan from a state and check every condition and the goal.

    Args:
        domain: The domain.
        state: Initial knowledge (instances, atoms, fluents, goal).
        plan: The plan to check.

    Returns:
        A report that is ok, or names the first violation with its timestamp.
    """
    types = object_types(domain, state)
    atoms = state.atoms
    fluents: Dict[FluentTerm, float] = dict(state.fluent_map)

    grounded: List[GroundedAction] = []
    for index, item in enumerate(plan):
        try:
            grounded.append(ground_item(domain, item, types))
        except GroundingError as e:
            return ValidationReport(Violation(item.time, index, str(e)), atoms, fluents)

    starts = [item.time for item in plan]
    ends = [item.end for item in plan]
    timeline = sorted(set(starts) | set(ends))

    def check_running(time: float, include_starting: bool) -> None:
        for i, action in enumerate(grounded):
            started = starts[i] <= time if include_starting else starts[i] < time
            if started and time < ends[i]:
                _check(action.cond_overall, atoms, fluents, time, i, "over all condition",
                       action)

    try:
        for time in timeline:
            ending = [i for i in range(len(grounded)) if ends[i] == time]
            for i in ending:
                _check(grounded[i].cond_end, atoms, fluents, time, i, "at end condition",
                       grounded[i])
            for i in ending:
                atoms, fluents = _apply(grounded[i], "eff_end", atoms, fluents, time, i)
            if ending:
                check_running(time, include_starting=False)

            starting = [i for i in range(len(grounded)) if starts[i] == time]
            for i in starting:
                _check(grounded[i].cond_start, atoms, fluents, time, i, "at start condition",
                       grounded[i])
            for i in starting:
                atoms, fluents = _apply(grounded[i], "eff_start", atoms, fluents, time, i)
            if starting:
                check_running(time, include_starting=True)

        goal_time = timeline[-1] if timeline else 0.0
        try:
            reached = evaluate_in(state.goal, atoms, fluents)
        except EvaluationError as e:
            raise _Failed(Violation(goal_time, None, f"goal: {e}"))
        if not reached:
            raise _Failed(Violation(goal_time, None, f"goal {state.goal} not satisfied"))
    except _Failed as failed:
        logger.debug(f"Plan violation: {failed.violation}")
        return ValidationReport(failed.violation, atoms, fluents)
    return ValidationReport(None, atoms, fluents)


def _apply(action: GroundedAction, which: str, atoms, fluents, time: float, index: int
           ) -> Tuple[FrozenSet[Atom], Dict[FluentTerm, float]]:
    try:
        return apply_in(getattr(action, which), atoms, fluents)
    except EvaluationError as e:
        raise _Failed(Violation(time, index, f"effect of {action.label}: {e}"))
