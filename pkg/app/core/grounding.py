"""
Grounding of durative action schemas over the objects of a problem.
"""
import logging
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from app.core.knowledge_base import EvaluationError, KnowledgeState, eval_expr
from app.models.pddl import (
    Atom,
    Domain,
    DurativeAction,
    FluentTerm,
    NegatedAtom,
    objects_of_type,
)
from app.models.plan import GroundedAction, PlanItem
from app.utils.plan_parser import PlannerError

logger = logging.getLogger(__name__)


class GroundingError(PlannerError):
    """Arity or type mismatch while grounding an action."""
    pass


def object_types(domain: Domain, state: KnowledgeState) -> Dict[str, str]:
    """Every known object (instances and domain constants) mapped to its type."""
    types = dict(domain.constant_map)
    types.update(state.instance_map)
    return types


def ground_action(domain: Domain, name: str, args: Sequence[str],
                  types: Optional[Mapping[str, str]] = None) -> GroundedAction:
    """
    Substitute objects for an action's parameters.

    Args:
        domain: The domain declaring the action.
        name: Action name.
        args: Object names, one per parameter.
        types: Known objects and their types; when given, argument types are checked.

    Returns:
        The GroundedAction, free of variables.

    Raises:
        GroundingError: Unknown action, arity mismatch, unknown object or type mismatch.
    """
    action = domain.get_action(name)
    if action is None:
        raise GroundingError(f"Unknown action '{name}'")
    args = tuple(a.lower() for a in args)
    if len(args) != action.arity:
        raise GroundingError(
            f"Arity mismatch for '{action.name}': expected {action.arity}, got {len(args)}")
    if types is not None:
        for arg, param in zip(args, action.params):
            if arg not in types:
                raise GroundingError(f"Unknown object '{arg}' in ({action.name} ...)")
            if not domain.is_subtype(types[arg], param.type):
                raise GroundingError(
                    f"Type mismatch: '{arg}' is '{types[arg]}', parameter {param.name} "
                    f"of '{action.name}' expects '{param.type}'")
    binding = {p.name: a for p, a in zip(action.params, args)}
    return GroundedAction(
        name=action.name,
        args=args,
        duration=action.duration.substitute(binding),
        cond_start=action.cond_start.substitute(binding),
        cond_overall=action.cond_overall.substitute(binding),
        cond_end=action.cond_end.substitute(binding),
        eff_start=action.eff_start.substitute(binding),
        eff_end=action.eff_end.substitute(binding),
    )


def ground_item(domain: Domain, item: PlanItem,
                types: Optional[Mapping[str, str]] = None) -> GroundedAction:
    return ground_action(domain, item.action, item.args, types)


def action_duration(action: GroundedAction, fluents: Mapping[FluentTerm, float]) -> float:
    """
    Raises:
        GroundingError: If the duration reads an unset fluent or is not positive.
    """
    try:
        value = eval_expr(action.duration, fluents)
    except EvaluationError as e:
        raise GroundingError(f"Cannot evaluate the duration of {action.label}: {e}") from e
    if value <= 0:
        raise GroundingError(f"Non-positive duration {value} for {action.label}")
    return value


def static_predicates(domain: Domain) -> FrozenSet[str]:
    """Predicates no action ever adds or deletes."""
    touched: Set[str] = set()
    for action in domain.actions:
        for effect in (action.eff_start, action.eff_end):
            touched.update(a.predicate for a in effect.adds)
            touched.update(d.predicate for d in effect.dels)
    return frozenset(p.name for p in domain.predicates if p.name not in touched)


def _static_checks(action: DurativeAction, static: FrozenSet[str]
                   ) -> List[Tuple[Atom, bool, FrozenSet[str]]]:
    checks = []
    for cond in (action.cond_start, action.cond_overall, action.cond_end):
        for lit in cond.literals:
            if isinstance(lit, Atom) and lit.predicate in static:
                checks.append((lit, True, frozenset(a for a in lit.args if a.startswith("?"))))
            elif isinstance(lit, NegatedAtom) and lit.atom.predicate in static:
                atom = lit.atom
                checks.append((atom, False, frozenset(a for a in atom.args if a.startswith("?"))))
    return checks


def ground_all(domain: Domain, state: KnowledgeState) -> List[GroundedAction]:
    """
    Ground every action over the state's objects, pruning bindings whose
    static preconditions cannot hold.

    Returns:
        Grounded actions sorted by label, so callers iterate deterministically.
    """
    static = static_predicates(domain)
    atoms = state.atoms
    grounded: List[GroundedAction] = []
    for action in domain.actions:
        candidates = [objects_of_type(domain, state.instances, p.type) for p in action.params]
        checks = _static_checks(action, static)
        names = [p.name for p in action.params]

        def extend(depth: int, binding: Dict[str, str]) -> Iterable[Tuple[str, ...]]:
            if depth == len(names):
                yield tuple(binding[n] for n in names)
                return
            var = names[depth]
            bound = set(names[:depth + 1])
            due = [c for c in checks if var in c[2] and c[2] <= bound]
            for obj in candidates[depth]:
                binding[var] = obj
                if all((atom.substitute(binding) in atoms) == positive
                       for atom, positive, _ in due):
                    yield from extend(depth + 1, binding)
            binding.pop(var, None)

        if any(not c for c in candidates):
            continue
        # variable-free static literals
        if not all((atom in atoms) == positive for atom, positive, vs in checks if not vs):
            continue
        for args in extend(0, {}):
            grounded.append(ground_action(domain, action.name, args))
    grounded.sort(key=lambda g: g.label)
    logger.debug(f"Grounded {len(grounded)} actions")
    return grounded
