"""
The Problem Expert: instances, ground predicates, fluent values and the goal,
always validated against the current (merged) domain.

Mutations are serialized by one lock; readers get immutable snapshots.
"""
import logging
import operator
import threading
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Tuple, Union

from app.core.domain_expert import DomainExpert
from app.models.pddl import (
    Atom,
    BinaryExpr,
    Comparison,
    Condition,
    Domain,
    Effect,
    FluentTerm,
    FluentValue,
    Instance,
    NegatedAtom,
    Number,
    NumericExpr,
    ProblemDefinition,
    is_variable,
    normalize_name,
)
from app.utils.pddl_printer import print_problem

logger = logging.getLogger(__name__)


class KnowledgeError(Exception):
    """Base class for knowledge base errors."""
    pass


class UnknownTypeError(KnowledgeError):
    pass


class ValidationError(KnowledgeError):
    """An element does not validate against the domain."""
    pass


class InstanceReferencedError(KnowledgeError):
    """An instance cannot be removed while atoms, fluents or the goal use it."""
    pass


class EvaluationError(KnowledgeError):
    """A numeric expression could not be evaluated (unset fluent, division by zero)."""
    pass


FluentMap = Mapping[FluentTerm, float]

_COMPARE = {
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
}


def eval_expr(expr: NumericExpr, fluents: FluentMap) -> float:
    """
    Evaluate a ground numeric expression.

    Raises:
        EvaluationError: On an unset fluent or a division by zero.
    """
    if isinstance(expr, Number):
        return expr.value
    if isinstance(expr, FluentTerm):
        if expr not in fluents:
            raise EvaluationError(f"Fluent {expr} is not set")
        return fluents[expr]
    left = eval_expr(expr.left, fluents)
    right = eval_expr(expr.right, fluents)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    if right == 0:
        raise EvaluationError(f"Division by zero in {expr}")
    return left / right


def evaluate_in(condition: Condition, atoms: FrozenSet[Atom], fluents: FluentMap) -> bool:
    """Closed-world evaluation of a ground condition against raw sets."""
    for lit in condition.literals:
        if isinstance(lit, Atom):
            if lit not in atoms:
                return False
        elif isinstance(lit, NegatedAtom):
            if lit.atom in atoms:
                return False
        elif not _COMPARE[lit.op](eval_expr(lit.left, fluents), eval_expr(lit.right, fluents)):
            return False
    return True


def apply_in(effect: Effect, atoms: FrozenSet[Atom], fluents: FluentMap
             ) -> Tuple[FrozenSet[Atom], Dict[FluentTerm, float]]:
    """
    Apply a ground effect to raw sets: deletes before adds, numeric right-hand
    sides read from the pre-state.
    """
    updates: Dict[FluentTerm, float] = {}
    for num in effect.numeric:
        rhs = eval_expr(num.expr, fluents)
        if num.op == "assign":
            updates[num.fluent] = rhs
        else:
            current = eval_expr(num.fluent, fluents)
            updates[num.fluent] = current + rhs if num.op == "increase" else current - rhs
    new_atoms = (atoms - frozenset(effect.dels)) | frozenset(effect.adds)
    new_fluents = dict(fluents)
    new_fluents.update(updates)
    return new_atoms, new_fluents


@dataclass(frozen=True)
class KnowledgeState:
    """
    An immutable snapshot of the problem.
    """
    instances: Tuple[Instance, ...] = ()
    atoms: FrozenSet[Atom] = frozenset()
    fluents: Tuple[FluentValue, ...] = ()
    goal: Condition = field(default_factory=Condition)
    version: int = 0

    @cached_property
    def instance_map(self) -> Dict[str, str]:
        return {i.name: i.type for i in self.instances}

    @cached_property
    def fluent_map(self) -> Dict[FluentTerm, float]:
        return {f.term: f.value for f in self.fluents}

    def has_atom(self, atom: Atom) -> bool:
        return atom in self.atoms

    def get_fluent(self, term: FluentTerm) -> Optional[float]:
        return self.fluent_map.get(term)

    @classmethod
    def from_problem(cls, problem: ProblemDefinition) -> "KnowledgeState":
        return cls(
            instances=problem.instances,
            atoms=frozenset(problem.init_atoms),
            fluents=problem.init_fluents,
            goal=problem.goal,
        )


def evaluate(condition: Condition, state: KnowledgeState) -> bool:
    """
    Evaluate a ground condition under the closed-world assumption.

    Raises:
        EvaluationError: If a comparison reads an unset fluent.
    """
    return evaluate_in(condition, state.atoms, state.fluent_map)


def apply(effect: Effect, state: KnowledgeState) -> KnowledgeState:
    """Apply a ground effect, returning the successor snapshot."""
    atoms, fluents = apply_in(effect, state.atoms, state.fluent_map)
    values = tuple(
        FluentValue(term.function, term.args, value) for term, value in sorted(fluents.items()))
    return replace(state, atoms=atoms, fluents=values, version=state.version + 1)


def is_goal_satisfied(state: KnowledgeState) -> bool:
    return evaluate(state.goal, state)


def _fluent_values(fluents: Mapping[FluentTerm, float]) -> Tuple[FluentValue, ...]:
    return tuple(FluentValue(t.function, t.args, v) for t, v in sorted(fluents.items()))


class KnowledgeBase:
    """
    Mutable store of the problem, validated against a DomainExpert.

    Every mutation swaps in a new KnowledgeState under the lock, so a
    snapshot handed out earlier never changes.
    """

    def __init__(self, domain: Union[Domain, DomainExpert]):
        self.domain_expert = domain if isinstance(domain, DomainExpert) else DomainExpert([domain])
        self._lock = threading.RLock()
        self._state = KnowledgeState()

    @property
    def domain(self) -> Domain:
        return self.domain_expert.domain

    def snapshot(self) -> KnowledgeState:
        with self._lock:
            return self._state

    def _commit(self, **changes) -> KnowledgeState:
        self._state = replace(self._state, version=self._state.version + 1, **changes)
        return self._state

    # Validation -----------------------------------------------------------

    def _object_type(self, name: str, objects: Mapping[str, str]) -> str:
        if is_variable(name):
            raise ValidationError(f"Non-ground term '{name}'")
        if name in objects:
            return objects[name]
        constant = self.domain.constant_map.get(name)
        if constant is None:
            raise ValidationError(f"Unknown object '{name}'")
        return constant

    def _check_args(self, what: str, args: Tuple[str, ...], params, objects) -> None:
        if len(args) != len(params):
            raise ValidationError(
                f"Arity mismatch for '{what}': expected {len(params)}, got {len(args)}")
        for arg, param in zip(args, params):
            actual = self._object_type(arg, objects)
            if not self.domain.is_subtype(actual, param.type):
                raise ValidationError(
                    f"Type mismatch: '{arg}' is '{actual}', '{what}' expects '{param.type}'")

    def validate_atom(self, atom: Atom, state: Optional[KnowledgeState] = None) -> None:
        """
        Raises:
            ValidationError: Unknown predicate, arity or argument type mismatch.
        """
        pred = self.domain.get_predicate(atom.predicate)
        if pred is None:
            raise ValidationError(f"Unknown predicate '{atom.predicate}'")
        objects = (state or self._state).instance_map
        self._check_args(atom.predicate, atom.args, pred.params, objects)

    def validate_fluent(self, term: FluentTerm, state: Optional[KnowledgeState] = None) -> None:
        fdef = self.domain.get_function(term.function)
        if fdef is None:
            raise ValidationError(f"Unknown function '{term.function}'")
        objects = (state or self._state).instance_map
        self._check_args(term.function, term.args, fdef.params, objects)

    def _validate_expr(self, expr: NumericExpr) -> None:
        if isinstance(expr, FluentTerm):
            self.validate_fluent(expr)
        elif isinstance(expr, BinaryExpr):
            self._validate_expr(expr.left)
            self._validate_expr(expr.right)

    def validate_condition(self, condition: Condition) -> None:
        for lit in condition.literals:
            if isinstance(lit, Atom):
                self.validate_atom(lit)
            elif isinstance(lit, NegatedAtom):
                self.validate_atom(lit.atom)
            else:
                self._validate_expr(lit.left)
                self._validate_expr(lit.right)

    # Instances ------------------------------------------------------------

    def add_instance(self, name: str, type_name: str) -> KnowledgeState:
        """
        Add an instance; adding an identical (name, type) again is a no-op.

        Raises:
            UnknownTypeError: If the type is not declared in the domain.
            ValidationError: If the name already exists with a different type.
        """
        try:
            name = normalize_name(name)
            type_name = normalize_name(type_name)
        except ValueError as e:
            raise ValidationError(str(e)) from e
        if is_variable(name):
            raise ValidationError(f"Instance names cannot be variables: '{name}'")
        with self._lock:
            if not self.domain.has_type(type_name):
                raise UnknownTypeError(f"Unknown type '{type_name}'")
            existing = self._state.instance_map.get(name, self.domain.constant_map.get(name))
            if existing is not None:
                if existing != type_name:
                    raise ValidationError(
                        f"Instance '{name}' already exists with type '{existing}'")
                return self._state
            logger.debug(f"Instance added: {name} - {type_name}")
            return self._commit(instances=self._state.instances + (Instance(name, type_name),))

    def remove_instance(self, name: str) -> KnowledgeState:
        """
        Raises:
            ValidationError: If the instance does not exist.
            InstanceReferencedError: If an atom, fluent or the goal references it.
        """
        name = name.lower()
        with self._lock:
            state = self._state
            if name not in state.instance_map:
                raise ValidationError(f"Unknown instance '{name}'")
            if any(name in atom.args for atom in state.atoms):
                raise InstanceReferencedError(f"Instance '{name}' is referenced by a predicate")
            if any(name in f.args for f in state.fluents):
                raise InstanceReferencedError(f"Instance '{name}' is referenced by a function")
            if name in _condition_objects(state.goal):
                raise InstanceReferencedError(f"Instance '{name}' is referenced by the goal")
            return self._commit(instances=tuple(i for i in state.instances if i.name != name))

    # Atoms and fluents ----------------------------------------------------

    def add_atom(self, atom: Atom) -> bool:
        """
        Add a ground atom.

        Returns:
            True if the atom was new, False if it was already present.
        """
        with self._lock:
            self.validate_atom(atom)
            if atom in self._state.atoms:
                return False
            self._commit(atoms=self._state.atoms | {atom})
            return True

    def remove_atom(self, atom: Atom) -> bool:
        """
        Returns:
            True if the atom was removed, False if it was not present.
        """
        with self._lock:
            if atom not in self._state.atoms:
                return False
            self._commit(atoms=self._state.atoms - {atom})
            return True

    def set_fluent(self, value: FluentValue) -> KnowledgeState:
        with self._lock:
            self.validate_fluent(value.term)
            fluents = dict(self._state.fluent_map)
            fluents[value.term] = float(value.value)
            return self._commit(fluents=_fluent_values(fluents))

    def remove_fluent(self, term: FluentTerm) -> bool:
        with self._lock:
            fluents = dict(self._state.fluent_map)
            if fluents.pop(term, None) is None:
                return False
            self._commit(fluents=_fluent_values(fluents))
            return True

    # Goal -----------------------------------------------------------------

    def set_goal(self, goal: Condition) -> KnowledgeState:
        """
        Raises:
            ValidationError: If the goal is not ground or does not validate.
        """
        with self._lock:
            if _condition_objects(goal, variables=True):
                raise ValidationError(f"Goal must be ground: {goal}")
            self.validate_condition(goal)
            logger.info(f"Goal set: {goal}")
            return self._commit(goal=goal)

    def clear_goal(self) -> KnowledgeState:
        with self._lock:
            return self._commit(goal=Condition())

    def is_goal_satisfied(self) -> bool:
        return is_goal_satisfied(self.snapshot())

    # Runtime evaluation ---------------------------------------------------

    def evaluate(self, condition: Condition) -> bool:
        return evaluate(condition, self.snapshot())

    def apply(self, effect: Effect) -> KnowledgeState:
        """Apply a ground effect atomically."""
        with self._lock:
            updated = apply(effect, self._state)
            self._state = updated
            return updated

    # Bulk -----------------------------------------------------------------

    def load_problem(self, problem: ProblemDefinition) -> KnowledgeState:
        with self._lock:
            for inst in problem.instances:
                self.add_instance(inst.name, inst.type)
            for atom in problem.init_atoms:
                self.add_atom(atom)
            for fv in problem.init_fluents:
                self.set_fluent(fv)
            self.set_goal(problem.goal)
            return self._state

    def reset(self, state: Optional[KnowledgeState] = None) -> KnowledgeState:
        """Replace the whole store; the new content is validated first."""
        with self._lock:
            previous = self._state
            self._state = KnowledgeState(version=previous.version + 1)
            if state is None:
                return self._state
            try:
                self.load_problem(ProblemDefinition(
                    name="reset", domain_name=self.domain.name, instances=state.instances,
                    init_atoms=tuple(sorted(state.atoms)), init_fluents=state.fluents,
                    goal=state.goal))
            except KnowledgeError:
                self._state = previous
                raise
            return self._state

    def to_pddl(self, problem_name: str = "problem") -> str:
        state = self.snapshot()
        return print_problem(problem_name, self.domain.name, state.instances, state.atoms,
                             state.fluents, state.goal)


def _expr_objects(expr: NumericExpr) -> Iterable[str]:
    if isinstance(expr, FluentTerm):
        yield from expr.args
    elif isinstance(expr, BinaryExpr):
        yield from _expr_objects(expr.left)
        yield from _expr_objects(expr.right)


def _condition_objects(condition: Condition, variables: bool = False) -> FrozenSet[str]:
    """Object names (or, with variables=True, only variable names) used by a condition."""
    names = set()
    for lit in condition.literals:
        if isinstance(lit, Atom):
            names.update(lit.args)
        elif isinstance(lit, NegatedAtom):
            names.update(lit.atom.args)
        elif isinstance(lit, Comparison):
            names.update(_expr_objects(lit.left))
            names.update(_expr_objects(lit.right))
    if variables:
        return frozenset(n for n in names if is_variable(n))
    return frozenset(names)
