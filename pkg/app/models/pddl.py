"""
PDDL 2.1-subset data model: typed domains with durative actions.

All values are immutable; a parsed Domain can be shared freely.
"""
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

ROOT_TYPE = "object"

SUPPORTED_REQUIREMENTS = (
    ":strips",
    ":typing",
    ":durative-actions",
    ":fluents",
    ":negative-preconditions",
)

COMPARISON_OPS = ("<", "<=", "=", ">=", ">")
NUMERIC_EFFECT_OPS = ("assign", "increase", "decrease")
ARITHMETIC_OPS = ("+", "-", "*", "/")

_IDENTIFIER = re.compile(r"^[a-z][a-z0-9_\-]*$")


def normalize_name(name: str) -> str:
    """
    Normalize a PDDL identifier to lower case and check its shape.

    Args:
        name: Raw identifier (a leading '?' marks a variable).

    Returns:
        The lower-cased identifier.

    Raises:
        ValueError: If the identifier is empty or malformed.
    """
    lowered = name.lower()
    bare = lowered[1:] if lowered.startswith("?") else lowered
    if not bare or not _IDENTIFIER.match(bare):
        raise ValueError(f"Invalid identifier: '{name}'")
    return lowered


def is_variable(term: str) -> bool:
    return term.startswith("?")


@dataclass(frozen=True)
class TypedParam:
    """A typed parameter such as ``?r - robot``."""
    name: str
    type: str = ROOT_TYPE

    def __str__(self) -> str:
        return f"{self.name} - {self.type}"


@dataclass(frozen=True)
class PredicateDef:
    name: str
    params: Tuple[TypedParam, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class FunctionDef:
    """A numeric fluent declaration (value domain: real)."""
    name: str
    params: Tuple[TypedParam, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True, order=True)
class Atom:
    """
    A predicate applied to terms. Terms are object names, or variables
    (leading '?') inside action schemas.
    """
    predicate: str
    args: Tuple[str, ...] = ()

    @property
    def is_ground(self) -> bool:
        return not any(is_variable(arg) for arg in self.args)

    def substitute(self, binding: Mapping[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(arg, arg) for arg in self.args))

    def __str__(self) -> str:
        if not self.args:
            return f"({self.predicate})"
        return f"({self.predicate} {' '.join(self.args)})"


GroundAtom = Atom


@dataclass(frozen=True)
class NegatedAtom:
    atom: Atom

    def substitute(self, binding: Mapping[str, str]) -> "NegatedAtom":
        return NegatedAtom(self.atom.substitute(binding))

    def __str__(self) -> str:
        return f"(not {self.atom})"


@dataclass(frozen=True)
class Number:
    value: float

    def substitute(self, binding: Mapping[str, str]) -> "Number":
        return self

    def __str__(self) -> str:
        return format_number(self.value)


@dataclass(frozen=True, order=True)
class FluentTerm:
    """A numeric fluent reference such as ``(battery_level ?r)``."""
    function: str
    args: Tuple[str, ...] = ()

    @property
    def is_ground(self) -> bool:
        return not any(is_variable(arg) for arg in self.args)

    def substitute(self, binding: Mapping[str, str]) -> "FluentTerm":
        return FluentTerm(self.function, tuple(binding.get(arg, arg) for arg in self.args))

    def __str__(self) -> str:
        if not self.args:
            return f"({self.function})"
        return f"({self.function} {' '.join(self.args)})"


@dataclass(frozen=True)
class BinaryExpr:
    op: str
    left: "NumericExpr"
    right: "NumericExpr"

    def substitute(self, binding: Mapping[str, str]) -> "BinaryExpr":
        return BinaryExpr(self.op, self.left.substitute(binding), self.right.substitute(binding))

    def __str__(self) -> str:
        return f"({self.op} {self.left} {self.right})"


NumericExpr = Union[Number, FluentTerm, BinaryExpr]


@dataclass(frozen=True)
class Comparison:
    op: str
    left: NumericExpr
    right: NumericExpr

    def substitute(self, binding: Mapping[str, str]) -> "Comparison":
        return Comparison(self.op, self.left.substitute(binding), self.right.substitute(binding))

    def negated(self) -> "Comparison":
        """Complementary comparison; '=' has no single complement."""
        flipped = {"<": ">=", "<=": ">", ">=": "<", ">": "<="}
        if self.op not in flipped:
            raise ValueError("Negated equality comparisons are not supported")
        return Comparison(flipped[self.op], self.left, self.right)

    def __str__(self) -> str:
        return f"({self.op} {self.left} {self.right})"


Literal = Union[Atom, NegatedAtom, Comparison]


@dataclass(frozen=True)
class Condition:
    """
    A conjunction of literals in negation normal form.

    An empty conjunction is vacuously true.
    """
    literals: Tuple[Literal, ...] = ()

    @property
    def positive_atoms(self) -> Tuple[Atom, ...]:
        return tuple(lit for lit in self.literals if isinstance(lit, Atom))

    @property
    def negative_atoms(self) -> Tuple[Atom, ...]:
        return tuple(lit.atom for lit in self.literals if isinstance(lit, NegatedAtom))

    @property
    def comparisons(self) -> Tuple[Comparison, ...]:
        return tuple(lit for lit in self.literals if isinstance(lit, Comparison))

    @property
    def is_empty(self) -> bool:
        return not self.literals

    def substitute(self, binding: Mapping[str, str]) -> "Condition":
        return Condition(tuple(lit.substitute(binding) for lit in self.literals))

    def __str__(self) -> str:
        if not self.literals:
            return "(and)"
        return f"(and {' '.join(str(lit) for lit in self.literals)})"


@dataclass(frozen=True)
class NumericEffect:
    op: str
    fluent: FluentTerm
    expr: NumericExpr

    def substitute(self, binding: Mapping[str, str]) -> "NumericEffect":
        return NumericEffect(self.op, self.fluent.substitute(binding), self.expr.substitute(binding))

    def __str__(self) -> str:
        return f"({self.op} {self.fluent} {self.expr})"


@dataclass(frozen=True)
class Effect:
    adds: Tuple[Atom, ...] = ()
    dels: Tuple[Atom, ...] = ()
    numeric: Tuple[NumericEffect, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not (self.adds or self.dels or self.numeric)

    def substitute(self, binding: Mapping[str, str]) -> "Effect":
        return Effect(
            adds=tuple(a.substitute(binding) for a in self.adds),
            dels=tuple(d.substitute(binding) for d in self.dels),
            numeric=tuple(n.substitute(binding) for n in self.numeric),
        )


@dataclass(frozen=True)
class DurativeAction:
    name: str
    params: Tuple[TypedParam, ...]
    duration: NumericExpr
    cond_start: Condition = field(default_factory=Condition)
    cond_overall: Condition = field(default_factory=Condition)
    cond_end: Condition = field(default_factory=Condition)
    eff_start: Effect = field(default_factory=Effect)
    eff_end: Effect = field(default_factory=Effect)

    @property
    def arity(self) -> int:
        return len(self.params)

    def signature(self) -> str:
        params = " ".join(str(p) for p in self.params)
        return f"({self.name} {params})" if params else f"({self.name})"


@dataclass(frozen=True)
class Domain:
    """
    A typed PDDL domain. ``types`` holds (child, parent) pairs in declaration order.
    """
    name: str
    requirements: Tuple[str, ...] = ()
    types: Tuple[Tuple[str, str], ...] = ()
    constants: Tuple[Tuple[str, str], ...] = ()
    predicates: Tuple[PredicateDef, ...] = ()
    functions: Tuple[FunctionDef, ...] = ()
    actions: Tuple[DurativeAction, ...] = ()

    @cached_property
    def type_parents(self) -> Dict[str, str]:
        return dict(self.types)

    @cached_property
    def predicate_map(self) -> Dict[str, PredicateDef]:
        return {p.name: p for p in self.predicates}

    @cached_property
    def function_map(self) -> Dict[str, FunctionDef]:
        return {f.name: f for f in self.functions}

    @cached_property
    def action_map(self) -> Dict[str, DurativeAction]:
        return {a.name: a for a in self.actions}

    @cached_property
    def constant_map(self) -> Dict[str, str]:
        return dict(self.constants)

    @property
    def type_names(self) -> FrozenSet[str]:
        return frozenset([ROOT_TYPE, *self.type_parents.keys()])

    def has_type(self, name: str) -> bool:
        return name == ROOT_TYPE or name in self.type_parents

    def ancestors(self, type_name: str) -> Iterator[str]:
        """Yield type_name and every ancestor up to ``object``."""
        seen = set()
        current: Optional[str] = type_name
        while current is not None and current not in seen:
            seen.add(current)
            yield current
            if current == ROOT_TYPE:
                return
            current = self.type_parents.get(current, ROOT_TYPE)

    def is_subtype(self, type_name: str, ancestor: str) -> bool:
        return ancestor in self.ancestors(type_name)

    def get_action(self, name: str) -> Optional[DurativeAction]:
        return self.action_map.get(name.lower())

    def get_predicate(self, name: str) -> Optional[PredicateDef]:
        return self.predicate_map.get(name.lower())

    def get_function(self, name: str) -> Optional[FunctionDef]:
        return self.function_map.get(name.lower())


@dataclass(frozen=True)
class Instance:
    name: str
    type: str

    def __str__(self) -> str:
        return f"{self.name} - {self.type}"


@dataclass(frozen=True)
class FluentValue:
    function: str
    args: Tuple[str, ...]
    value: float

    @property
    def term(self) -> FluentTerm:
        return FluentTerm(self.function, self.args)

    def __str__(self) -> str:
        return f"(= {self.term} {format_number(self.value)})"


@dataclass(frozen=True)
class ProblemDefinition:
    """Result of parsing a PDDL problem file."""
    name: str
    domain_name: str
    instances: Tuple[Instance, ...] = ()
    init_atoms: Tuple[Atom, ...] = ()
    init_fluents: Tuple[FluentValue, ...] = ()
    goal: Condition = field(default_factory=Condition)


def format_number(value: float) -> str:
    """Print integral floats without a fractional part; everything else round-trips via repr."""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def objects_of_type(
    domain: Domain, instances: Iterable[Instance], type_name: str
) -> List[str]:
    """All instance and constant names whose type is type_name or a descendant, sorted."""
    names = {i.name for i in instances if domain.is_subtype(i.type, type_name)}
    names.update(n for n, t in domain.constants if domain.is_subtype(t, type_name))
    return sorted(names)
