"""
Canonical PDDL text output for domains and problems.

Declaration order is preserved so that printing then re-parsing yields an
equal value.
"""
from typing import Iterable, List, Sequence, Tuple

from app.models.pddl import (
    ROOT_TYPE,
    Atom,
    Condition,
    Domain,
    DurativeAction,
    Effect,
    FluentValue,
    Instance,
    TypedParam,
)

INDENT = "  "


def _typed_names(pairs: Sequence[Tuple[str, str]]) -> str:
    """Group consecutive names sharing a type: ``a b - t c - u``."""
    chunks: List[str] = []
    i = 0
    while i < len(pairs):
        type_name = pairs[i][1]
        names = []
        while i < len(pairs) and pairs[i][1] == type_name:
            names.append(pairs[i][0])
            i += 1
        chunks.append(f"{' '.join(names)} - {type_name}")
    return " ".join(chunks)


def _params(params: Sequence[TypedParam]) -> str:
    return _typed_names([(p.name, p.type) for p in params])


def print_signature(name: str, params: Sequence[TypedParam]) -> str:
    """``(name ?a - t ?b - u)`` as declared in :predicates or :functions."""
    return f"({name} {_params(params)})" if params else f"({name})"


def _timed_condition(action: DurativeAction) -> str:
    parts: List[str] = []
    for spec, cond in (("at start", action.cond_start), ("over all", action.cond_overall),
                       ("at end", action.cond_end)):
        parts.extend(f"({spec} {lit})" for lit in cond.literals)
    return f"(and {' '.join(parts)})" if parts else "(and)"


def _effect_literals(effect: Effect) -> List[str]:
    out = [str(a) for a in effect.adds]
    out.extend(f"(not {d})" for d in effect.dels)
    out.extend(str(n) for n in effect.numeric)
    return out


def _timed_effect(action: DurativeAction) -> str:
    parts: List[str] = []
    for spec, effect in (("at start", action.eff_start), ("at end", action.eff_end)):
        parts.extend(f"({spec} {lit})" for lit in _effect_literals(effect))
    return f"(and {' '.join(parts)})" if parts else "(and)"


def print_action(action: DurativeAction) -> str:
    lines = [
        f"{INDENT}(:durative-action {action.name}",
        f"{INDENT * 2}:parameters ({_params(action.params)})",
        f"{INDENT * 2}:duration (= ?duration {action.duration})",
        f"{INDENT * 2}:condition {_timed_condition(action)}",
        f"{INDENT * 2}:effect {_timed_effect(action)}",
        f"{INDENT})",
    ]
    return "\n".join(lines)


def print_domain(domain: Domain) -> str:
    """
    Print a domain as PDDL text.

    Args:
        domain: The domain to print.

    Returns:
        PDDL source that parse_domain reads back into an equal Domain.
    """
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"{INDENT}(:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append(f"{INDENT}(:types {_typed_names(list(domain.types))})")
    if domain.constants:
        lines.append(f"{INDENT}(:constants {_typed_names(list(domain.constants))})")
    if domain.predicates:
        lines.append(f"{INDENT}(:predicates")
        for pred in domain.predicates:
            lines.append(f"{INDENT * 2}{print_signature(pred.name, pred.params)}")
        lines.append(f"{INDENT})")
    if domain.functions:
        lines.append(f"{INDENT}(:functions")
        for func in domain.functions:
            lines.append(f"{INDENT * 2}{print_signature(func.name, func.params)}")
        lines.append(f"{INDENT})")
    for action in domain.actions:
        lines.append(print_action(action))
    lines.append(")")
    return "\n".join(lines) + "\n"


def print_problem(name: str, domain_name: str, instances: Iterable[Instance],
                  atoms: Iterable[Atom], fluents: Iterable[FluentValue],
                  goal: Condition) -> str:
    """
    Print a problem as PDDL text.

    Instances keep their insertion order; atoms and fluents are sorted so the
    output is stable across runs.
    """
    instance_pairs = [(i.name, i.type or ROOT_TYPE) for i in instances]
    lines = [f"(define (problem {name})", f"{INDENT}(:domain {domain_name})"]
    if instance_pairs:
        lines.append(f"{INDENT}(:objects {_typed_names(instance_pairs)})")
    init = [str(a) for a in sorted(atoms)]
    init.extend(str(f) for f in sorted(fluents, key=lambda f: (f.function, f.args)))
    if init:
        lines.append(f"{INDENT}(:init")
        lines.extend(f"{INDENT * 2}{fact}" for fact in init)
        lines.append(f"{INDENT})")
    else:
        lines.append(f"{INDENT}(:init)")
    lines.append(f"{INDENT}(:goal {goal})")
    lines.append(")")
    return "\n".join(lines) + "\n"
