"""
The Domain Expert: loads PDDL domains and merges them into a single one.
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

from app.models.pddl import ROOT_TYPE, Domain, DurativeAction, FunctionDef, PredicateDef
from app.utils.pddl_parser import PddlError, parse_domain

logger = logging.getLogger(__name__)

T = TypeVar("T")


class DomainMergeError(PddlError):
    """Raised when two domains define the same name differently."""

    def __init__(self, kind: str, name: str):
        self.kind = kind
        self.name = name
        super().__init__(f"Conflicting definitions of {kind} '{name}'")


def _union(kind: str, groups: Iterable[Iterable[T]], key) -> List[T]:
    merged: Dict[str, T] = {}
    for group in groups:
        for item in group:
            name = key(item)
            if name in merged:
                if merged[name] != item:
                    raise DomainMergeError(kind, name)
                continue
            merged[name] = item
    return list(merged.values())


def _check_acyclic(types: Sequence[Tuple[str, str]]) -> None:
    parents = dict(types)
    for start in parents:
        seen = {start}
        current = parents.get(start)
        while current is not None and current != ROOT_TYPE:
            if current in seen:
                raise DomainMergeError("type", current)
            seen.add(current)
            current = parents.get(current)


def merge_domains(domains: Sequence[Domain]) -> Domain:
    """
    Merge domains into one.

    Identical re-declarations are idempotent, so ``merge([d, d]) == d``. The
    merged name joins the distinct source names with '-'.

    Args:
        domains: Non-empty list of domains, in priority order.

    Returns:
        The merged Domain.

    Raises:
        ValueError: If the list is empty.
        DomainMergeError: If a name is redefined with a different signature or body.
    """
    if not domains:
        raise ValueError("merge_domains needs at least one domain")
    if len(domains) == 1:
        return domains[0]

    names: List[str] = []
    for domain in domains:
        for part in domain.name.split("-"):
            if part not in names:
                names.append(part)

    requirements: List[str] = []
    for domain in domains:
        requirements.extend(r for r in domain.requirements if r not in requirements)

    types = _union("type", (d.types for d in domains), key=lambda pair: pair[0])
    _check_acyclic(types)
    constants = _union("constant", (d.constants for d in domains), key=lambda pair: pair[0])
    predicates: List[PredicateDef] = _union(
        "predicate", (d.predicates for d in domains), key=lambda p: p.name)
    functions: List[FunctionDef] = _union(
        "function", (d.functions for d in domains), key=lambda f: f.name)
    actions: List[DurativeAction] = _union(
        "action", (d.actions for d in domains), key=lambda a: a.name)

    merged = Domain(
        name="-".join(names),
        requirements=tuple(requirements),
        types=tuple(types),
        constants=tuple(constants),
        predicates=tuple(predicates),
        functions=tuple(functions),
        actions=tuple(actions),
    )
    logger.debug(f"Merged {len(domains)} domains into '{merged.name}' "
                 f"({len(merged.actions)} actions)")
    return merged


class DomainExpert:
    """
    Holds the loaded domains and serves the merged view.
    """

    def __init__(self, domains: Optional[Sequence[Domain]] = None):
        self._domains: List[Domain] = []
        self._merged: Optional[Domain] = None
        for domain in domains or ():
            self.add_domain(domain)

    def add_domain(self, source: Union[str, Domain]) -> Domain:
        """
        Add a domain given as PDDL text or as a parsed Domain.

        The merge is checked before the domain is accepted, so a conflicting
        domain leaves the expert unchanged.

        Returns:
            The new merged domain.
        """
        domain = parse_domain(source) if isinstance(source, str) else source
        merged = merge_domains(self._domains + [domain])
        self._domains.append(domain)
        self._merged = merged
        logger.info(f"Domain '{domain.name}' loaded")
        return merged

    @property
    def domain(self) -> Domain:
        if self._merged is None:
            raise PddlError("No domain loaded")
        return self._merged

    @property
    def loaded(self) -> bool:
        return self._merged is not None

    @property
    def sources(self) -> List[Domain]:
        return list(self._domains)

    def get_types(self) -> List[str]:
        return [ROOT_TYPE] + [child for child, _ in self.domain.types]

    def get_action(self, name: str) -> Optional[DurativeAction]:
        return self.domain.get_action(name)

    def get_predicate(self, name: str) -> Optional[PredicateDef]:
        return self.domain.get_predicate(name)

    def get_function(self, name: str) -> Optional[FunctionDef]:
        return self.domain.get_function(name)
