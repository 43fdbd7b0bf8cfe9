"""
Action-dependency graph of a timestamped plan.

Effects and requirements are placed on timeline points ``(time, phase)``
where phase 0 holds at-end events and phase 1 at-start events, so an action
ending at t comes before an action starting at t.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from graphlib import CycleError, TopologicalSorter
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from app.core.grounding import GroundingError, ground_item, object_types
from app.core.knowledge_base import KnowledgeState
from app.models.pddl import Atom, Domain, format_number
from app.models.plan import GroundedAction, Plan, PlanItem
from app.utils.resource_loader import get_resource_loader

logger = logging.getLogger(__name__)

Point = Tuple[float, int]
END_PHASE = 0
START_PHASE = 1

ESTABLISHES = "establishes"
ORDERS = "orders"


class PlanGraphError(Exception):
    """The plan cannot be turned into a consistent dependency graph."""
    pass


@dataclass(frozen=True)
class PlanNode:
    index: int
    item: PlanItem
    action: GroundedAction

    @property
    def t_start(self) -> float:
        return self.item.time

    @property
    def t_end(self) -> float:
        return self.item.end

    @property
    def key(self) -> Tuple[float, int]:
        return (self.t_start, self.index)

    @property
    def label(self) -> str:
        return self.action.label


@dataclass(frozen=True, order=True)
class Edge:
    producer: int
    consumer: int
    kind: str
    atom: str


@dataclass(frozen=True)
class PlanGraph:
    nodes: Tuple[PlanNode, ...]
    edges: FrozenSet[Edge]

    @cached_property
    def _preds(self) -> Dict[int, Tuple[int, ...]]:
        preds: Dict[int, Set[int]] = {n.index: set() for n in self.nodes}
        for e in self.edges:
            preds[e.consumer].add(e.producer)
        return {k: tuple(sorted(v)) for k, v in preds.items()}

    @cached_property
    def _succs(self) -> Dict[int, Tuple[int, ...]]:
        succs: Dict[int, Set[int]] = {n.index: set() for n in self.nodes}
        for e in self.edges:
            succs[e.producer].add(e.consumer)
        return {k: tuple(sorted(v)) for k, v in succs.items()}

    def predecessors(self, index: int) -> Tuple[int, ...]:
        return self._preds[index]

    def successors(self, index: int) -> Tuple[int, ...]:
        return self._succs[index]

    def in_degree(self, index: int) -> int:
        return len(self._preds[index])

    def edges_of_kind(self, kind: str) -> List[Edge]:
        return sorted(e for e in self.edges if e.kind == kind)

    def topological_order(self) -> List[int]:
        """Node indices in dependency order, ties broken by index."""
        sorter = TopologicalSorter({n.index: self._preds[n.index] for n in self.nodes})
        order: List[int] = []
        try:
            sorter.prepare()
        except CycleError as e:
            raise PlanGraphError(f"Cyclic plan graph through nodes {e.args[1]}") from e
        while sorter.is_active():
            ready = sorted(sorter.get_ready())
            order.extend(ready)
            sorter.done(*ready)
        return order

    def longest_path(self) -> int:
        """Number of nodes on the longest dependency chain."""
        depth: Dict[int, int] = {}
        for index in self.topological_order():
            depth[index] = 1 + max((depth[p] for p in self._preds[index]), default=0)
        return max(depth.values(), default=0)


def roots(graph: PlanGraph) -> List[PlanNode]:
    """Nodes with no incoming edge: the start of each parallel flow."""
    return [n for n in graph.nodes if graph.in_degree(n.index) == 0]


def flows(graph: PlanGraph) -> List[List[int]]:
    """
    Every maximal root-to-sink path, as lists of node indices.
    """
    paths: List[List[int]] = []

    def walk(index: int, path: List[int]) -> None:
        path = path + [index]
        succs = graph.successors(index)
        if not succs:
            paths.append(path)
            return
        for nxt in succs:
            walk(nxt, path)

    for root in roots(graph):
        walk(root.index, [])
    return paths


def _effect_points(node: PlanNode) -> List[Tuple[Point, List[Atom], List[Atom]]]:
    return [
        ((node.t_start, START_PHASE), list(node.action.eff_start.adds),
         list(node.action.eff_start.dels)),
        ((node.t_end, END_PHASE), list(node.action.eff_end.adds),
         list(node.action.eff_end.dels)),
    ]


def _requirements(node: PlanNode) -> List[Tuple[str, Point, Atom, bool]]:
    """(kind, required point, atom, positive) for every atom the node needs."""
    start = (node.t_start, START_PHASE)
    end = (node.t_end, END_PHASE)
    reqs: List[Tuple[str, Point, Atom, bool]] = []
    for kind, point, cond in (("start", start, node.action.cond_start),
                              ("overall", start, node.action.cond_overall),
                              ("end", end, node.action.cond_end)):
        reqs.extend((kind, point, a, True) for a in cond.positive_atoms)
        reqs.extend((kind, point, a, False) for a in cond.negative_atoms)
    return reqs


class _GraphBuilder:
    def __init__(self, nodes: List[PlanNode], init: FrozenSet[Atom]):
        self.nodes = nodes
        self.init = init
        self.edges: Set[Edge] = set()
        self.adders: Dict[Atom, List[Tuple[Point, int]]] = {}
        self.deleters: Dict[Atom, List[Tuple[Point, int]]] = {}
        for node in nodes:
            for point, adds, dels in _effect_points(node):
                for atom in adds:
                    self.adders.setdefault(atom, []).append((point, node.index))
                for atom in dels:
                    self.deleters.setdefault(atom, []).append((point, node.index))

    def _add_edge(self, producer: int, consumer: int, kind: str, atom: str) -> None:
        if producer == consumer:
            return
        if not self.nodes[producer].key < self.nodes[consumer].key:
            logger.warning(f"Skipping {kind} edge {producer}->{consumer} on {atom}: "
                           f"it runs against the plan timeline")
            return
        self.edges.add(Edge(producer, consumer, kind, atom))

    @staticmethod
    def _latest_before(events: List[Tuple[Point, int]], point: Point,
                       exclude: Tuple[int, ...]) -> Optional[Tuple[Point, int]]:
        best: Optional[Tuple[Point, int]] = None
        for ev_point, index in events:
            if index in exclude or not ev_point < point:
                continue
            if best is None or ev_point > best[0] or (ev_point == best[0] and index < best[1]):
                best = (ev_point, index)
        return best

    def build(self) -> None:
        for consumer in self.nodes:
            for kind, point, atom, positive in _requirements(consumer):
                self._establish(consumer, kind, point, atom, positive)
                self._protect(consumer, kind, atom, positive)

    def _establish(self, consumer: PlanNode, kind: str, point: Point, atom: Atom,
                   positive: bool) -> None:
        makers = self.adders if positive else self.deleters
        breakers = self.deleters if positive else self.adders
        label = str(atom) if positive else f"(not {atom})"
        found = self._latest_before(makers.get(atom, []), point, (consumer.index,))
        if found is None:
            if (atom in self.init) != positive:
                raise PlanGraphError(
                    f"{consumer.label} needs {label} at {kind} but nothing establishes it")
            return
        made_at, maker = found
        self._add_edge(maker, consumer.index, ESTABLISHES, label)
        # whoever undid the atom last before the maker must run first
        undone = self._latest_before(breakers.get(atom, []), made_at, (maker, consumer.index))
        if undone is not None:
            self._add_edge(undone[1], maker, ORDERS, label)

    def _protect(self, consumer: PlanNode, kind: str, atom: Atom, positive: bool) -> None:
        breakers = self.deleters if positive else self.adders
        label = str(atom) if positive else f"(not {atom})"
        start = (consumer.t_start, START_PHASE)
        end = (consumer.t_end, END_PHASE)
        for point, breaker in breakers.get(atom, []):
            if breaker == consumer.index:
                continue
            if kind == "overall":
                if start <= point < end:
                    raise PlanGraphError(
                        f"{self.nodes[breaker].label} breaks over all condition {label} of "
                        f"{consumer.label} at t={format_number(point[0])}")
                if point >= end:
                    self._add_edge(consumer.index, breaker, ORDERS, label)
            elif point >= (start if kind == "start" else end):
                self._add_edge(consumer.index, breaker, ORDERS, label)


def build_graph(plan: Plan, domain: Domain, init: KnowledgeState) -> PlanGraph:
    """
    Build the dependency graph of a plan.

    Each required atom gets an edge from its latest establisher; actions that
    would undo an atom another action still needs are ordered after it.

    Args:
        plan: A plan that passes validate_plan.
        domain: The domain.
        init: Knowledge state the plan starts from.

    Returns:
        An acyclic PlanGraph.

    Raises:
        PlanGraphError: Unestablished condition, unresolvable threat or a cycle.
    """
    types = object_types(domain, init)
    nodes = []
    for index, item in enumerate(plan):
        try:
            nodes.append(PlanNode(index, item, ground_item(domain, item, types)))
        except GroundingError as e:
            raise PlanGraphError(f"Plan item {index}: {e}") from e
    builder = _GraphBuilder(nodes, init.atoms)
    builder.build()
    graph = PlanGraph(tuple(nodes), frozenset(builder.edges))
    graph.topological_order()
    logger.info(f"Plan graph: {len(nodes)} nodes, {len(graph.edges)} edges, "
                f"{len(roots(graph))} roots")
    return graph


def to_dot(graph: PlanGraph) -> str:
    """Graphviz rendering with nodes in index order and edges sorted."""
    nodes = [{"index": n.index, "label": n.label, "start": format_number(n.t_start),
              "end": format_number(n.t_end)} for n in graph.nodes]
    edges = [{"producer": e.producer, "consumer": e.consumer, "kind": e.kind,
              "label": e.atom if e.kind == ESTABLISHES else f"orders {e.atom}"}
             for e in sorted(graph.edges)]
    return get_resource_loader().render("plan_graph.dot.j2", {"nodes": nodes, "edges": edges})
