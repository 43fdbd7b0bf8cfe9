"""
Discrete-event cooking experiment.

A controller keeps asking the executor to cook two random dishes at a time
while simulated robots serve the auctions. Every finished action drains the
robot's battery_level; when it drops to LOW_BATTERY the controller cancels
the plan, adds a recharge to the goal and replans. Everything runs on one
VirtualClock, so a seed fully determines the result.
"""
import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from app.core.action_hub import InProcessHub
from app.core.action_performer import ActionJob, ActionPerformer, timed_work
from app.core.clock import VirtualClock
from app.core.executor import Executor, ExecutorConfig
from app.core.grounding import ground_action
from app.core.knowledge_base import KnowledgeBase, KnowledgeState, apply_in
from app.core.plan_graph import to_dot
from app.models.messages import PerformerSpec
from app.models.pddl import Atom, Condition, Domain, FluentTerm, FluentValue
from app.models.plan import SolverSpec
from app.models.status import RunState
from app.utils.pddl_parser import parse_domain
from app.utils.plan_parser import PlannerError
from app.utils.resource_loader import get_resource_loader

logger = logging.getLogger(__name__)

ROBOTS = ("r2d2", "c3po", "bb8")
KITCHEN = "kitchen"
RECHARGE_ZONE = "recharge_zone"
ZONES = (KITCHEN, "fridge_zone", "pantry_zone", "shelf_zone", RECHARGE_ZONE)

# where the two ingredients of each dish are stored
DISH_MENU: Dict[str, Tuple[str, str]] = {
    "cake": ("fridge_zone", "pantry_zone"),
    "spaghetti": ("pantry_zone", "shelf_zone"),
    "omelet": ("fridge_zone", "shelf_zone"),
}

PROFILES: Dict[str, Dict[str, Tuple[float, float]]] = {
    "sim": {"move": (3.8, 3.8), "transport": (8.8, 8.8), "cook": (21.0, 21.0),
            "recharge": (10.0, 10.0)},
    "real": {"move": (10.0, 15.0), "transport": (16.0, 20.0), "cook": (21.0, 21.0),
             "recharge": (10.0, 10.0)},
}

FULL_BATTERY = 100.0
LOW_BATTERY = 10.0

METRIC_ROWS = ("TotalTime", "Plans", "Actions", "Efficiency", "Fails", "Replans", "Dishes")


@dataclass(frozen=True)
class SimConfig:
    """battery_period is the working time a full battery lasts; None disables draining."""
    robots: int = 1
    profile: str = "sim"
    horizon: float = 2000.0
    battery_period: Optional[float] = 600.0
    seed: int = 42
    tick_period: float = 0.1
    feedback_period: float = 0.5
    retry_interval: float = 1.0
    hub_log: Optional[str] = None
    dot_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if not 1 <= self.robots <= len(ROBOTS):
            raise ValueError(f"robots must be between 1 and {len(ROBOTS)}")
        if self.profile not in PROFILES:
            raise ValueError(f"Unknown duration profile '{self.profile}'")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.battery_period is not None and self.battery_period <= 0:
            raise ValueError("battery_period must be positive")

    @property
    def robot_ids(self) -> Tuple[str, ...]:
        return ROBOTS[:self.robots]


@dataclass
class Metrics:
    total_time: float = 0.0
    plans: int = 0
    actions: int = 0
    efficiency: float = 0.0
    fails: int = 0
    replans: int = 0
    dishes: int = 0

    def rows(self) -> List[Tuple[str, str]]:
        values = (f"{self.total_time:.2f}", str(self.plans), str(self.actions),
                  f"{self.efficiency:.2f}", str(self.fails), str(self.replans), str(self.dishes))
        return list(zip(METRIC_ROWS, values))


class DurationModel:
    """Samples action durations from a profile; fixed durations when bounds coincide."""

    def __init__(self, profile: str, rng: np.random.Generator):
        self.bounds = PROFILES[profile]
        self.rng = rng

    def sample(self, action_name: str) -> float:
        low, high = self.bounds[action_name]
        if low == high:
            return low
        return float(self.rng.uniform(low, high))


class SimWorld:
    """
    Ground truth of the lab. An action changes the world only when it
    completes; a cancelled action leaves no trace.

    Completed actions other than recharge drain the battery of the robot
    named by their first argument by drain_rate per second of work. The
    battery listener hears every new level.
    """

    def __init__(self, domain: Domain, atoms: FrozenSet[Atom], drain_rate: float = 0.0):
        self.domain = domain
        self.atoms = atoms
        self.fluents: Dict[FluentTerm, float] = {}
        self.drain_rate = drain_rate
        self.battery_listener: Optional[Callable[[str, float], None]] = None

    def complete(self, action_name: str, args: Sequence[str], elapsed: float = 0.0) -> None:
        action = ground_action(self.domain, action_name, args)
        self.atoms, self.fluents = apply_in(action.eff_start, self.atoms, self.fluents)
        self.atoms, self.fluents = apply_in(action.eff_end, self.atoms, self.fluents)
        if action_name != "recharge" and args and self.drain_rate > 0:
            self.drain(args[0], elapsed * self.drain_rate)

    def battery(self, robot: str) -> Optional[float]:
        return self.fluents.get(FluentTerm("battery_level", (robot,)))

    def drain(self, robot: str, amount: float) -> None:
        term = FluentTerm("battery_level", (robot,))
        if term not in self.fluents:
            return
        self.fluents[term] = max(0.0, self.fluents[term] - amount)
        if self.battery_listener is not None:
            self.battery_listener(robot, self.fluents[term])

    def add(self, *atoms: Atom) -> None:
        self.atoms = self.atoms | frozenset(atoms)

    def discard(self, *atoms: Atom) -> None:
        self.atoms = self.atoms - frozenset(atoms)


def simulated_performer(hub: InProcessHub, world: SimWorld, robot_id: str, action_name: str,
                        durations: DurationModel, feedback_period: float = 0.5
                        ) -> ActionPerformer:
    """A performer of one action, serving only requests whose first argument is robot_id."""

    def duration(job: ActionJob) -> float:
        return durations.sample(job.action_name)

    def complete(job: ActionJob) -> None:
        world.complete(job.action_name, job.args, job.clock.now() - job.started_at)

    spec = PerformerSpec(f"{robot_id}_{action_name}", action_name, (robot_id,))
    work = timed_work(duration, on_complete=complete)
    return ActionPerformer(hub, spec, work, feedback_period).start()


def load_cooking_domain() -> Domain:
    return parse_domain(get_resource_loader().read("cooking_domain.pddl"))


@dataclass
class SimResult:
    metrics: Metrics
    busy: List[Tuple[float, float]] = field(default_factory=list)
    hub_messages: int = 0


class CookingController:
    """The application that keeps the kitchen busy and handles low batteries."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.domain = load_cooking_domain()
        self.clock = VirtualClock()
        self.hub = InProcessHub(self.clock, log_path=cfg.hub_log)
        self.knowledge = KnowledgeBase(self.domain)
        drain_rate = FULL_BATTERY / cfg.battery_period if cfg.battery_period else 0.0
        self.world = SimWorld(self.domain, frozenset(), drain_rate)
        self.world.battery_listener = self._battery_drained
        self.durations = DurationModel(cfg.profile, self.rng)
        self.metrics = Metrics()
        self.pending: List[str] = []
        self.low_battery: Set[str] = set()
        self._dish_count = 0
        self._battery_fired = False

        self._setup_lab()
        self.performers = [
            simulated_performer(self.hub, self.world, robot, action.name, self.durations,
                                cfg.feedback_period)
            for robot in cfg.robot_ids for action in self.domain.actions
        ]
        self.executor = Executor(
            self.knowledge, self.hub,
            ExecutorConfig(solver=SolverSpec(), tick_period=cfg.tick_period,
                           feedback_period=cfg.feedback_period,
                           retry_interval=cfg.retry_interval))

    def _setup_lab(self) -> None:
        kb = self.knowledge
        for zone in ZONES:
            kb.add_instance(zone, "zone")
        atoms = [Atom("cooking_zone", (KITCHEN,)), Atom("recharge_station", (RECHARGE_ZONE,))]
        for robot in self.cfg.robot_ids:
            kb.add_instance(robot, "robot")
            kb.set_fluent(FluentValue("battery_level", (robot,), FULL_BATTERY))
            self.world.fluents[FluentTerm("battery_level", (robot,))] = FULL_BATTERY
            atoms += [Atom("robot_at", (robot, KITCHEN)), Atom("robot_free", (robot,)),
                      Atom("battery_ok", (robot,))]
        for atom in atoms:
            kb.add_atom(atom)
        self.world.add(*atoms)

    def _new_request(self) -> None:
        kinds = list(DISH_MENU)
        for pick in self.rng.integers(0, len(kinds), size=2):
            kind = kinds[int(pick)]
            self._dish_count += 1
            dish = f"{kind}_{self._dish_count}"
            first, second = f"{dish}_a", f"{dish}_b"
            self.knowledge.add_instance(dish, "dish")
            self.knowledge.add_instance(first, "ingredient")
            self.knowledge.add_instance(second, "ingredient")
            zone_a, zone_b = DISH_MENU[kind]
            atoms = [Atom("ingredient_at", (first, zone_a)),
                     Atom("ingredient_at", (second, zone_b)),
                     Atom("first_ingredient", (first, dish)),
                     Atom("second_ingredient", (second, dish))]
            for atom in atoms:
                self.knowledge.add_atom(atom)
            self.world.add(*atoms)
            self.pending.append(dish)
        logger.info(f"t={self.clock.now():.1f} new request: {', '.join(self.pending[-2:])}")

    def _retire(self, dish: str) -> None:
        """Forget a cooked dish so grounding does not grow with the run."""
        related = {dish, f"{dish}_a", f"{dish}_b"}
        known = self.world.atoms | self.knowledge.snapshot().atoms
        stale = [a for a in known if related & set(a.args)]
        self.world.discard(*stale)
        for atom in stale:
            self.knowledge.remove_atom(atom)
        for name in (f"{dish}_a", f"{dish}_b", dish):
            self.knowledge.remove_instance(name)

    def _goal(self) -> Condition:
        literals = [Atom("dish_cooked", (d,)) for d in self.pending]
        literals += [Atom("battery_ok", (r,)) for r in sorted(self.low_battery)]
        return Condition(tuple(literals))

    def _battery_drained(self, robot: str, level: float) -> None:
        self.knowledge.set_fluent(FluentValue("battery_level", (robot,), level))
        if level > LOW_BATTERY or robot in self.low_battery:
            return
        logger.info(f"t={self.clock.now():.1f} {robot} is running out of battery ({level:.0f})")
        self.low_battery.add(robot)
        self._battery_fired = True

    def _resync(self) -> None:
        """Overwrite the knowledge base's facts and fluents with the world's."""
        snapshot = self.knowledge.snapshot()
        fluents = dict(snapshot.fluent_map)
        fluents.update(self.world.fluents)
        self.knowledge.reset(KnowledgeState(
            instances=snapshot.instances, atoms=self.world.atoms,
            fluents=tuple(FluentValue(t.function, t.args, v) for t, v in fluents.items()),
            goal=snapshot.goal))

    def _drop_battery_ok(self) -> None:
        for robot in self.low_battery:
            ok = Atom("battery_ok", (robot,))
            self.world.discard(ok)
            self.knowledge.remove_atom(ok)

    def _collect(self) -> None:
        cooked = [d for d in self.pending if Atom("dish_cooked", (d,)) in self.world.atoms]
        for dish in cooked:
            self.pending.remove(dish)
            self.metrics.dishes += 1
        self.low_battery = {r for r in self.low_battery
                            if Atom("battery_ok", (r,)) not in self.world.atoms}
        self.knowledge.set_goal(self._goal())
        for dish in cooked:
            self._retire(dish)

    def _abandon_request(self) -> None:
        """Drop the dishes nobody could plan for and wait before asking again."""
        for dish in self.pending:
            self._retire(dish)
        self.pending.clear()
        self.knowledge.set_goal(self._goal())
        self.clock.run_until(min(self.cfg.horizon, self.clock.now() + self.cfg.retry_interval))

    def _write_dot(self) -> None:
        if self.cfg.dot_dir and self.executor.graph is not None:
            os.makedirs(self.cfg.dot_dir, exist_ok=True)
            plan_id = self.executor.status().plan_id
            path = os.path.join(self.cfg.dot_dir, f"plan_{plan_id}.dot")
            with open(path, "w", encoding="utf-8") as f:
                f.write(to_dot(self.executor.graph))

    def run(self) -> SimResult:
        horizon = self.cfg.horizon
        while self.clock.now() < horizon:
            if self._battery_fired:
                self._battery_fired = False
                self._drop_battery_ok()
            if not self.pending:
                self._new_request()
            self.knowledge.set_goal(self._goal())
            self.metrics.plans += 1
            try:
                status = self.executor.start_goal()
                reason = (status.reason or "no plan") if status.state == RunState.FAILED else None
            except PlannerError as e:
                reason = str(e)
            if reason is not None:
                logger.error(f"No plan at t={self.clock.now():.1f}: {reason}")
                self.metrics.fails += 1
                self._abandon_request()
                continue
            self._write_dot()

            self.clock.run_until_complete(
                lambda: self.executor.status().state.terminal or self._battery_fired,
                timeout=horizon - self.clock.now())
            state = self.executor.status().state
            if not state.terminal:
                self.executor.cancel()
                if self._battery_fired and self.clock.now() < horizon:
                    self.metrics.replans += 1
                # the cancelled performers answer within the same instant
                self.clock.run_until(self.clock.now())
                self._resync()
            elif state == RunState.FAILED:
                logger.error(f"Plan failed: {self.executor.status().reason}")
                self.metrics.fails += 1
                self.metrics.replans += 1
                self.clock.run_until(self.clock.now())
                self._resync()
            self._collect()

        self.executor.cancel()
        self.clock.run_until(horizon)
        return self._finish(horizon)

    def _finish(self, horizon: float) -> SimResult:
        busy = [(start, min(end, horizon)) for start, end in self.executor.actions.busy_time()
                if start < horizon]
        self.metrics.total_time = horizon
        self.metrics.actions = self.executor.actions.succeeded
        self.metrics.efficiency = efficiency(busy, horizon)
        self.hub.shutdown()
        return SimResult(self.metrics, busy, self.hub.published)


def efficiency(busy: Sequence[Tuple[float, float]], total_time: float) -> float:
    """Summed action time over elapsed time, in percent; above 100 with parallel robots."""
    if total_time <= 0:
        return 0.0
    return 100.0 * float(np.sum([end - start for start, end in busy])) / total_time


def run_experiment(cfg: SimConfig) -> SimResult:
    logger.info(f"Cooking experiment: {cfg.robots} robot(s), profile {cfg.profile}, "
                f"horizon {cfg.horizon:.0f} s, seed {cfg.seed}")
    return CookingController(cfg).run()


def export_metrics(metrics: Metrics, path: str) -> None:
    """
    Write metrics as one column of a metrics-by-run CSV. An existing file gets
    the run appended as a new column.
    """
    columns: List[List[str]] = []
    if os.path.exists(path):
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        if rows and len(rows) == len(METRIC_ROWS) + 1:
            columns = [list(col) for col in zip(*rows)][1:]
    run = [f"run_{len(columns) + 1}"] + [value for _, value in metrics.rows()]
    columns.append(run)
    header = ["metric"] + [col[0] for col in columns]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for i, name in enumerate(METRIC_ROWS, start=1):
            writer.writerow([name] + [col[i] for col in columns])
