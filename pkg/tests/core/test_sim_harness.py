"""
Tests for the simulated cooking experiment.
"""
import csv

import numpy as np
import pytest

from app.core.sim_harness import (
    FULL_BATTERY,
    LOW_BATTERY,
    METRIC_ROWS,
    CookingController,
    DurationModel,
    Metrics,
    SimConfig,
    SimWorld,
    efficiency,
    export_metrics,
    load_cooking_domain,
    run_experiment,
)
from app.models.pddl import Atom, FluentTerm


@pytest.fixture(scope="module")
def one_robot():
    return run_experiment(SimConfig(robots=1, horizon=2000.0, seed=42))


@pytest.fixture(scope="module")
def three_robots():
    return run_experiment(SimConfig(robots=3, horizon=2000.0, seed=42))


class TestExperiment:
    """Desk-scale runs of the kitchen."""

    def test_one_robot_keeps_busy(self, one_robot):
        metrics = one_robot.metrics
        assert metrics.fails == 0
        assert metrics.efficiency >= 90.0
        assert metrics.dishes > 0
        assert metrics.total_time == 2000.0

    def test_three_robots_work_in_parallel(self, one_robot, three_robots):
        """Test that extra robots overlap their actions and cook more."""
        assert three_robots.metrics.efficiency >= 150.0
        assert three_robots.metrics.dishes >= 1.5 * one_robot.metrics.dishes

    def test_battery_events_cause_replans(self, one_robot):
        assert one_robot.metrics.replans >= 1
        assert one_robot.metrics.plans > one_robot.metrics.replans

    def test_efficiency_matches_busy_intervals(self, one_robot):
        assert efficiency(one_robot.busy, 2000.0) == pytest.approx(
            one_robot.metrics.efficiency, abs=1e-9)
        assert all(start <= end <= 2000.0 for start, end in one_robot.busy)

    def test_same_seed_same_result(self):
        cfg = SimConfig(robots=2, horizon=300.0, seed=7, battery_period=120.0)
        assert run_experiment(cfg).metrics == run_experiment(cfg).metrics

    def test_without_battery_events(self):
        result = run_experiment(SimConfig(robots=1, horizon=300.0, battery_period=None))
        assert result.metrics.replans == 0
        assert result.metrics.fails == 0

    def test_real_profile_and_hub_log(self, tmp_path):
        log = tmp_path / "hub.log"
        result = run_experiment(SimConfig(robots=2, profile="real", horizon=200.0,
                                          hub_log=str(log)))
        assert result.metrics.actions > 0
        assert len(log.read_text().splitlines()) == result.hub_messages

    def test_graphs_are_written(self, tmp_path):
        run_experiment(SimConfig(robots=1, horizon=100.0, dot_dir=str(tmp_path)))
        dots = sorted(tmp_path.glob("plan_*.dot"))
        assert dots
        assert dots[0].read_text().startswith("digraph")

    @pytest.mark.parametrize("kwargs", [
        {"robots": 0}, {"robots": 4}, {"profile": "fast"}, {"horizon": 0},
        {"battery_period": -5.0},
    ])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)


class TestMetrics:
    """Duration sampling and the results table."""

    def test_duration_model(self):
        model = DurationModel("real", np.random.default_rng(3))
        samples = [model.sample("move") for _ in range(100)]
        assert all(10.0 <= s <= 15.0 for s in samples)
        assert model.sample("cook") == 21.0

    def test_efficiency_above_one_hundred(self):
        assert efficiency([(0, 10), (0, 10)], 10) == 200.0
        assert efficiency([], 0) == 0.0

    def test_export_appends_columns(self, tmp_path):
        path = str(tmp_path / "table.csv")
        export_metrics(Metrics(total_time=10, plans=1, actions=3, efficiency=90.0, dishes=2), path)
        export_metrics(Metrics(total_time=10, plans=2, actions=6, efficiency=180.0, dishes=4), path)

        with open(path, newline="") as f:
            rows = list(csv.reader(f))

        assert rows[0] == ["metric", "run_1", "run_2"]
        assert [r[0] for r in rows[1:]] == list(METRIC_ROWS)
        assert len(rows) == 8
        assert rows[4] == ["Efficiency", "90.00", "180.00"]


class TestBattery:
    """Batteries drain with work and low ones are recharged."""

    @pytest.fixture
    def world(self):
        world = SimWorld(load_cooking_domain(), frozenset([Atom("robot_at", ("r2d2", "kitchen"))]),
                         drain_rate=10.0)
        world.fluents[FluentTerm("battery_level", ("r2d2",))] = FULL_BATTERY
        return world

    def test_completed_action_drains_its_robot(self, world):
        heard = []
        world.battery_listener = lambda robot, level: heard.append((robot, level))

        world.complete("move", ("r2d2", "kitchen", "fridge_zone"), 4.0)

        assert world.battery("r2d2") == pytest.approx(60.0)
        assert heard == [("r2d2", pytest.approx(60.0))]
        assert Atom("robot_at", ("r2d2", "fridge_zone")) in world.atoms

    def test_battery_never_goes_negative(self, world):
        world.complete("move", ("r2d2", "kitchen", "fridge_zone"), 50.0)
        assert world.battery("r2d2") == 0.0

    def test_recharge_fills_the_battery(self, world):
        world.complete("move", ("r2d2", "kitchen", "recharge_zone"), 5.0)
        world.complete("recharge", ("r2d2", "recharge_zone"), 10.0)
        assert world.battery("r2d2") == FULL_BATTERY

    def test_knowledge_base_follows_the_world(self):
        controller = CookingController(SimConfig(robots=1, horizon=100.0, battery_period=1000.0))
        controller.run()

        level = controller.world.battery("r2d2")
        known = controller.knowledge.snapshot().get_fluent(FluentTerm("battery_level", ("r2d2",)))
        assert LOW_BATTERY < level < FULL_BATTERY
        assert known == pytest.approx(level)

    def test_without_draining_battery_stays_full(self):
        controller = CookingController(SimConfig(robots=1, horizon=100.0, battery_period=None))
        controller.run()
        assert controller.world.battery("r2d2") == FULL_BATTERY

    def test_low_battery_triggers_recharge(self):
        controller = CookingController(SimConfig(robots=1, horizon=600.0, battery_period=150.0))
        result = controller.run()

        assert result.metrics.replans >= 1
        assert result.metrics.fails == 0
        assert result.metrics.dishes > 0


class TestPlanningFailure:
    """A request nobody can plan for is dropped and the kitchen carries on."""

    def test_run_continues_after_no_plan(self, monkeypatch):
        controller = CookingController(SimConfig(robots=1, horizon=300.0, battery_period=None))
        planner = controller.executor.planner
        real_get_plan = planner.get_plan
        calls = []

        def first_call_fails(domain, state):
            calls.append(controller.clock.now())
            if len(calls) == 1:
                return None
            return real_get_plan(domain, state)

        monkeypatch.setattr(planner, "get_plan", first_call_fails)
        result = controller.run()

        assert result.metrics.fails == 1
        assert result.metrics.dishes > 0
        assert calls[1] == pytest.approx(calls[0] + controller.cfg.retry_interval)


@pytest.mark.slow
class TestLongRuns:
    """Long single-robot runs over many seeds."""

    @pytest.mark.parametrize("seed", range(20))
    def test_no_failed_actions(self, seed):
        result = run_experiment(SimConfig(robots=1, horizon=2000.0, seed=seed))
        assert result.metrics.fails == 0
        assert result.metrics.dishes > 0
