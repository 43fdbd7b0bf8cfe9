"""
Tests for the executor running cooking plans over an in-process hub.
"""
import json

import pytest

from app.core.action_hub import InProcessHub
from app.core.action_performer import ActionPerformer, timed_work
from app.core.clock import VirtualClock
from app.core.executor import NO_PLAN, Executor, ExecutorConfig, ExecutorError
from app.models.messages import MessageType, PerformerSpec
from app.models.pddl import Atom
from app.models.status import ActionPhase, RunState

COOKING_ACTIONS = ("move", "transport", "cook", "recharge")


def start_performers(hub, robot="r2d2", duration=1.0, failing=()):
    """One performer per cooking action for the robot; actions in failing never succeed."""
    performers = {}
    for action in COOKING_ACTIONS:
        if action in failing:
            def work(job):
                job.call_later(duration, job.finish, False, "dropped the pan")
        else:
            work = timed_work(lambda job: duration)
        spec = PerformerSpec(f"{robot}_{action}", action, (robot,))
        performers[action] = ActionPerformer(hub, spec, work, feedback_period=0.25).start()
    return performers


@pytest.fixture
def clock():
    return VirtualClock()


@pytest.fixture
def hub(clock):
    return InProcessHub(clock)


class TestExecutor:
    """Planning, dispatching and finishing runs."""

    def test_cooks_the_cake(self, cooking_kb, hub):
        start_performers(hub)
        executor = Executor(cooking_kb, hub)

        status = executor.execute_goal(timeout=100)

        assert status.state == RunState.SUCCEEDED, status.reason
        assert cooking_kb.snapshot().has_atom(Atom("dish_cooked", ("cake_1",)))
        assert all(a.phase == ActionPhase.FINISHED_OK for a in status.actions)
        assert all(a.performer == "r2d2_" + a.label[1:].split()[0] for a in status.actions)
        assert status.finished_at == len(executor.plan)

    def test_satisfied_goal_succeeds_without_actions(self, cooking_kb, hub):
        cooking_kb.add_atom(Atom("dish_cooked", ("cake_1",)))
        executor = Executor(cooking_kb, hub)

        status = executor.execute_goal(timeout=10)

        assert status.state == RunState.SUCCEEDED
        assert status.actions == ()
        assert [m for m in hub.history if m.msg_type == MessageType.REQUEST] == []

    def test_unreachable_goal(self, cooking_kb, hub):
        cooking_kb.remove_atom(Atom("robot_free", ("r2d2",)))
        status = Executor(cooking_kb, hub).start_goal()

        assert status.state == RunState.FAILED
        assert status.reason == NO_PLAN

    def test_performer_failure_fails_the_plan(self, cooking_kb, hub):
        start_performers(hub, failing=("cook",))
        executor = Executor(cooking_kb, hub)

        status = executor.execute_goal(timeout=100)

        assert status.state == RunState.FAILED
        assert "(cook r2d2 cake_1" in status.reason
        assert "dropped the pan" in status.reason
        assert not cooking_kb.snapshot().has_atom(Atom("dish_cooked", ("cake_1",)))

    def test_cancel(self, cooking_kb, hub, clock):
        """Test that cancelling mid-run stops the performer and keeps applied effects."""
        performers = start_performers(hub, duration=5.0)
        executor = Executor(cooking_kb, hub)
        executor.start_goal()
        clock.run_until(2.0)

        assert executor.cancel() is True
        clock.run_until(3.0)

        assert executor.status().state == RunState.CANCELLED
        assert executor.cancel() is False
        assert performers["move"].completed[-1][1] is False
        assert not cooking_kb.snapshot().has_atom(Atom("robot_at", ("r2d2", "kitchen")))

    def test_one_run_at_a_time(self, cooking_kb, hub):
        start_performers(hub)
        executor = Executor(cooking_kb, hub)
        executor.start_goal()

        with pytest.raises(ExecutorError):
            executor.start_goal()

    def test_waits_for_a_performer(self, cooking_kb, hub, clock):
        """Test that a missing performer only delays the plan."""
        executor = Executor(cooking_kb, hub, ExecutorConfig(retry_interval=2.0))
        executor.start_goal()
        clock.run_until(7.0)
        assert executor.status().state == RunState.EXECUTING

        start_performers(hub)
        clock.run_until_complete(lambda: executor.status().state.terminal, timeout=100)

        assert executor.status().state == RunState.SUCCEEDED


class TestStatusReporting:
    """Listeners and the event log."""

    def test_listeners_see_every_run_state(self, cooking_kb, hub):
        start_performers(hub)
        executor = Executor(cooking_kb, hub)
        states = []
        completions = []

        def listener(status, changed):
            if changed is None:
                states.append(status.state)
            else:
                completions.append((changed.index, changed.completion))

        executor.add_listener(listener)
        executor.execute_goal(timeout=100)

        assert states == [RunState.PLANNING, RunState.EXECUTING, RunState.SUCCEEDED]
        for index in range(len(executor.plan)):
            mine = [c for i, c in completions if i == index]
            assert mine == sorted(mine)
            assert mine[-1] == 1.0

    def test_broken_listener_is_ignored(self, cooking_kb, hub):
        start_performers(hub)
        executor = Executor(cooking_kb, hub)
        executor.add_listener(lambda status, changed: 1 / 0)

        assert executor.execute_goal(timeout=100).state == RunState.SUCCEEDED

    def test_event_log(self, cooking_kb, hub, tmp_path):
        path = tmp_path / "events.ndjson"
        start_performers(hub)
        executor = Executor(cooking_kb, hub, ExecutorConfig(event_log=str(path)))

        executor.execute_goal(timeout=100)
        executor.close()

        records = [json.loads(line) for line in path.read_text().splitlines()]
        plans = [r["state"] for r in records if r["event"] == "plan"]
        assert plans == ["planning", "executing", "succeeded"]
        finished = [r for r in records if r["event"] == "action" and r["phase"] == "finished_ok"]
        assert len(finished) == len(executor.plan)
        assert all(r["plan_id"] == 1 for r in records)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExecutorConfig(tick_period=0)
        with pytest.raises(ValueError):
            ExecutorConfig(action_wait_timeout=-1.0)
