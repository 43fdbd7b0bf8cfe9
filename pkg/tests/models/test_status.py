"""
Tests for the shared status values.
"""
from app.models.status import ActionPhase, ActionStatus, PlanRunStatus, RunState


class TestStatus:
    def test_phase_ranks(self):
        assert ActionPhase.PENDING.rank < ActionPhase.STARTED.rank < ActionPhase.EXECUTING.rank
        assert ActionPhase.FINISHED_OK.rank == ActionPhase.FINISHED_FAIL.rank
        assert ActionPhase.FINISHED_FAIL.finished
        assert not ActionPhase.EXECUTING.finished

    def test_terminal_run_states(self):
        assert {s for s in RunState if s.terminal} == {
            RunState.SUCCEEDED, RunState.FAILED, RunState.CANCELLED}

    def test_snapshot_lookup(self):
        status = PlanRunStatus(plan_id=3, actions=(ActionStatus(0, "(move r a b)"),))
        assert status.action(0).phase == ActionPhase.PENDING
        assert status.state == RunState.IDLE
