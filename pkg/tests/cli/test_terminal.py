"""
Tests for the operator terminal, driven through command transcripts.
"""
import io

import pytest

from app.cli.terminal import Terminal
from app.core.domain_expert import DomainExpert
from app.models.status import RunState
from app.utils.pddl_parser import parse_domain


@pytest.fixture
def out():
    return io.StringIO()


@pytest.fixture
def shell(cooking_domain, out):
    return Terminal(DomainExpert([cooking_domain]), out=out)


@pytest.fixture
def setup_script(resources):
    return resources.path("cooking_setup.cmd")


def lines(out):
    return out.getvalue().splitlines()


def transcript(cooking_domain, commands):
    buffer = io.StringIO()
    Terminal(DomainExpert([cooking_domain]), out=buffer).run_lines(commands)
    return buffer.getvalue()


class TestKnowledgeCommands:
    """get / set / remove against the knowledge base."""

    def test_set_and_get_instance(self, shell, out):
        assert shell.execute("set instance rb1 robot")
        shell.execute("get problem instances")
        assert lines(out) == ["rb1 - robot"]

    def test_predicates_and_functions(self, shell, out):
        shell.run_lines([
            "set instance r2d2 robot",
            "set instance kitchen zone",
            "set predicate (robot_at r2d2 kitchen)",
            "set function (= (battery_level r2d2) 55)",
            "get problem predicates",
            "get problem functions",
        ])
        assert lines(out) == ["(robot_at r2d2 kitchen)", "(= (battery_level r2d2) 55)"]

    def test_goal_round_trip(self, shell, out):
        shell.run_lines(["set instance cake_1 dish", "set goal (and (dish_cooked cake_1))",
                         "get problem goals", "remove goal", "get problem goals"])
        assert lines(out) == ["(and (dish_cooked cake_1))"]

    def test_remove_missing_predicate(self, shell, out):
        shell.execute("set instance r2d2 robot")

        assert not shell.execute("remove predicate (robot_free r2d2)")

        assert lines(out) == ["ERROR: no such predicate (robot_free r2d2)"]
        assert shell.errors == 1

    def test_remove_function(self, shell, out):
        shell.run_lines(["set instance r2d2 robot", "set function (= (battery_level r2d2) 10)",
                         "remove function (battery_level r2d2)", "get problem functions"])
        assert lines(out) == []
        assert shell.errors == 0

    def test_validation_errors_are_single_lines(self, shell, out):
        shell.run_lines(["set instance r2d2 android", "set predicate (robot_free bb8)",
                         "set instance r2d2"])
        output = lines(out)
        assert len(output) == 3
        assert all(line.startswith("ERROR: ") for line in output)
        assert output[2] == "ERROR: usage: set instance <name> <type>"

    def test_referenced_instance(self, shell, out):
        shell.run_lines(["set instance r2d2 robot", "set predicate (robot_free r2d2)",
                         "remove instance r2d2"])
        assert lines(out)[0].startswith("ERROR: ")

    def test_model_queries(self, shell, out):
        shell.execute("get model types")
        assert lines(out)[0] == "object"
        shell.execute("get model action cook")
        assert "(:durative-action cook" in out.getvalue()
        shell.execute("get model predicate robot_at")
        assert lines(out)[-1] == "(robot_at ?r - robot ?z - zone)"

    def test_unknown_model_element(self, shell, out):
        assert not shell.execute("get model action fly")
        assert lines(out) == ["ERROR: unknown action 'fly'"]

    def test_domain_and_problem_print(self, shell, out):
        shell.execute("get domain")
        assert out.getvalue().startswith("(define (domain cooking)")
        shell.execute("get problem")
        assert "(:domain cooking)" in out.getvalue()


class TestDispatch:
    """Command parsing, scripts and the read loop."""

    def test_unknown_command(self, shell, out):
        assert not shell.execute("fly to the moon")
        assert lines(out)[0] == "ERROR: unknown command 'fly'"
        assert "Commands:" in out.getvalue()

    def test_comments_and_blank_lines(self, shell, out):
        assert shell.run_lines(["", "# nothing", "   "]) == 0
        assert out.getvalue() == ""

    def test_quit_stops_reading(self, shell, out):
        failed = shell.run_lines(["quit", "fly"])
        assert failed == 0
        assert shell.finished

    def test_repl_from_a_stream(self, shell):
        assert shell.repl(io.StringIO("set instance rb1 robot\n")) == 0
        assert shell.repl(io.StringIO("bogus\n")) == 1

    def test_source_missing_file(self, shell, out, tmp_path):
        assert not shell.execute(f"source {tmp_path / 'missing.cmd'}")
        assert lines(out)[0].startswith("ERROR: ")

    def test_source_nested(self, shell, out, tmp_path):
        inner = tmp_path / "inner.cmd"
        inner.write_text("set instance rb1 robot\n")
        outer = tmp_path / "outer.cmd"
        outer.write_text(f"source {inner}\nget problem instances\n")

        shell.execute(f"source {outer}")

        assert lines(out) == ["rb1 - robot"]


class TestExecutionCommands:
    """Planning, running and monitoring from the shell."""

    def test_empty_goal_gives_empty_plan(self, shell, out):
        shell.execute("get plan")
        assert lines(out) == ["empty plan"]

    def test_get_plan(self, shell, out, setup_script):
        shell.execute(f"source {setup_script}")
        shell.execute("get plan")

        plan_lines = lines(out)
        assert plan_lines[0].startswith("0.000: (move r2d2 kitchen")
        assert "(cook r2d2 cake_1 cake_1_a cake_1_b kitchen)" in plan_lines[-1]

    def test_run_cooks_the_cake(self, shell, out, setup_script):
        shell.execute(f"source {setup_script}")

        assert shell.execute("run")

        output = lines(out)
        assert output[-1] == "SUCCESS"
        assert any(line.endswith("finished_ok 100%") and "(cook r2d2" in line for line in output)
        assert output[0].startswith("[0.000] (move r2d2 kitchen")
        shell.execute("get problem predicates")
        assert "(dish_cooked cake_1)" in lines(out)

    def test_transcripts_are_reproducible(self, cooking_domain, setup_script):
        commands = [f"source {setup_script}", "run", "get status"]
        assert transcript(cooking_domain, commands) == transcript(cooking_domain, commands)

    def test_performers_table(self, shell, out, setup_script):
        shell.execute(f"source {setup_script}")
        shell.execute("get performers")

        text = out.getvalue()
        for action in ("move", "transport", "cook", "recharge"):
            assert f"r2d2_{action}" in text
        assert "inactive" in text

    def test_start_step_and_cancel(self, shell, out, setup_script):
        shell.execute(f"source {setup_script}")
        shell.execute("start")
        shell.execute("step 2")
        assert shell.executor.status().state == RunState.EXECUTING

        shell.execute("cancel")

        assert lines(out)[-1] == "CANCELLED"
        assert shell.errors == 0

    def test_status_lines(self, shell, out, setup_script):
        shell.execute(f"source {setup_script}")
        shell.execute("run")
        shell.execute("get status")

        output = lines(out)
        status_at = output.index("plan 1: succeeded")
        assert output[status_at + 1].startswith("  0 (move r2d2 kitchen")
        assert output[status_at + 1].endswith("finished_ok 100% on r2d2_move")

    def test_unreachable_goal(self, shell, out, setup_script):
        shell.execute(f"source {setup_script}")
        shell.execute("remove predicate (robot_free r2d2)")

        assert not shell.execute("run")
        assert lines(out)[-1] == "FAILURE: no_plan"

    def test_idle_commands(self, shell, out):
        shell.execute("cancel")
        assert not shell.execute("wait")
        assert not shell.execute("step 0")
        assert lines(out) == ["nothing to cancel", "ERROR: no plan is running",
                              "ERROR: step needs a positive duration"]


BELL_DOMAIN = """
(define (domain bell)
  (:requirements :strips :durative-actions)
  (:predicates (rung))
  (:durative-action ring
    :parameters ()
    :duration (= ?duration 2)
    :condition (and)
    :effect (and (at end (rung)))
  )
)
"""


class TestParameterlessActions:
    """Actions without parameters and plans that cannot progress."""

    @pytest.fixture
    def bell_shell(self, out):
        shell = Terminal(DomainExpert([parse_domain(BELL_DOMAIN)]), out=out)
        shell.execute("set goal (and (rung))")
        return shell

    def test_run_rings_the_bell(self, bell_shell, out):
        assert bell_shell.execute("run")

        output = lines(out)
        assert output[-1] == "SUCCESS"
        assert "[2.000] (ring) finished_ok 100%" in output
        assert "ring" in bell_shell.performers

    def test_stalled_plan_is_cancelled(self, bell_shell, out):
        bell_shell.execute("start")
        bell_shell.performers["ring"].shutdown()

        assert not bell_shell.execute("wait")

        assert lines(out)[-1] == "FAILURE: no progress for 60 s"
        assert bell_shell.executor.status().state == RunState.CANCELLED
        assert bell_shell.clock.now() == pytest.approx(60.0)

    def test_stall_timeout_must_be_positive(self, cooking_domain):
        with pytest.raises(ValueError):
            Terminal(DomainExpert([cooking_domain]), stall_timeout=0)
