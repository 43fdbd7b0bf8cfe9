"""
Tests for the builtin solver, the external solver adapter and plan validation.
"""
import sys
import textwrap
from dataclasses import replace

import pytest

from app.core.knowledge_base import KnowledgeState
from app.core.plan_validator import validate_plan
from app.core.planner import (
    BuiltinSolver,
    Planner,
    SearchBudgetExceeded,
    SolverError,
    UnsupportedDomainError,
    solve,
)
from app.models.pddl import Atom, Comparison, Condition, FluentTerm, Number
from app.models.plan import EPSILON, SolverSpec, round_time
from app.utils.pddl_parser import parse_problem


class TestBuiltinSolver:
    """Soundness of the greedy search."""

    def test_cooking_plan_is_valid(self, cooking_domain, cooking_kb):
        state = cooking_kb.snapshot()

        plan = solve(cooking_domain, state)

        assert plan is not None
        assert validate_plan(cooking_domain, state, plan).ok
        assert plan[-1].action == "cook"
        assert plan[-1].args[:2] == ("r2d2", "cake_1")

    def test_items_are_chained_by_epsilon(self, cooking_domain, cooking_kb):
        plan = solve(cooking_domain, cooking_kb.snapshot())

        for before, after in zip(plan, plan.items[1:]):
            assert after.time == round_time(before.end + EPSILON)

    def test_assembly_plan_is_valid(self, assembly_domain, assembly_state):
        plan = solve(assembly_domain, assembly_state)

        assert plan is not None
        assert validate_plan(assembly_domain, assembly_state, plan).ok
        assert sum(1 for item in plan if item.action == "assemble") == 3

    def test_satisfied_goal_gives_empty_plan(self, cooking_domain, cooking_kb):
        cooking_kb.add_atom(Atom("dish_cooked", ("cake_1",)))
        plan = solve(cooking_domain, cooking_kb.snapshot())
        assert plan is not None and plan.is_empty

    def test_unreachable_goal_gives_none(self, cooking_domain, cooking_kb):
        cooking_kb.remove_atom(Atom("robot_free", ("r2d2",)))
        assert solve(cooking_domain, cooking_kb.snapshot()) is None

    def test_numeric_goal_is_unsupported(self, cooking_domain, cooking_kb):
        goal = Condition((Comparison(">", FluentTerm("battery_level", ("r2d2",)), Number(10)),))
        state = replace(cooking_kb.snapshot(), goal=goal)
        with pytest.raises(UnsupportedDomainError):
            solve(cooking_domain, state)

    def test_node_budget(self, assembly_domain, assembly_state):
        with pytest.raises(SearchBudgetExceeded):
            BuiltinSolver(node_budget=1).solve(assembly_domain, assembly_state)

    def test_planner_reuses_spec(self, cooking_domain, cooking_kb):
        planner = Planner(SolverSpec(node_budget=5000))
        assert planner.get_plan(cooking_domain, cooking_kb.snapshot()) is not None


class TestExternalSolver:
    """Running a solver executable and reading its plan."""

    def _script(self, tmp_path, body):
        path = tmp_path / "fake_solver.py"
        path.write_text(textwrap.dedent(body))
        return SolverSpec(kind="external", executable=sys.executable,
                          arguments=(str(path), "{domain}", "{problem}"), timeout=30)

    def test_plan_from_stdout(self, tmp_path, assembly_domain):
        spec = self._script(tmp_path, """
            print("; solver chatter")
            print("0.000: (move rb1 assembly_zone wheels_zone)  [5.000]")
        """)
        state = KnowledgeState.from_problem(_one_move_problem(assembly_domain))

        plan = solve(assembly_domain, state, spec)

        assert len(plan) == 1
        assert plan[0].args == ("rb1", "assembly_zone", "wheels_zone")

    def test_empty_output_means_no_plan(self, tmp_path, assembly_domain):
        spec = self._script(tmp_path, "print('no solution')\n")
        state = KnowledgeState.from_problem(_one_move_problem(assembly_domain))
        assert solve(assembly_domain, state, spec) is None

    def test_nonzero_exit(self, tmp_path, assembly_domain):
        spec = self._script(tmp_path, "import sys\nsys.exit(3)\n")
        state = KnowledgeState.from_problem(_one_move_problem(assembly_domain))
        with pytest.raises(SolverError, match="code 3"):
            solve(assembly_domain, state, spec)

    def test_invalid_plan_is_rejected(self, tmp_path, assembly_domain):
        spec = self._script(tmp_path, """
            print("0.000: (move rb1 steerwheel_zone wheels_zone)  [5.000]")
        """)
        state = KnowledgeState.from_problem(_one_move_problem(assembly_domain))
        with pytest.raises(SolverError, match="invalid plan"):
            solve(assembly_domain, state, spec)

    def test_solver_dialect_is_honoured(self, tmp_path, assembly_domain):
        spec = self._script(tmp_path, """
            print("0.000: (move rb1 assembly_zone wheels_zone)  [5.000]")
        """)
        state = KnowledgeState.from_problem(_one_move_problem(assembly_domain))

        assert len(solve(assembly_domain, state, replace(spec, dialect="b"))) == 1
        assert solve(assembly_domain, state, replace(spec, dialect="a")) is None

    def test_missing_executable(self, assembly_domain):
        spec = SolverSpec(kind="external", executable="/nonexistent/solver")
        state = KnowledgeState.from_problem(_one_move_problem(assembly_domain))
        with pytest.raises(SolverError, match="not found"):
            solve(assembly_domain, state, spec)


class TestValidatePlan:
    """Timeline simulation of plans."""

    def test_listing_plan_is_valid(self, assembly_domain, assembly_state, assembly_plan):
        report = validate_plan(assembly_domain, assembly_state, assembly_plan)
        assert report.ok, str(report)

    def test_missing_step_is_reported(self, assembly_domain, assembly_state, assembly_plan):
        report = validate_plan(assembly_domain, assembly_state, assembly_plan.without(0))

        assert not report.ok
        assert "(robot_at rb1 body_car_zone)" in report.violation.message
        assert report.violation.time == 5.001

    def test_unreached_goal(self, assembly_domain, assembly_state, assembly_plan):
        shortened = assembly_plan.without(len(assembly_plan) - 1)
        report = validate_plan(assembly_domain, assembly_state, shortened)

        assert not report.ok
        assert report.violation.item_index is None


def _one_move_problem(domain):
    return parse_problem("""(define (problem one_move) (:domain assembly)
        (:objects rb1 - robot assembly_zone wheels_zone steerwheel_zone - zone)
        (:init (robot_at rb1 assembly_zone) (robot_available rb1))
        (:goal (and (robot_at rb1 wheels_zone))))""", domain)
