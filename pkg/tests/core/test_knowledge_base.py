"""
Tests for the domain expert and the knowledge base.
"""
import threading

import pytest

from app.core.domain_expert import DomainExpert, DomainMergeError, merge_domains
from app.core.knowledge_base import (
    InstanceReferencedError,
    KnowledgeBase,
    UnknownTypeError,
    ValidationError,
)
from app.models.pddl import Atom, Condition, Effect, FluentTerm, FluentValue, NumericEffect, Number
from app.utils.pddl_parser import parse_condition, parse_domain


class TestDomainExpert:
    """Merging several domains into one view."""

    def test_merge_navigation_and_manipulation(self, resources):
        expert = DomainExpert()
        expert.add_domain(resources.read("navigation_domain.pddl"))
        merged = expert.add_domain(resources.read("manipulation_domain.pddl"))

        assert merged.name == "navigation-manipulation"
        assert {a.name for a in merged.actions} >= {"move", "pick", "place"}
        assert expert.get_predicate("item_at") is not None
        assert expert.get_types()[0] == "object"

    def test_merge_is_idempotent(self, assembly_domain):
        assert merge_domains([assembly_domain, assembly_domain]) == assembly_domain

    def test_conflicting_predicate_is_rejected(self, resources):
        """Test that a redefinition with another signature leaves the expert unchanged."""
        expert = DomainExpert()
        expert.add_domain(resources.read("navigation_domain.pddl"))
        clash = parse_domain("""(define (domain clash)
            (:types robot - object)
            (:predicates (robot_available ?r - robot ?x - robot)))""")

        with pytest.raises(DomainMergeError) as excinfo:
            expert.add_domain(clash)

        assert excinfo.value.name == "robot_available"
        assert len(expert.sources) == 1

    def test_empty_merge(self):
        with pytest.raises(ValueError):
            merge_domains([])


class TestKnowledgeBase:
    """Instances, facts, fluents and goals validated against the domain."""

    @pytest.fixture
    def kb(self, cooking_domain):
        return KnowledgeBase(cooking_domain)

    def test_add_instance_is_idempotent(self, kb):
        first = kb.add_instance("r2d2", "robot")
        again = kb.add_instance("R2D2", "robot")

        assert again is first
        assert [str(i) for i in kb.snapshot().instances] == ["r2d2 - robot"]

    def test_add_instance_unknown_type(self, kb):
        with pytest.raises(UnknownTypeError):
            kb.add_instance("r2d2", "android")

    def test_add_instance_type_clash(self, kb):
        kb.add_instance("r2d2", "robot")
        with pytest.raises(ValidationError, match="already exists"):
            kb.add_instance("r2d2", "zone")

    def test_atoms_are_validated(self, kb):
        kb.add_instance("r2d2", "robot")
        kb.add_instance("kitchen", "zone")

        assert kb.add_atom(Atom("robot_at", ("r2d2", "kitchen"))) is True
        assert kb.add_atom(Atom("robot_at", ("r2d2", "kitchen"))) is False
        with pytest.raises(ValidationError, match="Type mismatch"):
            kb.add_atom(Atom("robot_at", ("kitchen", "r2d2")))
        with pytest.raises(ValidationError, match="Unknown object"):
            kb.add_atom(Atom("robot_free", ("bb8",)))
        with pytest.raises(ValidationError, match="Unknown predicate"):
            kb.add_atom(Atom("flying", ("r2d2",)))

    def test_remove_atom(self, kb):
        kb.add_instance("r2d2", "robot")
        kb.add_atom(Atom("robot_free", ("r2d2",)))

        assert kb.remove_atom(Atom("robot_free", ("r2d2",))) is True
        assert kb.remove_atom(Atom("robot_free", ("r2d2",))) is False

    def test_referenced_instance_cannot_be_removed(self, kb):
        kb.add_instance("r2d2", "robot")
        kb.add_atom(Atom("robot_free", ("r2d2",)))

        with pytest.raises(InstanceReferencedError):
            kb.remove_instance("r2d2")
        kb.remove_atom(Atom("robot_free", ("r2d2",)))
        kb.remove_instance("r2d2")
        assert kb.snapshot().instances == ()

    def test_fluents(self, kb):
        kb.add_instance("r2d2", "robot")
        term = FluentTerm("battery_level", ("r2d2",))
        kb.set_fluent(FluentValue("battery_level", ("r2d2",), 80))

        assert kb.snapshot().get_fluent(term) == 80.0
        assert kb.remove_fluent(term) is True
        assert kb.remove_fluent(term) is False

    def test_goal_and_satisfaction(self, cooking_kb):
        assert not cooking_kb.is_goal_satisfied()
        cooking_kb.add_atom(Atom("dish_cooked", ("cake_1",)))
        assert cooking_kb.is_goal_satisfied()

    def test_goal_must_validate(self, kb):
        with pytest.raises(ValidationError):
            kb.set_goal(Condition((Atom("dish_cooked", ("cake_9",)),)))

    def test_numeric_goal(self, cooking_kb, cooking_domain):
        goal = parse_condition("(and (> (battery_level r2d2) 50))", cooking_domain,
                               {"r2d2": "robot"})
        cooking_kb.set_goal(goal)
        assert cooking_kb.is_goal_satisfied()

    def test_apply_effect(self, cooking_kb):
        """Test deletes before adds and numeric updates from the pre-state."""
        term = FluentTerm("battery_level", ("r2d2",))
        effect = Effect(
            adds=(Atom("robot_at", ("r2d2", "fridge_zone")),),
            dels=(Atom("robot_at", ("r2d2", "kitchen")),),
            numeric=(NumericEffect("decrease", term, Number(30)),),
        )

        state = cooking_kb.apply(effect)

        assert state.has_atom(Atom("robot_at", ("r2d2", "fridge_zone")))
        assert not state.has_atom(Atom("robot_at", ("r2d2", "kitchen")))
        assert state.get_fluent(term) == 70.0

    def test_snapshots_never_change(self, cooking_kb):
        before = cooking_kb.snapshot()
        cooking_kb.add_atom(Atom("dish_cooked", ("cake_1",)))

        assert not before.has_atom(Atom("dish_cooked", ("cake_1",)))
        assert cooking_kb.snapshot().version == before.version + 1

    def test_reset_round_trip(self, cooking_kb, cooking_domain):
        state = cooking_kb.snapshot()
        other = KnowledgeBase(cooking_domain)
        other.reset(state)

        assert other.snapshot().atoms == state.atoms
        assert other.snapshot().goal == state.goal
        assert other.to_pddl("p") == cooking_kb.to_pddl("p")

    def test_concurrent_writers(self, kb):
        """Test that parallel additions are all kept."""
        kb.add_instance("kitchen", "zone")
        names = [f"robot_{i}" for i in range(40)]

        def add(name):
            kb.add_instance(name, "robot")
            kb.add_atom(Atom("robot_at", (name, "kitchen")))

        threads = [threading.Thread(target=add, args=(n,)) for n in names]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

        assert len(kb.snapshot().atoms) == 40
        assert len(kb.snapshot().instances) == 41
