"""
Shared fixtures: the PDDL scenarios shipped in app/resources.
"""
import pytest

from app.core.domain_expert import DomainExpert
from app.core.knowledge_base import KnowledgeBase, KnowledgeState
from app.utils.pddl_parser import parse_domain, parse_problem
from app.utils.plan_parser import parse_plan_file
from app.utils.resource_loader import get_resource_loader


@pytest.fixture(scope="session")
def resources():
    """The packaged resource loader."""
    return get_resource_loader()


@pytest.fixture(scope="session")
def assembly_domain(resources):
    return parse_domain(resources.read("assembly_domain.pddl"))


@pytest.fixture(scope="session")
def assembly_problem(resources, assembly_domain):
    return parse_problem(resources.read("assembly_problem.pddl"), assembly_domain)


@pytest.fixture
def assembly_state(assembly_problem):
    return KnowledgeState.from_problem(assembly_problem)


@pytest.fixture(scope="session")
def assembly_plan(resources, assembly_domain):
    """The three-robot, three-car plan in the tab-separated dialect."""
    return parse_plan_file(resources.read("assembly_plan.txt"), assembly_domain)


@pytest.fixture(scope="session")
def cooking_domain(resources):
    return parse_domain(resources.read("cooking_domain.pddl"))


@pytest.fixture(scope="session")
def cooking_problem(resources, cooking_domain):
    return parse_problem(resources.read("cooking_problem.pddl"), cooking_domain)


@pytest.fixture
def cooking_kb(cooking_domain, cooking_problem):
    """A knowledge base loaded with the one-robot cake problem."""
    kb = KnowledgeBase(DomainExpert([cooking_domain]))
    kb.load_problem(cooking_problem)
    return kb
