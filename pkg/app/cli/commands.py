"""
CLI commands for planexec
"""
import sys
from typing import List, Optional, Sequence, Tuple

import click
from rich.console import Console
from rich.table import Table

from app.cli.terminal import Terminal
from app.config.config_manager import ConfigError, ConfigManager, get_config_manager
from app.core.action_hub import TransportDownError, open_hub
from app.core.behavior_tree import ActionUnit, TreeContext, dump_tree, graph_to_bt, tree_to_dot
from app.core.domain_expert import DomainExpert
from app.core.knowledge_base import KnowledgeBase, KnowledgeError, KnowledgeState
from app.core.plan_graph import PlanGraphError, build_graph, flows, roots, to_dot
from app.core.plan_validator import validate_plan
from app.core.planner import solve
from app.core.sim_harness import export_metrics, run_experiment
from app.models.pddl import Domain
from app.models.plan import Plan
from app.utils.log import configure_logging
from app.utils.pddl_parser import PddlError, parse_problem
from app.utils.plan_parser import PlannerError, format_plan, parse_plan_file
from app.utils.resource_loader import get_resource_loader

console = Console()

_CLI_ERRORS = (PddlError, KnowledgeError, PlannerError, PlanGraphError, ConfigError,
               TransportDownError, OSError, ValueError)


def _setup(config_file: Optional[str], log_level: Optional[str]) -> ConfigManager:
    manager = get_config_manager(config_file)
    logging_config = manager.get_config("logging")
    configure_logging(log_level or logging_config.get("level", "WARNING"),
                      logging_config.get("file"))
    return manager


def _read(path: str) -> str:
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _load_expert(domain_paths: Sequence[str]) -> DomainExpert:
    expert = DomainExpert()
    if domain_paths:
        for path in domain_paths:
            expert.add_domain(_read(path))
    else:
        expert.add_domain(get_resource_loader().read("cooking_domain.pddl"))
    return expert


def _load_problem(domain_path: str, problem_path: str) -> Tuple[Domain, KnowledgeState]:
    expert = _load_expert([domain_path])
    problem = parse_problem(_read(problem_path), expert.domain)
    return expert.domain, KnowledgeState.from_problem(problem)


def _load_plan(domain_path: str, problem_path: str,
               plan_path: str) -> Tuple[Domain, KnowledgeState, Plan]:
    domain, state = _load_problem(domain_path, problem_path)
    return domain, state, parse_plan_file(_read(plan_path), domain)


def _fail(ctx: click.Context, error: Exception) -> None:
    console.print(f"[bold red]Error:[/bold red] {error}")
    ctx.exit(1)


@click.group()
@click.version_option(version="0.1.0")
@click.option("--config", "config_file", type=click.Path(dir_okay=False),
              help="Configuration file (default ~/.planexec/config.yaml).")
@click.option("--log-level", help="Override the configured log level (DEBUG, INFO, ...).")
@click.pass_context
def cli(ctx: click.Context, config_file: Optional[str], log_level: Optional[str]):
    """planexec - plan and execute PDDL tasks with behavior trees and auctions."""
    try:
        ctx.obj = _setup(config_file, log_level)
    except (ConfigError, ValueError) as e:
        _fail(ctx, e)


@cli.command()
@click.option("--command", "-c", "commands", multiple=True,
              help="Run a terminal command (repeatable), then exit.")
@click.option("--script", "-s", type=click.Path(exists=True, dir_okay=False),
              help="Run the commands in FILE, then exit.")
@click.option("--domain", "-d", "domains", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Domain file (repeatable, merged). Defaults to the packaged cooking domain.")
@click.option("--problem", "-p", type=click.Path(exists=True, dir_okay=False),
              help="Problem file to load into the knowledge base.")
@click.pass_context
def terminal(ctx: click.Context, commands: Tuple[str, ...], script: Optional[str],
             domains: Tuple[str, ...], problem: Optional[str]):
    """Interactive shell over the knowledge base, planner and executor."""
    manager: ConfigManager = ctx.obj
    try:
        expert = _load_expert(domains)
        hub_config = manager.get_config("hub")
        hub = open_hub(hub_config.get("transport", "inprocess"),
                       hub_config.get("group", "127.0.0.1"),
                       hub_config.get("port", 47600), hub_config.get("log_file"))
        shell = Terminal(expert, config=manager.get_executor_config(), hub=hub)
        if problem:
            shell.knowledge.load_problem(parse_problem(_read(problem), expert.domain))
    except _CLI_ERRORS as e:
        _fail(ctx, e)
        return

    if commands or script:
        lines: List[str] = list(commands)
        if script:
            lines.append(f"source {script}")
        shell.run_lines(lines)
    else:
        shell.repl(sys.stdin)
    shell.executor.close()
    shell.hub.shutdown()
    ctx.exit(1 if shell.errors else 0)


@cli.command()
@click.argument("domain", type=click.Path(exists=True, dir_okay=False))
@click.argument("problem", type=click.Path(exists=True, dir_okay=False))
@click.option("--dialect", type=click.Choice(["a", "b"]), default="b",
              help="Plan output format: a (no durations) or b (with durations).")
@click.pass_context
def plan(ctx: click.Context, domain: str, problem: str, dialect: str):
    """Solve PROBLEM in DOMAIN and print the plan."""
    manager: ConfigManager = ctx.obj
    try:
        parsed, state = _load_problem(domain, problem)
        result = solve(parsed, state, manager.get_solver_spec())
    except _CLI_ERRORS as e:
        _fail(ctx, e)
        return
    if result is None:
        console.print("[bold red]Error:[/bold red] No plan found")
        ctx.exit(1)
    click.echo(format_plan(result, dialect), nl=False)


@cli.command()
@click.argument("domain", type=click.Path(exists=True, dir_okay=False))
@click.argument("problem", type=click.Path(exists=True, dir_okay=False))
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def validate(ctx: click.Context, domain: str, problem: str, plan_file: str):
    """Check that PLAN_FILE is executable from PROBLEM and reaches its goal."""
    try:
        parsed, state, parsed_plan = _load_plan(domain, problem, plan_file)
    except _CLI_ERRORS as e:
        _fail(ctx, e)
        return
    report = validate_plan(parsed, state, parsed_plan)
    if not report.ok:
        console.print(f"[bold red]Invalid:[/bold red] {report.violation}")
        ctx.exit(1)
    console.print(f"[green]Valid[/green] plan with {len(parsed_plan)} actions, "
                  f"makespan {parsed_plan.makespan:g}")


@cli.command()
@click.argument("domain", type=click.Path(exists=True, dir_okay=False))
@click.argument("problem", type=click.Path(exists=True, dir_okay=False))
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--dot", "dot_out", type=click.Path(dir_okay=False),
              help="Write the graph in graphviz format to this file.")
@click.pass_context
def graph(ctx: click.Context, domain: str, problem: str, plan_file: str,
          dot_out: Optional[str]):
    """Show the dependency graph of PLAN_FILE."""
    try:
        parsed, state, parsed_plan = _load_plan(domain, problem, plan_file)
        plan_graph = build_graph(parsed_plan, parsed, state)
        if dot_out:
            with open(dot_out, "w", encoding="utf-8") as f:
                f.write(to_dot(plan_graph))
    except _CLI_ERRORS as e:
        _fail(ctx, e)
        return

    table = Table(title=f"{len(plan_graph.nodes)} actions, {len(plan_graph.edges)} edges")
    table.add_column("#", justify="right")
    table.add_column("Action")
    table.add_column("Start", justify="right")
    table.add_column("End", justify="right")
    table.add_column("After")
    for node in plan_graph.nodes:
        after = ", ".join(str(p) for p in plan_graph.predecessors(node.index)) or "-"
        table.add_row(str(node.index), node.label, f"{node.t_start:g}", f"{node.t_end:g}", after)
    console.print(table)
    console.print(f"Roots: {', '.join(str(n.index) for n in roots(plan_graph))}")
    for path in flows(plan_graph):
        console.print(f"  flow: {' -> '.join(str(i) for i in path)}")


def _no_driver(unit: ActionUnit):
    raise click.ClickException(f"{unit.label} cannot be executed from the bt command")


@cli.command()
@click.argument("domain", type=click.Path(exists=True, dir_okay=False))
@click.argument("problem", type=click.Path(exists=True, dir_okay=False))
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--dot", "dot_out", type=click.Path(dir_okay=False),
              help="Write the tree in graphviz format to this file.")
@click.pass_context
def bt(ctx: click.Context, domain: str, problem: str, plan_file: str, dot_out: Optional[str]):
    """Print the behavior tree compiled from PLAN_FILE."""
    try:
        parsed, state, parsed_plan = _load_plan(domain, problem, plan_file)
        plan_graph = build_graph(parsed_plan, parsed, state)
        knowledge = KnowledgeBase(parsed)
        knowledge.reset(state)
        tree = graph_to_bt(plan_graph, TreeContext(knowledge, _no_driver))
        if dot_out:
            with open(dot_out, "w", encoding="utf-8") as f:
                f.write(tree_to_dot(tree.root))
    except _CLI_ERRORS as e:
        _fail(ctx, e)
        return
    click.echo(dump_tree(tree.root), nl=False)


@click.command()
@click.option("--robots", type=click.IntRange(1, 3), help="Number of robots (1-3).")
@click.option("--profile", type=click.Choice(["sim", "real"]), help="Action duration profile.")
@click.option("--horizon", type=float, help="Simulated seconds to run.")
@click.option("--seed", type=int, help="Random seed for dishes and durations.")
@click.option("--battery-period", type=float, help="Seconds between battery-low events.")
@click.option("--out", "out_file", type=click.Path(dir_okay=False),
              help="CSV file collecting one metrics column per run.")
@click.option("--hub-log", type=click.Path(dir_okay=False), help="Tee protocol messages to FILE.")
@click.option("--dot", "dot_dir", type=click.Path(file_okay=False),
              help="Write the plan graph of every plan to DIR.")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), help="Configuration file.")
@click.option("--log-level", help="Override the configured log level.")
def simexp(robots: Optional[int], profile: Optional[str], horizon: Optional[float],
           seed: Optional[int], battery_period: Optional[float], out_file: Optional[str],
           hub_log: Optional[str], dot_dir: Optional[str], config_file: Optional[str],
           log_level: Optional[str]):
    """Run the simulated cooking experiment and report its metrics."""
    try:
        manager = _setup(config_file, log_level)
        cfg = manager.get_sim_config(robots=robots, profile=profile, horizon=horizon, seed=seed,
                                     battery_period=battery_period, hub_log=hub_log,
                                     dot_dir=dot_dir)
        with console.status(f"Simulating {cfg.horizon:g} s with {cfg.robots} robot(s)..."):
            result = run_experiment(cfg)
        if out_file:
            export_metrics(result.metrics, out_file)
    except _CLI_ERRORS as e:
        console.print(f"[bold red]Error:[/bold red] {e}")
        sys.exit(1)

    table = Table(title=f"{cfg.robots} robot(s), profile {cfg.profile}, seed {cfg.seed}")
    table.add_column("Metric")
    table.add_column("Value", justify="right")
    for name, value in result.metrics.rows():
        table.add_row(name, value)
    console.print(table)
    if out_file:
        console.print(f"Metrics appended to [bold]{out_file}[/bold]")
