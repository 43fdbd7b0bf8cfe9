"""
Operator shell: inspect and edit the knowledge, plan, run and monitor.

Every command is one line; PDDL fragments are written verbatim in
parentheses. Errors are reported as a single ``ERROR: ...`` line.
"""
import logging
import os
import sys
from typing import Callable, Dict, Iterable, List, Optional, TextIO

from rich import box
from rich.console import Console
from rich.prompt import Prompt
from rich.table import Table

from app.core.action_hub import ActionHub, InProcessHub, TransportDownError
from app.core.action_performer import ActionJob, ActionPerformer, timed_work
from app.core.clock import VirtualClock
from app.core.domain_expert import DomainExpert
from app.core.executor import Executor, ExecutorConfig, ExecutorError
from app.core.grounding import GroundingError, action_duration, ground_action, object_types
from app.core.knowledge_base import KnowledgeBase, KnowledgeError
from app.core.plan_graph import PlanGraphError
from app.core.planner import solve
from app.models.messages import PerformerSpec
from app.models.pddl import Atom, FluentValue, objects_of_type
from app.models.status import ActionStatus, PlanRunStatus, RunState
from app.utils.codec import CodecError
from app.utils.pddl_parser import PddlError, parse_condition, parse_fact
from app.utils.pddl_printer import print_action, print_domain, print_signature
from app.utils.plan_parser import PlannerError, format_plan

logger = logging.getLogger(__name__)

USAGE = """Commands:
  get domain
  get problem [instances|predicates|functions|goals]
  get model types
  get model action|predicate|function <name>
  get plan
  get performers
  get status
  set instance <name> <type>
  set predicate (<predicate> <args>...)
  set function (= (<function> <args>...) <value>)
  set goal <condition>
  remove instance <name>
  remove predicate (<predicate> <args>...)
  remove function (<function> <args>...)
  remove goal
  run                 plan and execute, streaming progress
  start               plan and start executing in the background
  step <seconds>      advance the clock while a plan runs
  wait                run until the current plan ends
  cancel
  source <file>
  help
  quit"""

_HANDLED_ERRORS = (PddlError, KnowledgeError, PlannerError, PlanGraphError, ExecutorError,
                   TransportDownError, CodecError, ValueError, OSError)


DEFAULT_STALL_TIMEOUT = 60.0


class TerminalError(Exception):
    """A malformed command line."""
    pass


class Terminal:
    """
    The shell state: one knowledge base, one executor and its performers.
    With the default in-process hub everything runs on a virtual clock, so
    transcripts are reproducible.

    A running plan that reports nothing for stall_timeout seconds (or twice
    its longest action, if longer) is cancelled and reported as a failure.
    """

    def __init__(self, expert: DomainExpert, out: Optional[TextIO] = None,
                 config: Optional[ExecutorConfig] = None, hub: Optional[ActionHub] = None,
                 stall_timeout: float = DEFAULT_STALL_TIMEOUT):
        if stall_timeout <= 0:
            raise ValueError("stall_timeout must be positive")
        self.expert = expert
        self.knowledge = KnowledgeBase(expert)
        self.hub = hub or InProcessHub(VirtualClock())
        self.clock = self.hub.clock
        self.config = config or ExecutorConfig()
        self.executor = Executor(self.knowledge, self.hub, self.config)
        self.executor.add_listener(self._monitor)
        self.stall_timeout = stall_timeout
        self._last_progress = self.clock.now()
        self.performers: Dict[str, ActionPerformer] = {}
        self.console = Console(file=out or sys.stdout, no_color=True, highlight=False,
                               width=120, soft_wrap=True)
        self.errors = 0
        self.finished = False
        self._depth = 0
        self._commands: Dict[str, Callable[[str], None]] = {
            "get": self._get,
            "set": self._set,
            "remove": self._remove,
            "run": self._run,
            "start": self._start,
            "step": self._step,
            "wait": self._wait,
            "cancel": self._cancel,
            "source": self._source,
            "help": lambda _: self._print(USAGE),
            "quit": self._quit,
            "exit": self._quit,
        }

    # Output ---------------------------------------------------------------

    def _print(self, text: str = "") -> None:
        self.console.print(text, markup=False)

    def _error(self, message: str) -> None:
        self.errors += 1
        self._print(f"ERROR: {message}")

    def _monitor(self, status: PlanRunStatus, changed: Optional[ActionStatus]) -> None:
        self._last_progress = self.clock.now()
        if changed is None:
            return
        percent = int(round(changed.completion * 100))
        self._print(f"[{self.clock.now():.3f}] {changed.label} {changed.phase.value} {percent}%")

    # Dispatch -------------------------------------------------------------

    def execute(self, line: str) -> bool:
        """Run one command line. Returns False if it failed."""
        line = line.strip()
        if not line or line.startswith("#"):
            return True
        verb, _, rest = line.partition(" ")
        handler = self._commands.get(verb.lower())
        if handler is None:
            self._error(f"unknown command '{verb}'")
            self._print(USAGE)
            return False
        errors = self.errors
        try:
            handler(rest.strip())
        except TerminalError as e:
            self._error(str(e))
        except _HANDLED_ERRORS as e:
            self._error(str(e))
        return self.errors == errors

    def run_lines(self, lines: Iterable[str]) -> int:
        """Execute lines until quit; returns the number of failed commands."""
        failed = 0
        for line in lines:
            if not self.execute(line):
                failed += 1
            if self.finished:
                break
        return failed

    def repl(self, stream: Optional[TextIO] = None) -> int:
        """
        Read commands from a stream (stdin by default) until quit or end of input.

        Returns:
            0 on a clean exit, 1 if reading from a script and any command failed.
        """
        stream = stream or sys.stdin
        if stream.isatty():
            while not self.finished:
                try:
                    line = Prompt.ask("planexec", console=self.console)
                except (EOFError, KeyboardInterrupt):
                    break
                self.execute(line)
            return 0
        return 1 if self.run_lines(stream) else 0

    # Helpers --------------------------------------------------------------

    def _objects(self) -> Dict[str, str]:
        return object_types(self.expert.domain, self.knowledge.snapshot())

    @staticmethod
    def _split(rest: str, usage: str) -> List[str]:
        parts = rest.split(None, 1)
        if not parts:
            raise TerminalError(f"usage: {usage}")
        return parts

    # get ------------------------------------------------------------------

    def _get(self, rest: str) -> None:
        parts = self._split(rest, "get domain|problem|model|plan|performers|status")
        what, arg = parts[0], (parts[1] if len(parts) > 1 else "")
        if what == "domain":
            self._print(print_domain(self.expert.domain).rstrip())
        elif what == "problem":
            self._get_problem(arg)
        elif what == "model":
            self._get_model(arg)
        elif what == "plan":
            self._get_plan()
        elif what == "performers":
            self._get_performers()
        elif what == "status":
            self._get_status()
        else:
            raise TerminalError(f"cannot get '{what}'")

    def _get_problem(self, section: str) -> None:
        state = self.knowledge.snapshot()
        if not section:
            self._print(self.knowledge.to_pddl().rstrip())
        elif section == "instances":
            for inst in state.instances:
                self._print(f"{inst.name} - {inst.type}")
        elif section == "predicates":
            for atom in sorted(state.atoms, key=str):
                self._print(str(atom))
        elif section == "functions":
            for value in sorted(state.fluents, key=str):
                self._print(str(value))
        elif section == "goals":
            if state.goal.literals:
                self._print(str(state.goal))
        else:
            raise TerminalError(f"unknown problem section '{section}'")

    def _get_model(self, rest: str) -> None:
        parts = rest.split()
        if parts == ["types"]:
            for name in self.expert.get_types():
                self._print(name)
            return
        if len(parts) != 2:
            raise TerminalError("usage: get model types | get model action|predicate|function <name>")
        kind, name = parts
        if kind == "action":
            action = self.expert.get_action(name)
            if action is None:
                raise TerminalError(f"unknown action '{name}'")
            self._print(print_action(action))
        elif kind in ("predicate", "function"):
            decl = (self.expert.get_predicate(name) if kind == "predicate"
                    else self.expert.get_function(name))
            if decl is None:
                raise TerminalError(f"unknown {kind} '{name}'")
            self._print(print_signature(decl.name, decl.params))
        else:
            raise TerminalError(f"unknown model element '{kind}'")

    def _get_plan(self) -> None:
        plan = solve(self.expert.domain, self.knowledge.snapshot(), self.config.solver)
        if plan is None:
            self._print("no plan")
        elif plan.is_empty:
            self._print("empty plan")
        else:
            self._print(format_plan(plan, "b").rstrip())

    def _get_performers(self) -> None:
        self._ensure_performers()
        table = Table(box=box.SIMPLE, show_edge=False)
        for column in ("Performer", "Action", "Specialization", "State", "Current"):
            table.add_column(column)
        for performer_id in sorted(self.performers):
            info = self.performers[performer_id].info()
            table.add_row(info.performer_id, info.action_name, " ".join(info.specialization),
                          info.state.value, info.current or "-")
        self.console.print(table)

    def _get_status(self) -> None:
        status = self.executor.status()
        reason = f" ({status.reason})" if status.reason else ""
        self._print(f"plan {status.plan_id}: {status.state.value}{reason}")
        for action in status.actions:
            performer = f" on {action.performer}" if action.performer else ""
            self._print(f"  {action.index} {action.label} {action.phase.value} "
                        f"{int(round(action.completion * 100))}%{performer}")

    # set / remove -----------------------------------------------------------

    def _set(self, rest: str) -> None:
        kind = self._split(rest, "set instance|predicate|function|goal ...")[0]
        arg = rest[len(kind):].strip()
        if kind == "instance":
            parts = arg.split()
            if len(parts) != 2:
                raise TerminalError("usage: set instance <name> <type>")
            self.knowledge.add_instance(parts[0], parts[1])
        elif kind == "predicate":
            fact = parse_fact(arg, self.expert.domain, self._objects())
            if not isinstance(fact, Atom):
                raise TerminalError("expected a predicate, use 'set function' for fluents")
            self.knowledge.add_atom(fact)
        elif kind == "function":
            fact = parse_fact(arg, self.expert.domain, self._objects())
            if not isinstance(fact, FluentValue):
                raise TerminalError("usage: set function (= (<function> <args>...) <value>)")
            self.knowledge.set_fluent(fact)
        elif kind == "goal":
            self.knowledge.set_goal(parse_condition(arg, self.expert.domain, self._objects()))
        else:
            raise TerminalError(f"cannot set '{kind}'")

    def _remove(self, rest: str) -> None:
        kind = self._split(rest, "remove instance|predicate|function|goal ...")[0]
        arg = rest[len(kind):].strip()
        if kind == "instance":
            self.knowledge.remove_instance(arg)
        elif kind == "predicate":
            fact = parse_fact(arg, self.expert.domain, self._objects())
            if not isinstance(fact, Atom) or not self.knowledge.remove_atom(fact):
                raise TerminalError(f"no such predicate {arg}")
        elif kind == "function":
            fact = parse_fact(f"(= {arg} 0)", self.expert.domain, self._objects())
            if not isinstance(fact, FluentValue) or not self.knowledge.remove_fluent(fact.term):
                raise TerminalError(f"no such function value {arg}")
        elif kind == "goal":
            self.knowledge.clear_goal()
        else:
            raise TerminalError(f"cannot remove '{kind}'")

    # execution --------------------------------------------------------------

    def _ensure_performers(self) -> None:
        """
        One performer per action and per object of its first parameter's type;
        a parameterless action gets a single performer named after it.
        """
        domain = self.expert.domain
        state = self.knowledge.snapshot()
        for action in domain.actions:
            if action.params:
                owners = objects_of_type(domain, state.instances, action.params[0].type)
                specs = [PerformerSpec(f"{owner}_{action.name}", action.name, (owner,))
                         for owner in owners]
            else:
                specs = [PerformerSpec(action.name, action.name)]
            for spec in specs:
                if spec.performer_id in self.performers:
                    continue
                work = timed_work(self._declared_duration)
                self.performers[spec.performer_id] = ActionPerformer(
                    self.hub, spec, work, self.config.feedback_period).start()

    def _declared_duration(self, job: ActionJob) -> float:
        try:
            grounded = ground_action(self.expert.domain, job.action_name, job.args)
            return action_duration(grounded, self.knowledge.snapshot().fluent_map)
        except GroundingError as e:
            logger.warning(f"Using 1 s for {job.label}: {e}")
            return 1.0

    def _start(self, rest: str = "") -> bool:
        self._ensure_performers()
        status = self.executor.start_goal()
        if status.state == RunState.FAILED:
            self._print(f"FAILURE: {status.reason}")
            self.errors += 1
            return False
        return True

    def _wait(self, rest: str = "") -> None:
        if not self.executor.running:
            raise TerminalError("no plan is running")

        def finished() -> bool:
            return self.executor.status().state.terminal

        limit = self._stall_limit()
        self._last_progress = self.clock.now()
        while not finished():
            mark = self._last_progress
            self.clock.run_until_complete(finished, max(0.0, mark + limit - self.clock.now()))
            if finished() or self._last_progress > mark:
                continue
            logger.warning(f"Plan {self.executor.status().plan_id} stalled at "
                           f"t={self.clock.now():.3f}")
            self.executor.cancel()
            self._print(f"FAILURE: no progress for {limit:g} s")
            self.errors += 1
            return
        self._report()

    def _stall_limit(self) -> float:
        plan = self.executor.plan
        longest = max((item.duration for item in plan), default=0.0) if plan else 0.0
        return max(self.stall_timeout, 2 * longest)

    def _report(self) -> None:
        status = self.executor.status()
        if status.state == RunState.SUCCEEDED:
            self._print("SUCCESS")
        elif status.state == RunState.CANCELLED:
            self._print("CANCELLED")
        elif status.state == RunState.FAILED:
            self._print(f"FAILURE: {status.reason}")
            self.errors += 1
        else:
            self._print(f"still {status.state.value}")

    def _run(self, rest: str) -> None:
        if self._start():
            self._wait()

    def _step(self, rest: str) -> None:
        try:
            seconds = float(rest)
        except ValueError:
            raise TerminalError("usage: step <seconds>") from None
        if seconds <= 0:
            raise TerminalError("step needs a positive duration")
        self.clock.run_until(self.clock.now() + seconds)
        if self.executor.status().state.terminal:
            self._report()

    def _cancel(self, rest: str) -> None:
        if not self.executor.cancel():
            self._print("nothing to cancel")
            return
        self.clock.run_until(self.clock.now())
        self._report()

    def _source(self, rest: str) -> None:
        path = os.path.expanduser(rest)
        if not path:
            raise TerminalError("usage: source <file>")
        if self._depth > 8:
            raise TerminalError("source nested too deeply")
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
        self._depth += 1
        try:
            self.run_lines(lines)
        finally:
            self._depth -= 1

    def _quit(self, rest: str) -> None:
        self.finished = True
