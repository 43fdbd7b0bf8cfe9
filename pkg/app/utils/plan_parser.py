"""
Reading and writing timestamped plan files.

Two dialects are understood:
  (a) ``<time>\\t(<action> <args...>)`` with durations inferred from the timeline
  (b) ``<time>: (<action> <args...>)  [<duration>]`` as printed by POPF
"""
import logging
import re
from collections import Counter
from typing import List, Optional, Tuple

from app.models.pddl import Domain, Number, format_number
from app.models.plan import PLAN_DIALECTS, Plan, PlanItem, round_time

logger = logging.getLogger(__name__)


class PlannerError(Exception):
    """Base class for planning errors."""
    pass


class PlanParseError(PlannerError):
    """Raised when a plan file cannot be read."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


_NUMBER = r"\d+(?:\.\d*)?(?:[eE][-+]?\d+)?"
_LINE = re.compile(
    rf"^(?P<time>{_NUMBER})\s*(?P<colon>:)?\s*\((?P<body>[^()]*)\)"
    rf"\s*(?:\[\s*(?P<duration>{_NUMBER})\s*\])?$")


def _modal_gap(times: List[float]) -> Optional[float]:
    gaps = [round_time(b - a) for a, b in zip(times, times[1:])]
    if not gaps:
        return None
    counts = Counter(gaps)
    best = max(counts.values())
    return min(gap for gap, count in counts.items() if count == best)


def _dialect_of(match: "re.Match[str]") -> str:
    return "b" if match.group("colon") and match.group("duration") else "a"


def parse_plan_file(text: str, domain: Domain, strict: bool = True,
                    dialect: str = "auto") -> Plan:
    """
    Parse a plan in either dialect, or only the one named by dialect.

    Items without a bracketed duration get the gap to the next strictly
    greater timestamp; the last timestamp group gets the plan's modal gap.

    Args:
        text: Plan file content.
        domain: Domain the actions must belong to.
        strict: If False, lines that are not plan items (solver chatter) are skipped.
        dialect: "a", "b" or "auto"; with "a" or "b" lines of the other dialect
            are not plan items.

    Returns:
        The parsed Plan.

    Raises:
        PlanParseError: Malformed line, unknown action or arity mismatch.
    """
    if dialect not in PLAN_DIALECTS:
        raise ValueError(f"Unknown plan dialect '{dialect}'")
    raw: List[Tuple[int, float, str, Tuple[str, ...], Optional[float]]] = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(";"):
            continue
        match = _LINE.match(stripped)
        if match is not None and dialect != "auto" and _dialect_of(match) != dialect:
            match = None
        if match is None:
            if strict:
                raise PlanParseError(f"Malformed plan line: '{stripped}'", number)
            logger.debug(f"Skipping solver output line {number}: {stripped}")
            continue
        words = match.group("body").lower().split()
        if not words:
            raise PlanParseError("Empty action", number)
        action = domain.get_action(words[0])
        if action is None:
            raise PlanParseError(f"Unknown action '{words[0]}'", number)
        args = tuple(words[1:])
        if len(args) != action.arity:
            raise PlanParseError(
                f"Arity mismatch for '{action.name}': expected {action.arity}, got {len(args)}",
                number)
        duration = match.group("duration")
        raw.append((number, round_time(float(match.group("time"))), action.name, args,
                    round_time(float(duration)) if duration is not None else None))

    times = sorted({entry[1] for entry in raw})
    modal = _modal_gap(times)
    items = []
    for number, time, name, args, duration in raw:
        if duration is None:
            later = [t for t in times if t > time]
            if later:
                duration = round_time(later[0] - time)
            elif modal is not None:
                duration = modal
            else:
                declared = domain.action_map[name].duration
                if not isinstance(declared, Number):
                    raise PlanParseError(f"Cannot infer the duration of '{name}'", number)
                duration = declared.value
        if duration <= 0:
            raise PlanParseError("Durations must be positive", number)
        items.append(PlanItem(time, name, args, duration))
    return Plan(tuple(items))


def format_plan(plan: Plan, dialect: str = "b") -> str:
    """
    Print a plan in dialect 'a' (tab separated) or 'b' (POPF style).
    """
    if dialect == "a":
        lines = [f"{format_number(item.time)}\t{item.label}" for item in plan]
    elif dialect == "b":
        lines = [str(item) for item in plan]
    else:
        raise ValueError(f"Unknown plan dialect '{dialect}'")
    return "\n".join(lines) + ("\n" if lines else "")
