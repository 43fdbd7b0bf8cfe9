"""
Plans, grounded actions and solver specifications.
"""
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple

from app.models.pddl import Condition, Effect, NumericExpr

EPSILON = 0.001
TIME_DIGITS = 6


def round_time(value: float) -> float:
    """Snap a timestamp to the plan time grid so sums of decimal times compare equal."""
    return round(value, TIME_DIGITS)


@dataclass(frozen=True)
class GroundedAction:
    """A durative action with every variable substituted by an object."""
    name: str
    args: Tuple[str, ...]
    duration: NumericExpr
    cond_start: Condition = field(default_factory=Condition)
    cond_overall: Condition = field(default_factory=Condition)
    cond_end: Condition = field(default_factory=Condition)
    eff_start: Effect = field(default_factory=Effect)
    eff_end: Effect = field(default_factory=Effect)

    @property
    def label(self) -> str:
        return f"({' '.join((self.name,) + self.args)})"

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True, order=True)
class PlanItem:
    time: float
    action: str
    args: Tuple[str, ...] = ()
    duration: float = 0.0

    @property
    def end(self) -> float:
        return round_time(self.time + self.duration)

    @property
    def label(self) -> str:
        return f"({' '.join((self.action,) + self.args)})"

    def __str__(self) -> str:
        return f"{format_time(self.time)}: {self.label}  [{format_time(self.duration)}]"


@dataclass(frozen=True)
class Plan:
    """Timestamped plan items sorted by start time (ties keep solver order)."""
    items: Tuple[PlanItem, ...] = ()

    def __post_init__(self) -> None:
        ordered = tuple(sorted(self.items, key=lambda item: item.time))
        object.__setattr__(self, "items", ordered)

    def __iter__(self) -> Iterator[PlanItem]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __getitem__(self, index: int) -> PlanItem:
        return self.items[index]

    @property
    def is_empty(self) -> bool:
        return not self.items

    @property
    def makespan(self) -> float:
        return max((item.end for item in self.items), default=0.0)

    def without(self, index: int) -> "Plan":
        return Plan(self.items[:index] + self.items[index + 1:])


SOLVER_KINDS = ("builtin", "external")
PLAN_DIALECTS = ("auto", "a", "b")


@dataclass(frozen=True)
class SolverSpec:
    """
    Which solver to run. External solvers get ``{domain}``/``{problem}``
    placeholders substituted in their argument template; the plan is read
    from stdout unless ``output`` names a file.
    """
    kind: str = "builtin"
    executable: Optional[str] = None
    arguments: Tuple[str, ...] = ("{domain}", "{problem}")
    output: Optional[str] = None
    dialect: str = "auto"
    timeout: float = 15.0
    node_budget: int = 200000

    def __post_init__(self) -> None:
        if self.kind not in SOLVER_KINDS:
            raise ValueError(f"Unknown solver kind '{self.kind}'")
        if self.dialect not in PLAN_DIALECTS:
            raise ValueError(f"Unknown plan dialect '{self.dialect}'")
        if self.kind == "external" and not self.executable:
            raise ValueError("External solvers need an executable")
        if self.timeout <= 0 or self.node_budget <= 0:
            raise ValueError("Solver timeout and node budget must be positive")


def format_time(value: float) -> str:
    """Three decimals like POPF, widened to six when that would lose precision."""
    text = f"{value:.3f}"
    if float(text) == round_time(value):
        return text
    return f"{round_time(value):.6f}"
