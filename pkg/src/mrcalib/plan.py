"""Run plans: which group is focused in each run, at which resolution, for how many evaluations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from mrcalib.params import Discrete, Full, ParameterSpace, ResolutionMode, Shrunk, parse_mode


class PlanError(ValueError):
    """A run plan violates a hard invariant; ``problems`` lists each violation."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid run plan: " + "; ".join(self.problems))


@dataclass(frozen=True)
class RunConfig:
    budget: int
    modes: tuple[ResolutionMode, ...]

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(parse_mode(m) for m in self.modes))


@dataclass(frozen=True)
class RunPlan:
    g: int
    runs: tuple[RunConfig, ...]
    w: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(self.runs))

    @property
    def x(self) -> int:
        """Number of fine-tuning runs after every group has been focused once."""
        return len(self.runs) - self.g

    @property
    def budgets(self) -> list[int]:
        return [r.budget for r in self.runs]

    @property
    def total_budget(self) -> int:
        return sum(self.budgets)

    def cumulative_budgets(self) -> list[int]:
        out, acc = [], 0
        for b in self.budgets:
            acc += b
            out.append(acc)
        return out

    def mode_matrix(self) -> list[list[ResolutionMode]]:
        """Modes indexed ``[group - 1][run - 1]``, the layout of a plan table."""
        return [[run.modes[j] for run in self.runs] for j in range(self.g)]

    def scaled(self, total: int) -> "RunPlan":
        """Same schedule with budgets rescaled to sum to ``total``."""
        factor = total / self.total_budget
        budgets = [max(1, round(b * factor)) for b in self.budgets]
        budgets[-1] += total - sum(budgets)
        return RunPlan(self.g, tuple(RunConfig(b, r.modes) for b, r in zip(budgets, self.runs)), self.w)

    def to_json(self) -> dict:
        return {
            "g": self.g,
            "w": self.w,
            "budgets": self.budgets,
            "modes": [[m.to_json() for m in row] for row in self.mode_matrix()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "RunPlan":
        g = int(data["g"])
        budgets = [int(b) for b in data["budgets"]]
        matrix = data["modes"]
        if len(matrix) != g:
            raise PlanError([f"mode matrix has {len(matrix)} group rows, expected g={g}"])
        for j, row in enumerate(matrix, start=1):
            if len(row) != len(budgets):
                raise PlanError([f"group {j} has {len(row)} run entries, expected {len(budgets)}"])
        runs = tuple(
            RunConfig(budgets[r], tuple(parse_mode(matrix[j][r]) for j in range(g)))
            for r in range(len(budgets))
        )
        return cls(g, runs, float(data.get("w", 2.0)))


def default_plan() -> RunPlan:
    """Six groups, seven runs, 4000 evaluations, w = 2."""
    budgets = (200, 300, 450, 550, 700, 800, 1000)
    group6 = (Discrete(2), Discrete(2), Discrete(2), Discrete(3), Discrete(5), Full(), Shrunk())
    runs = []
    for r, budget in enumerate(budgets, start=1):
        modes = []
        for grp in range(1, 7):
            if grp == 6:
                modes.append(group6[r - 1])
            elif grp == r:
                modes.append(Full())
            elif grp < r:
                modes.append(Shrunk())
            else:
                modes.append(Discrete(5))
        runs.append(RunConfig(budget, tuple(modes)))
    return RunPlan(g=6, runs=tuple(runs), w=2.0)


def traditional_plan(total_budget: int, w: float = 2.0) -> RunPlan:
    """Whole-space baseline: one run, one group, every parameter at full range."""
    return RunPlan(g=1, runs=(RunConfig(int(total_budget), (Full(),)),), w=w)


def mode_for(plan: RunPlan, run: int, group: int) -> ResolutionMode:
    if not 1 <= run <= len(plan.runs):
        raise ValueError(f"run {run} outside 1..{len(plan.runs)}")
    if not 1 <= group <= plan.g:
        raise ValueError(f"group {group} outside 1..{plan.g}")
    return plan.runs[run - 1].modes[group - 1]


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _plan_problems(plan: RunPlan) -> list[str]:
    problems = []
    if plan.g < 1:
        problems.append(f"g must be >= 1, got {plan.g}")
    if not plan.w > 0:
        problems.append(f"w must be positive, got {plan.w}")
    if len(plan.runs) < plan.g:
        problems.append(f"plan has {len(plan.runs)} runs but g={plan.g} groups")
    for r, run in enumerate(plan.runs, start=1):
        if run.budget < 1:
            problems.append(f"run {r}: budget must be >= 1, got {run.budget}")
        if len(run.modes) != plan.g:
            problems.append(f"run {r}: {len(run.modes)} modes for g={plan.g} groups")
            continue
        for grp, mode in enumerate(run.modes, start=1):
            if r <= plan.g:
                if grp == r:
                    expected = "full"
                    ok = isinstance(mode, Full)
                elif grp < r:
                    expected = "shrunk"
                    ok = isinstance(mode, Shrunk)
                else:
                    expected = "discrete"
                    ok = isinstance(mode, Discrete)
            else:
                expected = "shrunk"
                ok = isinstance(mode, Shrunk)
            if not ok:
                problems.append(f"run {r}, group {grp}: expected {expected} mode, got {mode.to_json()!r}")
    return problems


def validate_plan(plan: RunPlan, space: ParameterSpace | None = None, *, strict: bool = True) -> ValidationReport:
    """Check the plan invariants, and the plan against ``space`` when given.

    Hard violations raise :class:`PlanError` (or are collected in the
    report's ``errors`` when ``strict`` is false). Group-size imbalance and a
    non-increasing budget schedule are only warnings.
    """
    report = ValidationReport(errors=_plan_problems(plan))
    if space is not None:
        sizes = {g: 0 for g in range(1, plan.g + 1)}
        for spec in space:
            if spec.group > plan.g:
                report.errors.append(f"parameter {spec.name!r}: group {spec.group} exceeds g={plan.g}")
            else:
                sizes[spec.group] += 1
        empty = [g for g, n in sizes.items() if n == 0]
        if empty:
            report.errors.append(f"groups {empty} have no parameters")
        populated = [n for n in sizes.values() if n > 0]
        if populated and max(populated) > 2 * min(populated):
            report.warnings.append(
                f"group sizes are imbalanced (smallest {min(populated)}, largest {max(populated)}): "
                + ", ".join(f"group {g}={n}" for g, n in sizes.items())
            )
    budgets = plan.budgets
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        report.warnings.append(f"evaluation budgets are not increasing with run: {budgets}")
    if strict and report.errors:
        raise PlanError(report.errors)
    return report
