"""The run-by-run calibration driver: shifting focus groups, range shrinking, population carryover."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from mrcalib.objectives import EvaluationError
from mrcalib.optimizer import (
    Archive,
    Candidate,
    OptimizerSettings,
    Provenance,
    SearchDomain,
    evolve_run,
    initialize_population,
)
from mrcalib.params import Full, ParameterSpace, SearchRange, Shrunk, Discrete, shrink_range
from mrcalib.plan import RunPlan, mode_for, validate_plan

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    run: int
    budget: int
    ranges: list[SearchRange]
    modes: list[str]
    best_error: float


@dataclass
class CalibrationResult:
    population: list[Candidate]
    archive: Archive
    evolution: np.ndarray  # best-so-far primary objective after each evaluation
    runs: list[RunRecord] = field(default_factory=list)

    @property
    def best(self) -> Candidate:
        return self.archive.members[0]


def run_ranges(space: ParameterSpace, plan: RunPlan, run: int, population: Sequence[Candidate] | None) -> list[SearchRange]:
    """Search range of every parameter for ``run``.

    Full and discrete groups use the original bounds; shrunk groups are
    narrowed from the current population with the plan's multiplier.
    """
    ranges = []
    for i, spec in enumerate(space):
        mode = mode_for(plan, run, spec.group)
        if isinstance(mode, Shrunk):
            if not population:
                raise ValueError(f"run {run}: group {spec.group} is shrunk but there is no population to shrink from")
            ranges.append(shrink_range(spec, [c.assignment[i] for c in population], plan.w))
        else:
            ranges.append(spec.bounds)
    return ranges


def _candidate_json(c: Candidate) -> dict:
    return {
        "assignment": [float(v) for v in c.assignment],
        "objectives": None if c.objectives is None else list(c.objectives),
        "provenance": c.provenance.value,
    }


def _candidate_from_json(d: dict) -> Candidate:
    obj = d["objectives"]
    return Candidate(np.array(d["assignment"], dtype=float), None if obj is None else tuple(obj), Provenance(d["provenance"]))


def _rng_state_json(rng: np.random.Generator) -> dict:
    state = rng.bit_generator.state
    return json.loads(json.dumps(state, default=int))


def save_checkpoint(path, run: int, population, archive: Archive, evolution, runs: list[RunRecord], rng, plan: RunPlan) -> None:
    data = {
        "completed_runs": run,
        "plan": plan.to_json(),
        "population": [_candidate_json(c) for c in population],
        "archive": {"capacity": archive.capacity, "members": [_candidate_json(c) for c in archive.members]},
        "evolution": [float(v) for v in evolution],
        "runs": [
            {"run": r.run, "budget": r.budget, "ranges": [[x.lo, x.hi] for x in r.ranges], "modes": r.modes, "best_error": r.best_error}
            for r in runs
        ],
        "rng_state": _rng_state_json(rng),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data))
    os.replace(tmp, path)


def load_checkpoint(path, plan: RunPlan, rng: np.random.Generator):
    data = json.loads(Path(path).read_text())
    if data["plan"] != json.loads(json.dumps(plan.to_json())):
        raise ValueError(f"checkpoint {path} was written for a different run plan")
    rng.bit_generator.state = data["rng_state"]
    archive = Archive(data["archive"]["capacity"])
    for d in data["archive"]["members"]:
        c = _candidate_from_json(d)
        archive.add(c.assignment, c.objectives, c.provenance)
    runs = [
        RunRecord(r["run"], r["budget"], [SearchRange(lo, hi) for lo, hi in r["ranges"]], r["modes"], r["best_error"])
        for r in data["runs"]
    ]
    population = [_candidate_from_json(d) for d in data["population"]]
    return data["completed_runs"], population, archive, list(data["evolution"]), runs


def run_calibration(
    evaluator: Callable[[np.ndarray], Sequence[float]],
    space: ParameterSpace,
    plan: RunPlan,
    pop_size: int = 50,
    reinit_fraction: float = 0.2,
    seed: int = 0,
    settings: OptimizerSettings | None = None,
    archive_size: int = 20,
    checkpoint: str | os.PathLike | None = None,
    map_fn: Callable | None = None,
) -> CalibrationResult:
    """Calibrate ``space`` by executing every run of ``plan`` in sequence.

    ``evaluator`` receives model-unit assignments and returns the objective
    vector to minimize. When ``checkpoint`` is given, state is saved after
    every run and an existing checkpoint is resumed from.
    """
    validate_plan(plan, space)
    if plan.runs[0].budget < pop_size:
        raise ValueError(f"first run budget {plan.runs[0].budget} is smaller than the population size {pop_size}")
    rng = np.random.default_rng(seed)

    def search_evaluator(x):
        model_x = space.to_model(x)
        try:
            return evaluator(model_x)
        except EvaluationError as exc:
            if exc.assignment is None:
                exc.assignment = model_x.tolist()
            raise
        except Exception as exc:
            raise EvaluationError(f"evaluation failed: {exc}", model_x) from exc

    population: list[Candidate] = []
    archive = Archive(archive_size)
    evolution: list[float] = []
    runs: list[RunRecord] = []
    start = 1
    if checkpoint is not None and Path(checkpoint).exists():
        done, population, archive, evolution, runs = load_checkpoint(checkpoint, plan, rng)
        log.info("resuming from %s after run %d", checkpoint, done)
        start = done + 1

    best = evolution[-1] if evolution else np.inf
    for r in range(start, len(plan.runs) + 1):
        run_cfg = plan.runs[r - 1]
        ranges = run_ranges(space, plan, r, population)
        modes = [mode_for(plan, r, g) for g in range(1, plan.g + 1)]
        domain = SearchDomain.build(space, ranges, modes)
        population = initialize_population(domain, pop_size, rng, population or None, reinit_fraction)
        population, evaluations = evolve_run(search_evaluator, population, run_cfg.budget, domain, pop_size, rng, settings, map_fn)
        archive.extend(evaluations)
        for e in evaluations:
            best = min(best, e.objectives[0])
            evolution.append(best)
        runs.append(RunRecord(r, run_cfg.budget, ranges, [m.to_json() for m in modes], float(best)))
        log.debug("run %d: %d evaluations, best error %.6g", r, len(evaluations), best)
        if checkpoint is not None:
            save_checkpoint(checkpoint, r, population, archive, evolution, runs, rng, plan)
    return CalibrationResult(population, archive, np.array(evolution), runs)
