"""Trial execution and persistence.

Layout of an experiment directory::

    resolved_config.json
    <configuration>/trial_NN.json             # archive, boxplots, NC/HB, checkpoints
    <configuration>/trial_NN_evolution.csv    # best NSE after every evaluation
    <configuration>/trial_NN.failed.json      # only when the trial failed
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from mrcalib.config import ExperimentConfig, Problem, build_problem, parse_config, resolve_configuration
from mrcalib.framework import run_calibration
from mrcalib.stats import BoxplotStats, assess_archive

log = logging.getLogger(__name__)

_SEED_MASK = (1 << 63) - 1


def derive_seed(base_seed: int, configuration: str, trial: int) -> int:
    """``base_seed`` XOR a stable hash of (configuration name, trial index)."""
    digest = hashlib.sha256(f"{configuration}:{trial}".encode()).digest()
    return (int(base_seed) ^ int.from_bytes(digest[:8], "big")) & _SEED_MASK


def checkpoint_evaluations(config: ExperimentConfig) -> list[int]:
    """Evaluation counts at which NSE is tabulated: after runs 3 and 4 (when present) and at the end."""
    cumulative = config.plan.cumulative_budgets()
    points = [cumulative[r] for r in (2, 3) if r < len(cumulative) - 1]
    return points + [cumulative[-1]]


@dataclass
class TrialReport:
    config_name: str
    trial: int
    seed: int
    names: list[str]
    groups: list[int]
    evolution: np.ndarray  # best NSE after each evaluation
    archive: np.ndarray  # (n_best, n_params) search-scale assignments
    archive_nse: list[float]
    boxes: list[BoxplotStats]
    not_converged: list[bool]
    hit_boundary: list[bool]
    checkpoints: dict[int, float]
    fixed: dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def nc(self) -> int:
        return int(sum(self.not_converged))

    @property
    def hb(self) -> int:
        return int(sum(self.hit_boundary))

    @property
    def final_nse(self) -> float:
        return float(self.evolution[-1])

    def to_json(self) -> dict:
        return {
            "config_name": self.config_name,
            "trial": self.trial,
            "seed": self.seed,
            "names": self.names,
            "groups": self.groups,
            "fixed": self.fixed,
            "final_nse": self.final_nse,
            "checkpoints": {str(k): v for k, v in self.checkpoints.items()},
            "nc": self.nc,
            "hb": self.hb,
            "archive": {"nse": self.archive_nse, "assignments": self.archive.tolist()},
            "boxplots": [
                {
                    "name": n, "q1": b.q1, "median": b.median, "q3": b.q3, "iqr": b.iqr,
                    "lower_whisker": b.lower_whisker, "upper_whisker": b.upper_whisker,
                    "not_converged": nc, "hit_boundary": hb,
                }
                for n, b, nc, hb in zip(self.names, self.boxes, self.not_converged, self.hit_boundary)
            ],
            "wall_time_seconds": self.wall_time,
        }

    @classmethod
    def from_json(cls, data: dict, evolution: np.ndarray) -> "TrialReport":
        boxes = [BoxplotStats(b["q1"], b["median"], b["q3"], b["iqr"], b["lower_whisker"], b["upper_whisker"])
                 for b in data["boxplots"]]
        return cls(
            config_name=data["config_name"], trial=data["trial"], seed=data["seed"], names=data["names"],
            groups=data["groups"], evolution=evolution, archive=np.array(data["archive"]["assignments"]),
            archive_nse=data["archive"]["nse"], boxes=boxes,
            not_converged=[b["not_converged"] for b in data["boxplots"]],
            hit_boundary=[b["hit_boundary"] for b in data["boxplots"]],
            checkpoints={int(k): v for k, v in data["checkpoints"].items()},
            fixed=data.get("fixed", {}), wall_time=data.get("wall_time_seconds", 0.0),
        )


@dataclass
class TrialFailure:
    config_name: str
    trial: int
    seed: int
    error: str
    assignment: list[float] | None = None


def _trial_stem(trial: int) -> str:
    return f"trial_{trial:02d}"


def write_evolution_csv(path, evolution) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["evaluation", "best_nse"])
        for i, v in enumerate(evolution, start=1):
            writer.writerow([i, repr(float(v))])


def read_evolution_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([float(r[1]) for r in rows])


def make_evaluator(problem: Problem, space, fixed: dict[str, float]) -> Callable:
    """Objective over ``space``'s parameters, with ``fixed`` ones pinned, in the model's full vector order."""
    full_names = problem.space.names
    positions = np.array([full_names.index(n) for n in space.names])
    template = np.full(len(full_names), np.nan)
    for name, value in fixed.items():
        template[full_names.index(name)] = value

    def evaluate(assignment):
        x = template.copy()
        x[positions] = assignment
        return problem.objective(x).values

    return evaluate


def run_trial(config: ExperimentConfig, configuration_name: str, trial: int, evaluator_wrapper: Callable | None = None) -> TrialReport:
    configuration = config.configuration(configuration_name)
    problem = build_problem(config)
    space, plan, fixed = resolve_configuration(config, configuration, problem)
    evaluator = make_evaluator(problem, space, fixed)
    if evaluator_wrapper is not None:
        evaluator = evaluator_wrapper(evaluator, configuration_name, trial)
    seed = derive_seed(config.base_seed, configuration_name, trial)
    start = time.perf_counter()
    result = run_calibration(evaluator, space, plan, config.pop_size, config.reinit_fraction, seed,
                             archive_size=config.archive_size)
    elapsed = time.perf_counter() - start
    archive = result.archive.assignments()
    verdicts = assess_archive(archive, space.bounds())
    evolution = 1.0 - result.evolution
    return TrialReport(
        config_name=configuration_name,
        trial=trial,
        seed=seed,
        names=space.names,
        groups=[int(g) for g in space.groups],
        evolution=evolution,
        archive=archive,
        archive_nse=[1.0 - m.primary for m in result.archive.members],
        boxes=[v.box for v in verdicts],
        not_converged=[not v.converged for v in verdicts],
        hit_boundary=[v.hit_boundary for v in verdicts],
        checkpoints={n: float(evolution[n - 1]) for n in checkpoint_evaluations(config) if n <= evolution.size},
        fixed=fixed,
        wall_time=elapsed,
    )


def persist_trial(report: TrialReport, out_dir) -> None:
    folder = Path(out_dir) / report.config_name
    folder.mkdir(parents=True, exist_ok=True)
    stem = _trial_stem(report.trial)
    (folder / f"{stem}.json").write_text(json.dumps(report.to_json(), indent=1) + "\n")
    write_evolution_csv(folder / f"{stem}_evolution.csv", report.evolution)


def _task(config_json: dict, name: str, trial: int, out_dir: str | None, evaluator_wrapper=None):
    config = parse_config(config_json)
    seed = derive_seed(config.base_seed, name, trial)
    try:
        report = run_trial(config, name, trial, evaluator_wrapper)
    except Exception as exc:  # isolate per-trial failures
        failure = TrialFailure(name, trial, seed, f"{type(exc).__name__}: {exc}", getattr(exc, "assignment", None))
        log.error("trial %s/%d failed: %s", name, trial, failure.error)
        if out_dir is not None:
            folder = Path(out_dir) / name
            folder.mkdir(parents=True, exist_ok=True)
            payload = dict(failure.__dict__, traceback=traceback.format_exc())
            (folder / f"{_trial_stem(trial)}.failed.json").write_text(json.dumps(payload, indent=1) + "\n")
        return failure
    if out_dir is not None:
        persist_trial(report, out_dir)
    return report


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1, evaluator_wrapper: Callable | None = None):
    """Run every configuration x trial; returns ``(reports, failures)``.

    Failed trials are recorded and skipped. ``evaluator_wrapper(evaluator,
    configuration_name, trial)`` can decorate each trial's evaluator.
    """
    config_json = config.to_json()
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        config.dump(Path(out_dir) / "resolved_config.json")
    tasks = [(c.name, t) for c in config.configurations for t in range(config.trials)]
    out = None if out_dir is None else str(out_dir)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_task, config_json, n, t, out, evaluator_wrapper) for n, t in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_task(config_json, n, t, out, evaluator_wrapper) for n, t in tasks]
    reports = [r for r in results if isinstance(r, TrialReport)]
    failures = [r for r in results if isinstance(r, TrialFailure)]
    return reports, failures


def load_experiment(in_dir) -> tuple[ExperimentConfig, list[TrialReport], list[dict]]:
    root = Path(in_dir)
    config = parse_config(json.loads((root / "resolved_config.json").read_text()), root)
    reports, failures = [], []
    for c in config.configurations:
        folder = root / c.name
        for t in range(config.trials):
            stem = _trial_stem(t)
            path = folder / f"{stem}.json"
            if path.exists():
                evolution = read_evolution_csv(folder / f"{stem}_evolution.csv")
                reports.append(TrialReport.from_json(json.loads(path.read_text()), evolution))
            elif (folder / f"{stem}.failed.json").exists():
                failures.append(json.loads((folder / f"{stem}.failed.json").read_text()))
    return config, reports, failures
