"""Experiment configuration files and the calibration problems they describe.

A config is JSON. Every optional field has a default, and
:meth:`ExperimentConfig.to_json` writes the fully resolved form, which loads
back to an equal config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from mrcalib import sensitivity as sens
from mrcalib.objectives import read_series_csv
from mrcalib.params import ParameterSpace
from mrcalib.plan import PlanError, RunPlan, default_plan, traditional_plan, validate_plan
from mrcalib.synthetic import (
    DAYS_PER_YEAR,
    Forcing,
    InitialModelObjective,
    expand_homogenized,
    homogenized_space,
    initial_space,
    make_truth,
    parameter_names,
    WatershedTruth,
)

GROUPING_KINDS = ("region", "ranked", "manual", "file", "traditional")


class ConfigError(ValueError):
    """The config file cannot be parsed or is semantically invalid."""


@dataclass(frozen=True)
class SyntheticModel:
    cells: int
    seed: int
    days: int = 3 * DAYS_PER_YEAR
    spinup: int = DAYS_PER_YEAR

    def to_json(self) -> dict:
        return {"kind": "synthetic", "cells": self.cells, "seed": self.seed, "days": self.days, "spinup": self.spinup}


@dataclass(frozen=True)
class ExternalModel:
    """A directory written by ``make-truth``: ``truth.json``, ``forcing.csv``, ``observed.csv``."""

    path: str
    spinup: int = DAYS_PER_YEAR

    def to_json(self) -> dict:
        return {"kind": "external", "path": self.path, "spinup": self.spinup}


@dataclass(frozen=True)
class Configuration:
    name: str
    grouping: str
    order: str | None = None
    seed: int = 0
    groups: tuple[tuple[str, int], ...] | None = None
    path: str | None = None

    @property
    def traditional(self) -> bool:
        return self.grouping == "traditional"

    def to_json(self) -> dict:
        g: dict = {"kind": self.grouping}
        if self.grouping == "region":
            g.update(order=self.order, seed=self.seed)
        elif self.grouping == "manual":
            g["groups"] = dict(self.groups or ())
        elif self.grouping == "file":
            g["path"] = self.path
        return {"name": self.name, "grouping": g}


@dataclass(frozen=True)
class Screening:
    max_runs: int = 128
    threshold: float = 0.01

    def to_json(self) -> dict:
        return {"max_runs": self.max_runs, "threshold": self.threshold}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: SyntheticModel | ExternalModel
    space: ParameterSpace
    plan: RunPlan
    configurations: tuple[Configuration, ...]
    trials: int = 10
    pop_size: int = 50
    reinit_fraction: float = 0.2
    base_seed: int = 0
    archive_size: int = 20
    baseline: str | None = "Traditional"
    screening: Screening = field(default_factory=Screening)

    def configuration(self, name: str) -> Configuration:
        for c in self.configurations:
            if c.name == name:
                return c
        raise KeyError(f"no configuration named {name!r}")

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "model": self.model.to_json(),
            "plan": self.plan.to_json(),
            "space": self.space.to_json(),
            "configurations": [c.to_json() for c in self.configurations],
            "trials": self.trials,
            "pop_size": self.pop_size,
            "reinit_fraction": self.reinit_fraction,
            "base_seed": self.base_seed,
            "archive_size": self.archive_size,
            "baseline": self.baseline,
            "screening": self.screening.to_json(),
        }

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


# --- problems ----------------------------------------------------------------


@dataclass
class Problem:
    """Everything a trial needs: parameter space with truths, objective, cell regions."""

    space: ParameterSpace
    objective: InitialModelObjective
    regions: tuple[str, ...]
    truth: WatershedTruth | None = None


@lru_cache(maxsize=8)
def _synthetic_truth(cells: int, seed: int, days: int) -> WatershedTruth:
    return make_truth(cells, seed, days)


def read_forcing_csv(path) -> Forcing:
    import csv

    precip, pet = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            precip.append(float(row["precip"]))
            pet.append(float(row["pet"]))
    return Forcing(np.array(precip), np.array(pet))


def load_truth_dir(path) -> tuple[WatershedTruth | None, tuple[str, ...], Forcing, np.ndarray]:
    root = Path(path)
    meta = json.loads((root / "truth.json").read_text())
    forcing = read_forcing_csv(root / "forcing.csv")
    observed = read_series_csv(root / "observed.csv")
    regions = tuple(meta["regions"])
    truth = None
    if all(k in meta for k in ("C", "f", "w", "k")):
        truth = WatershedTruth(
            *(np.array(meta[k], dtype=float) for k in ("C", "f", "w", "k")),
            regions=regions, forcing=forcing, observed=observed, b=meta.get("b", 0.4), seed=meta.get("seed"),
        )
    return truth, regions, forcing, observed


def model_problem(model: SyntheticModel | ExternalModel) -> Problem:
    if isinstance(model, SyntheticModel):
        truth = _synthetic_truth(model.cells, model.seed, model.days)
        forcing, observed, regions = truth.forcing, truth.observed, truth.regions
    else:
        truth, regions, forcing, observed = load_truth_dir(model.path)
    objective = InitialModelObjective(forcing, regions, observed, model.spinup)
    return Problem(initial_space(len(regions), truth), objective, tuple(regions), truth)


def build_problem(config: ExperimentConfig) -> Problem:
    problem = model_problem(config.model)
    problem.space = config.space
    return problem


def screen_homogenized(problem: Problem, max_runs: int = 128) -> sens.ScreeningResult:
    """Factorial screen of the one-parameter-set-for-all-cells version of the model.

    Factor levels sit at the quarter and three-quarter points of each
    parameter's search-scale range.
    """
    hspace = homogenized_space()
    lows = [b.lo + 0.25 * b.width for b in hspace.bounds()]
    highs = [b.lo + 0.75 * b.width for b in hspace.bounds()]
    n = len(problem.regions)

    def response(levels):
        return problem.objective(expand_homogenized(hspace.to_model(levels), n)).values[0]

    return sens.screen(response, hspace.names, lows, highs, max_runs)


def resolve_configuration(config: ExperimentConfig, configuration: Configuration, problem: Problem):
    """Space, plan and fixed parameters (name -> model value) for one configuration."""
    space = config.space
    plan = config.plan
    if configuration.traditional:
        return space.single_group(), traditional_plan(plan.total_budget, plan.w), {}
    if configuration.grouping == "file":
        data = json.loads(Path(configuration.path).read_text())
        groups, fixed = data["groups"], data.get("fixed", {})
    else:
        overrides = {}
        if configuration.grouping == "region":
            overrides = sens.region_overrides(problem.regions, configuration.order, configuration.seed)
        elif configuration.grouping == "manual":
            overrides = dict(configuration.groups)
        overrides = {k: v for k, v in overrides.items() if k in set(space.names)}
        if set(overrides) == set(space.names):
            groups, fixed_names = overrides, set()
        else:
            screening = screen_homogenized(problem, config.screening.max_runs)
            effects = sens.expand_homogenized_effects(screening.effect_map(), space.names)
            _, assignment, fixed_names = sens.rank_and_group(effects, plan.g, config.screening.threshold, overrides)
            groups = dict(assignment.groups)
        fixed = {}
        for name in fixed_names:
            fixed[name] = midpoint_model(space, name)
    kept = [s for s in space if s.name not in fixed]
    sub = ParameterSpace(tuple(kept), plan.g).with_groups({k: v for k, v in groups.items() if k not in fixed}, plan.g)
    return sub, plan, fixed


def midpoint_model(space: ParameterSpace, name: str) -> float:
    spec = space[name]
    b = spec.bounds
    mid = 0.5 * (b.lo + b.hi)
    return 10.0 ** mid if spec.scale.value == "log10" else mid


# --- loading -----------------------------------------------------------------


def _parse_model(data: Mapping, base: Path) -> SyntheticModel | ExternalModel:
    kind = data.get("kind", "synthetic")
    if kind == "synthetic":
        model = SyntheticModel(int(data["cells"]), int(data.get("seed", 0)), int(data.get("days", 3 * DAYS_PER_YEAR)),
                               int(data.get("spinup", DAYS_PER_YEAR)))
        if model.cells < 3:
            raise ConfigError("model.cells: need at least 3 cells")
        if model.days < 2 * DAYS_PER_YEAR or not 0 <= model.spinup < model.days - 1:
            raise ConfigError("model.days/spinup: need at least two years with a scored window after spin-up")
        return model
    if kind == "external":
        path = Path(data["path"])
        if not path.is_absolute():
            path = (base / path).resolve()
        for name in ("truth.json", "forcing.csv", "observed.csv"):
            if not (path / name).exists():
                raise ConfigError(f"model.path: {path / name} does not exist")
        return ExternalModel(str(path), int(data.get("spinup", DAYS_PER_YEAR)))
    raise ConfigError(f"model.kind: unknown model kind {kind!r}")


def _parse_configuration(data: Mapping, base: Path) -> Configuration:
    name = str(data["name"])
    g = data.get("grouping", {"kind": "ranked"})
    if isinstance(g, str):
        g = {"kind": g}
    kind = g.get("kind")
    if kind not in GROUPING_KINDS:
        raise ConfigError(f"configurations[{name}].grouping.kind: unknown kind {kind!r}; use one of {GROUPING_KINDS}")
    if kind == "region":
        order = str(g.get("order", "")).lower()
        if order not in ("du", "ud", "rand"):
            raise ConfigError(f"configurations[{name}].grouping.order: use 'du', 'ud' or 'rand'")
        return Configuration(name, kind, order, int(g.get("seed", 0)))
    if kind == "manual":
        groups = g.get("groups")
        if not isinstance(groups, Mapping):
            raise ConfigError(f"configurations[{name}].grouping.groups: expected a name -> group mapping")
        return Configuration(name, kind, groups=tuple(sorted((str(k), int(v)) for k, v in groups.items())))
    if kind == "file":
        path = Path(g["path"])
        if not path.is_absolute():
            path = (base / path).resolve()
        if not path.exists():
            raise ConfigError(f"configurations[{name}].grouping.path: {path} does not exist")
        return Configuration(name, kind, path=str(path))
    return Configuration(name, kind)


def _parse_plan(data) -> RunPlan:
    if data in (None, "default"):
        return default_plan()
    if isinstance(data, Mapping) and "scale_to" in data:
        base = _parse_plan(data.get("base", "default"))
        return base.scaled(int(data["scale_to"]))
    return RunPlan.from_json(data)


def parse_config(data: Mapping, base_dir=".") -> ExperimentConfig:
    base = Path(base_dir)
    known = {"name", "model", "plan", "space", "configurations", "trials", "pop_size", "reinit_fraction",
             "base_seed", "archive_size", "baseline", "screening"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        model = _parse_model(data["model"], base)
    except KeyError as exc:
        raise ConfigError(f"model: missing field {exc.args[0]!r}") from None
    try:
        plan = _parse_plan(data.get("plan"))
        validate_plan(plan)
    except PlanError as exc:
        raise ConfigError(f"plan: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"plan: {exc}") from None

    if "space" in data:
        try:
            space = ParameterSpace.from_json(data["space"], plan.g)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"space: {exc}") from None
    else:
        problem = model_problem(model)
        space = ParameterSpace(problem.space.specs, plan.g)
    n_cells = model.cells if isinstance(model, SyntheticModel) else len(json.loads((Path(model.path) / "truth.json").read_text())["regions"])
    expected = parameter_names(n_cells)
    if space.names != expected:
        raise ConfigError(f"space: parameter names must be the model's {len(expected)} parameters in model order")

    raw_confs = data.get("configurations") or [
        {"name": "RankedDU", "grouping": {"kind": "region", "order": "du"}},
        {"name": "Traditional", "grouping": {"kind": "traditional"}},
    ]
    try:
        configurations = tuple(_parse_configuration(c, base) for c in raw_confs)
    except KeyError as exc:
        raise ConfigError(f"configurations: missing field {exc.args[0]!r}") from None
    names = [c.name for c in configurations]
    if len(set(names)) != len(names):
        raise ConfigError(f"configurations: duplicate names in {names}")
    for c in configurations:
        if c.grouping == "manual":
            unknown_params = sorted(set(dict(c.groups)) - set(space.names))
            if unknown_params:
                raise ConfigError(f"configurations[{c.name}].grouping.groups: unknown parameters {unknown_params}")
            bad = {k: v for k, v in c.groups if not 1 <= v <= plan.g}
            if bad:
                raise ConfigError(f"configurations[{c.name}].grouping.groups: groups outside 1..{plan.g}: {bad}")

    baseline = data.get("baseline", "Traditional" if "Traditional" in names else None)
    if baseline is not None and baseline not in names:
        raise ConfigError(f"baseline: {baseline!r} is not one of the configurations {names}")

    cfg = ExperimentConfig(
        name=str(data.get("name", "experiment")),
        model=model,
        space=space,
        plan=plan,
        configurations=configurations,
        trials=int(data.get("trials", 10)),
        pop_size=int(data.get("pop_size", 50)),
        reinit_fraction=float(data.get("reinit_fraction", 0.2)),
        base_seed=int(data.get("base_seed", 0)),
        archive_size=int(data.get("archive_size", 20)),
        baseline=baseline,
        screening=Screening(**data.get("screening", {})),
    )
    if cfg.trials < 1:
        raise ConfigError("trials: must be >= 1")
    if cfg.pop_size < 2 or cfg.pop_size > plan.runs[0].budget:
        raise ConfigError(f"pop_size: must lie in [2, first run budget {plan.runs[0].budget}]")
    if not 0 <= cfg.reinit_fraction <= 1:
        raise ConfigError("reinit_fraction: must lie in [0, 1]")
    if cfg.archive_size < 4:
        raise ConfigError("archive_size: boxplots need at least 4 archived solutions")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data, path.parent)


def benchmark_config_path() -> Path:
    return Path(__file__).with_name("configs") / "benchmark.json"
