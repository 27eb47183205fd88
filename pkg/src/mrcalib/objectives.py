"""Error metrics and the single-simulation evaluation wrapper.

Everything is minimized internally; NSE is carried as ``1 - NSE``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np


class EvaluationError(RuntimeError):
    """A model run failed or produced unusable output."""

    def __init__(self, message: str, assignment=None):
        super().__init__(message)
        self.assignment = None if assignment is None else np.asarray(assignment, dtype=float).tolist()


def nse(simulated, observed) -> float:
    """Nash-Sutcliffe efficiency of ``simulated`` against ``observed``."""
    sim = np.asarray(simulated, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if sim.shape != obs.shape or sim.ndim != 1:
        raise ValueError(f"series shapes differ or are not 1-D: {sim.shape} vs {obs.shape}")
    if sim.size < 2:
        raise ValueError("NSE needs at least two time steps")
    denom = float(np.sum((obs - obs.mean()) ** 2))
    if denom == 0.0:
        raise ValueError("NSE is undefined for an observed series with zero variance")
    return 1.0 - float(np.sum((sim - obs) ** 2)) / denom


def to_minimized(nse_value: float) -> float:
    return 1.0 - nse_value


def nse_error(simulated, observed) -> float:
    return to_minimized(nse(simulated, observed))


METRICS: dict[str, Callable] = {"NSE": nse_error}


@dataclass(frozen=True)
class ObjectiveRecord:
    values: tuple[float, ...]
    labels: tuple[str, ...]


def evaluate_candidate(
    model: Callable[[np.ndarray], np.ndarray],
    assignment,
    observed,
    metrics: Sequence[str] | Mapping[str, Callable] = ("NSE",),
    spinup: int = 0,
) -> ObjectiveRecord:
    """Run ``model`` once on a model-unit assignment and score the window after ``spinup``."""
    if isinstance(metrics, Mapping):
        named = dict(metrics)
    else:
        try:
            named = {m: METRICS[m] for m in metrics}
        except KeyError as exc:
            raise ValueError(f"unknown metric {exc.args[0]!r}; known: {sorted(METRICS)}") from None
    try:
        sim = np.asarray(model(np.asarray(assignment, dtype=float)), dtype=float)
    except EvaluationError:
        raise
    except Exception as exc:
        raise EvaluationError(f"model run failed: {exc}", assignment) from exc
    obs = np.asarray(observed, dtype=float)
    if sim.shape != obs.shape:
        raise EvaluationError(f"model produced {sim.shape} outputs for {obs.shape} observations", assignment)
    sim, obs = sim[spinup:], obs[spinup:]
    if not np.all(np.isfinite(sim)):
        raise EvaluationError("model produced non-finite output", assignment)
    values = tuple(float(fn(sim, obs)) for fn in named.values())
    if not all(np.isfinite(values)):
        raise EvaluationError(f"non-finite objective values {values}", assignment)
    return ObjectiveRecord(values, tuple(named))


def read_series_csv(path) -> np.ndarray:
    """Read the value column of a two-column ``index,value`` CSV with a header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: expected a header with an index and a value column")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values.append(float(row[1]))
            except (IndexError, ValueError):
                raise ValueError(f"{path}:{lineno}: cannot parse value from {row!r}") from None
    return np.array(values)


def write_series_csv(path, values, index_name: str = "day", value_name: str = "flow") -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([index_name, value_name])
        for i, v in enumerate(np.asarray(values, dtype=float)):
            writer.writerow([i, repr(float(v))])
