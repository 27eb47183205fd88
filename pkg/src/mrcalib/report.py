"""Comparison tables across configurations: convergence metrics, NSE checkpoints, significance tests."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from mrcalib.config import ExperimentConfig
from mrcalib.experiment import TrialReport, checkpoint_evaluations
from mrcalib.params import Scale
from mrcalib.stats import anova_one_way, rosare, t_test_one_sample, welch_t_test

ALPHA = 0.05


class ReportError(ValueError):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else repr(v)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _by_config(reports: Sequence[TrialReport]) -> dict[str, list[TrialReport]]:
    out = defaultdict(list)
    for r in sorted(reports, key=lambda r: (r.config_name, r.trial)):
        out[r.config_name].append(r)
    return out


def _model_estimate(spec, median: float) -> float:
    return 10.0 ** median if spec.scale is Scale.LOG10 else median


def trial_rosare(config: ExperimentConfig, new: TrialReport, trad: TrialReport) -> float:
    """RosARE of one framework trial against one baseline trial, over truth-bearing parameters."""
    new_idx = {n: i for i, n in enumerate(new.names)}
    trad_idx = {n: i for i, n in enumerate(trad.names)}
    names = [s.name for s in config.space if s.truth is not None and s.name in new_idx and s.name in trad_idx]
    specs = [config.space[n] for n in names]
    nb = [new.boxes[new_idx[n]] for n in names]
    tb = [trad.boxes[trad_idx[n]] for n in names]
    ne = [_model_estimate(s, b.median) for s, b in zip(specs, nb)]
    te = [_model_estimate(s, b.median) for s, b in zip(specs, tb)]
    return rosare(nb, tb, [s.bounds for s in specs], ne, te, [s.truth for s in specs])


def _nanmean(values) -> float | None:
    finite = [v for v in values if not math.isnan(v)]
    return float(np.mean(finite)) if finite else None


def _test_json(result) -> dict:
    return {"statistic": result.statistic, "p_value": result.p_value, "df": list(result.df),
            "significant": bool(result.p_value < ALPHA)}


def emit_report(config: ExperimentConfig, reports: Sequence[TrialReport], out_dir=None, failures: Sequence = ()) -> dict:
    """Build (and, with ``out_dir``, write) the comparison tables.

    Returns a dict with ``metrics`` (mean NC/HB/RosARE per configuration),
    ``nc_by_group`` (mean NC per group), ``nse_checkpoints`` (NSE at checkpoints),
    ``rosare`` (per-trial values) and ``statistics``.
    """
    groups = _by_config(reports)
    names = [c.name for c in config.configurations if c.name in groups]
    missing = [c.name for c in config.configurations if c.name not in groups]
    if missing:
        raise ReportError(f"no completed trials for configurations {missing}")
    baseline = config.baseline
    if baseline is not None and baseline not in groups:
        raise ReportError(f"baseline configuration {baseline!r} has no reports")
    framework = [n for n in names if n != baseline]

    # per-trial RosARE, pairing trials by index
    ros: dict[str, dict[int, float]] = {n: {} for n in framework}
    if baseline is not None:
        trad_by_trial = {r.trial: r for r in groups[baseline]}
        for n in framework:
            for r in groups[n]:
                if r.trial in trad_by_trial:
                    try:
                        ros[n][r.trial] = trial_rosare(config, r, trad_by_trial[r.trial])
                    except ValueError:
                        ros[n][r.trial] = float("nan")

    metrics = {
        "NC": {n: float(np.mean([r.nc for r in groups[n]])) for n in names},
        "HB": {n: float(np.mean([r.hb for r in groups[n]])) for n in names},
        "RosARE": {n: _nanmean(list(ros[n].values())) if n in ros else None for n in names},
    }

    # NC by group; the baseline has a single group, so it is broken down by the first framework grouping
    reference = groups[framework[0]][0] if framework else None
    ref_group = dict(zip(reference.names, reference.groups)) if reference else {}
    n_groups = max(ref_group.values()) if ref_group else 1
    nc_by_group: dict[str, dict[int, float]] = {}
    for n in names:
        per_group = np.zeros(n_groups)
        for r in groups[n]:
            lookup = ref_group if n == baseline else dict(zip(r.names, r.groups))
            for name, flag in zip(r.names, r.not_converged):
                if flag and name in lookup:
                    per_group[lookup[name] - 1] += 1
        nc_by_group[n] = {g + 1: float(per_group[g] / len(groups[n])) for g in range(n_groups)}

    checkpoints = checkpoint_evaluations(config)
    nse_checkpoints = {n: {"trials": {r.trial: [r.checkpoints.get(c) for c in checkpoints] for r in groups[n]},
                  "mean": [float(np.mean([r.checkpoints[c] for r in groups[n] if c in r.checkpoints])) for c in checkpoints]}
              for n in names}

    statistics: dict = {"alpha": ALPHA, "anova": {}, "welch_vs_baseline": {}, "rosare_t_test": {},
                        "note": "one-way ANOVA across all configurations; pairwise Welch t-tests against the baseline"}
    for metric in ("NC", "HB"):
        samples = [[getattr(r, metric.lower()) for r in groups[n]] for n in names]
        try:
            statistics["anova"][metric] = _test_json(anova_one_way(samples))
        except ValueError as exc:
            statistics["anova"][metric] = {"error": str(exc)}
        if baseline is not None:
            base = [getattr(r, metric.lower()) for r in groups[baseline]]
            for n in framework:
                key = f"{metric}:{n}"
                try:
                    statistics["welch_vs_baseline"][key] = _test_json(welch_t_test([getattr(r, metric.lower()) for r in groups[n]], base))
                except ValueError as exc:
                    statistics["welch_vs_baseline"][key] = {"error": str(exc)}
    for n in framework:
        values = [v for v in ros[n].values() if not math.isnan(v)]
        try:
            res = t_test_one_sample(values, 0.5)
            statistics["rosare_t_test"][n] = dict(_test_json(res), mean=float(np.mean(values)))
        except ValueError as exc:
            statistics["rosare_t_test"][n] = {"error": str(exc), "values": values}
    statistics["failures"] = [f if isinstance(f, dict) else dict(f.__dict__) for f in failures]

    bundle = {"configurations": names, "baseline": baseline, "checkpoints": checkpoints, "metrics": metrics,
              "nc_by_group": nc_by_group, "nse_checkpoints": nse_checkpoints, "rosare": ros, "statistics": statistics}
    if out_dir is not None:
        _write_bundle(Path(out_dir), groups, names, bundle)
    return bundle


def _write_bundle(out: Path, groups, names, bundle) -> None:
    out.mkdir(parents=True, exist_ok=True)
    mt = bundle["metrics"]
    _write_csv(out / "metrics.csv", ["metric"] + names,
               [[m] + [mt[m][n] for n in names] for m in ("NC", "HB", "RosARE")])
    ng = bundle["nc_by_group"]
    n_groups = len(next(iter(ng.values())))
    _write_csv(out / "nc_by_group.csv", ["group"] + names,
               [[g] + [ng[n][g] for n in names] for g in range(1, n_groups + 1)])
    cps = bundle["checkpoints"]
    rows = []
    for n in names:
        for trial, values in sorted(bundle["nse_checkpoints"][n]["trials"].items()):
            rows.append([n, str(trial)] + values)
        rows.append([n, "mean"] + bundle["nse_checkpoints"][n]["mean"])
    _write_csv(out / "nse_checkpoints.csv", ["configuration", "trial"] + [f"nse_at_{c}" for c in cps], rows)

    per_trial = []
    for n in names:
        ros = bundle["rosare"].get(n, {})
        for r in groups[n]:
            per_trial.append([n, r.trial, r.seed, r.nc, r.hb, r.final_nse, ros.get(r.trial)])
    _write_csv(out / "trial_metrics.csv", ["configuration", "trial", "seed", "nc", "hb", "final_nse", "rosare"], per_trial)

    box_rows = []
    for n in names:
        for r in groups[n]:
            for name, grp, b, nc, hb in zip(r.names, r.groups, r.boxes, r.not_converged, r.hit_boundary):
                box_rows.append([n, r.trial, name, grp, b.q1, b.median, b.q3, b.iqr, b.lower_whisker, b.upper_whisker, nc, hb])
    _write_csv(out / "boxplots.csv", ["configuration", "trial", "parameter", "group", "q1", "median", "q3", "iqr",
                                      "lower_whisker", "upper_whisker", "not_converged", "hit_boundary"], box_rows)

    for n in names:
        trials = groups[n]
        length = max(r.evolution.size for r in trials)
        cols = [np.pad(r.evolution, (0, length - r.evolution.size), constant_values=np.nan) for r in trials]
        _write_csv(out / f"evolution_{n}.csv", ["evaluation"] + [f"trial_{r.trial:02d}" for r in trials],
                   [[i + 1] + [c[i] for c in cols] for i in range(length)])

    (out / "statistics.json").write_text(json.dumps(bundle["statistics"], indent=2, default=float) + "\n")
