"""Command-line entry point.

Subcommands::

    make-truth  --cells N --seed S --out DIR [--days T]
    sensitivity --config FILE [--out DIR]
    calibrate   --config FILE --out DIR [--jobs J] [--trials K]
    report      --in DIR --out DIR

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from mrcalib.config import ConfigError, midpoint_model, build_problem, load_config, screen_homogenized
from mrcalib.objectives import write_series_csv
from mrcalib import sensitivity as sens
from mrcalib.synthetic import make_truth

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("mrcalib")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def write_truth_dir(truth, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "truth.json").write_text(json.dumps(truth.to_json(), indent=2) + "\n")
    write_series_csv(out / "observed.csv", truth.observed)
    with open(out / "forcing.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["day", "precip", "pet"])
        for i, (p, e) in enumerate(zip(truth.forcing.precip, truth.forcing.pet)):
            writer.writerow([i, repr(float(p)), repr(float(e))])


def cmd_make_truth(args) -> int:
    truth = make_truth(args.cells, args.seed, args.days)
    write_truth_dir(truth, Path(args.out))
    print(f"wrote truth for {args.cells} cells ({len(truth.observed)} days) to {args.out}")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    config = load_config(args.config)
    problem = build_problem(config)
    result = screen_homogenized(problem, config.screening.max_runs)
    out = Path(args.out or Path(args.config).with_suffix("").name + "_sensitivity")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "design.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run"] + [f"{f}_coded" for f in result.factors] + list(result.factors) + ["response"])
        for i, (row, levels, y) in enumerate(zip(result.design.rows, result.levels, result.responses)):
            writer.writerow([i] + [int(v) for v in row] + [repr(float(v)) for v in levels] + [repr(float(y))])
    effects = sens.expand_homogenized_effects(result.effect_map(), config.space.names)
    ranking, assignment, fixed = sens.rank_and_group(effects, config.plan.g, config.screening.threshold)
    with open(out / "effects.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["factor", "effect"])
        for name, e in result.effect_map().items():
            writer.writerow([name, repr(e)])
    with open(out / "ranking.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "parameter", "abs_effect", "group"])
        for rank, (name, mag) in enumerate(ranking.entries, start=1):
            writer.writerow([rank, name, repr(mag), assignment.groups.get(name, "fixed")])
    fixed_values = {n: midpoint_model(problem.space, n) for n in sorted(fixed)}
    payload = {
        "source": assignment.source.value,
        "generators": list(result.design.generators),
        "groups": dict(assignment.groups),
        "fixed": fixed_values,
    }
    (out / "groups.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"screened {len(result.factors)} factors in {result.design.n_runs} runs; wrote {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from dataclasses import replace

    from mrcalib.experiment import run_experiment

    config = load_config(args.config)
    if args.trials is not None:
        if args.trials < 1:
            raise UsageError("--trials must be >= 1")
        config = replace(config, trials=args.trials)
    reports, failures = run_experiment(config, args.out, jobs=args.jobs)
    print(f"{len(reports)} trials completed, {len(failures)} failed; results in {args.out}")
    for f in failures:
        print(f"  failed: {f.config_name} trial {f.trial}: {f.error}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_report(args) -> int:
    from mrcalib.experiment import load_experiment
    from mrcalib.report import emit_report

    config, reports, failures = load_experiment(args.in_dir)
    bundle = emit_report(config, reports, args.out, failures)
    names = bundle["configurations"]
    width = max(len(n) for n in names) + 2
    print("metric".ljust(8) + "".join(n.rjust(width) for n in names))
    for metric, row in bundle["metrics"].items():
        cells = ["-" if row[n] is None else f"{row[n]:.3f}" for n in names]
        print(metric.ljust(8) + "".join(c.rjust(width) for c in cells))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mrcalib", description="Multiresolution calibration experiments on a toy double-model watershed.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-truth", help="generate reference parameters, forcing and observed flow")
    p.add_argument("--cells", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--days", type=int, default=3 * 365)
    p.set_defaults(func=cmd_make_truth)

    p = sub.add_parser("sensitivity", help="factorial screening and proposed grouping")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("calibrate", help="run every configuration and trial of an experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--trials", type=int, help="override the config's trial count")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="comparison tables from a calibrate output directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
