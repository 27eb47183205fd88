"""Run the shipped four-configuration benchmark and write the comparison report.

    python3 scripts/run_benchmark.py --out results/benchmark --trials 5 --jobs 4
"""

from __future__ import annotations

import argparse
import os
import time
from dataclasses import replace
from pathlib import Path

from mrcalib.config import benchmark_config_path, load_config
from mrcalib.experiment import run_experiment
from mrcalib.report import emit_report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results/benchmark")
    parser.add_argument("--config", default=str(benchmark_config_path()))
    parser.add_argument("--trials", type=int)
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args(argv)

    config = load_config(args.config)
    if args.trials:
        config = replace(config, trials=args.trials)
    out = Path(args.out)
    start = time.perf_counter()
    reports, failures = run_experiment(config, out / "trials", jobs=args.jobs)
    bundle = emit_report(config, reports, out / "report", failures)
    print(f"{len(reports)} trials, {len(failures)} failures, {time.perf_counter() - start:.0f} s")

    names = bundle["configurations"]
    print(f"{'':14s}" + "".join(f"{n:>13s}" for n in names))
    for metric, row in bundle["metrics"].items():
        print(f"{metric:14s}" + "".join("            -" if row[n] is None else f"{row[n]:13.3f}" for n in names))
    for g in sorted(next(iter(bundle["nc_by_group"].values()))):
        print(f"NC group {g:<5d}" + "".join(f"{bundle['nc_by_group'][n][g]:13.2f}" for n in names))
    for i, c in enumerate(bundle["checkpoints"]):
        print(f"NSE @ {c:<8d}" + "".join(f"{bundle['nse_checkpoints'][n]['mean'][i]:13.3f}" for n in names))
    return 0 if not failures else 2


if __name__ == "__main__":
    raise SystemExit(main())
