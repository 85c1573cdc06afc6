"""Success rate and runtime versus number of measurements m.

Writes trials.csv and aggregate.csv to --out-dir and prints the table.
"""

import argparse
import time
from pathlib import Path

from sair.bench import TrialSpec, format_table, run_benchmark, write_aggregate_csv, write_trials_csv
from sair.solver import SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m-grid", default="24,32,40,48,56,64")
    ap.add_argument("--trials", type=int, default=100, help="500 matches the original protocol")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir", default="results/m_sweep")
    args = ap.parse_args()

    m_grid = [int(m) for m in args.m_grid.split(",")]
    spec = TrialSpec(n=64, K=5, m=max(m_grid), seed=args.seed)
    t0 = time.perf_counter()
    results = run_benchmark(m_grid, args.trials, spec, SolverConfig(), jobs=args.jobs)
    elapsed = time.perf_counter() - t0

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trials_csv(results, out / "trials.csv")
    write_aggregate_csv(results, out / "aggregate.csv")
    print(format_table(results))
    print(f"wall time {elapsed:.1f}s")


if __name__ == "__main__":
    main()
