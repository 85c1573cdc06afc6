"""Command-line front end: ``estimate``, ``bench``, ``verify`` and ``gen``.

Exit codes: 0 ok, 2 input error, 3 solver error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .bench import (
    TrialSpec,
    format_table,
    gen_instance,
    nmse,
    run_benchmark,
    write_aggregate_csv,
    write_trials_csv,
)
from .model import MeasurementOperator
from .solver import SolverConfig, reconstruct, sair_run
from .verify import CHECKS, run_checks

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4

_CFG = SolverConfig()
_SPEC = TrialSpec()


class InputError(Exception):
    pass


# -- file formats ---------------------------------------------------------------------------

def _num(v: float) -> str:
    return f"{float(v):.17g}"


def write_signal(path, x) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"])
        for v in np.asarray(x, dtype=complex):
            w.writerow([_num(v.real), _num(v.imag)])


def read_signal(path) -> np.ndarray:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    with fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["re", "im"]:
        raise InputError(f"{path}:1: expected header 're,im'")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise InputError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
        try:
            re, im = float(row[0]), float(row[1])
        except ValueError:
            raise InputError(f"{path}:{lineno}: not a number: {','.join(row)!r}") from None
        if not (np.isfinite(re) and np.isfinite(im)):
            raise InputError(f"{path}:{lineno}: non-finite value")
        out.append(complex(re, im))
    if not out:
        raise InputError(f"{path}: no samples")
    return np.array(out, dtype=complex)


def write_indices(path, indices) -> None:
    Path(path).write_text("".join(f"{int(i)}\n" for i in indices))


def read_indices(path) -> np.ndarray:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(int(line.strip()))
        except ValueError:
            raise InputError(f"{path}:{lineno}: not an integer: {line.strip()!r}") from None
    return np.array(out, dtype=int)


def _complex_list(z):
    return [{"re": float(v.real), "im": float(v.imag)} for v in np.asarray(z, dtype=complex)]


def read_truth(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
        return {
            "freqs": np.asarray(data["freqs"], dtype=float),
            "gains": np.array([complex(g["re"], g["im"]) for g in data["gains"]]),
            "n": int(data["n"]),
        }
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed truth file ({exc})") from exc


# -- commands -------------------------------------------------------------------------------

def _solver_config(args) -> SolverConfig:
    return SolverConfig(gamma=args.gamma, beta_shrink=args.beta_shrink, beta_floor_factor=args.beta_floor)


def _trial_spec(args, m=None) -> TrialSpec:
    return TrialSpec(n=args.n, K=args.k, m=args.m if m is None else m, min_sep=args.min_sep,
                     seed=args.seed, gain_model=args.gain_model)


def cmd_estimate(args) -> int:
    x_obs = read_signal(args.input)
    truth = read_truth(args.truth) if args.truth else None
    if args.indices:
        idx = read_indices(args.indices)
        if idx.size != x_obs.size:
            raise InputError(f"{args.indices}: {idx.size} indices for {x_obs.size} samples")
        n = args.n or (truth["n"] if truth else int(idx.max()) + 1)
        try:
            op = MeasurementOperator(n, idx)
        except ValueError as exc:
            raise InputError(f"{args.indices}: {exc}") from exc
    else:
        op = MeasurementOperator.complete(x_obs.size)

    try:
        est = sair_run(x_obs, op, _solver_config(args))
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    out = {
        "frequencies": est.freqs.tolist(),
        "gains": _complex_list(est.gains),
        "weights": est.weights.tolist(),
        "runtime_s": est.runtime,
        "objective_trace": [{"beta": b, "objective": L} for b, L in est.objective_trace],
    }
    if truth is not None:
        if truth["n"] != op.n:
            raise InputError(f"{args.truth}: n={truth['n']} but the signal has n={op.n}")
        out["nmse"] = nmse(est.reconstruction, reconstruct(truth["freqs"], truth["gains"], op.n))
    text = json.dumps(out, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    m_grid = args.m_grid if args.m_grid else [args.m]
    base = _trial_spec(args, m=max(m_grid))
    results = run_benchmark(m_grid, args.trials, base, _solver_config(args), jobs=args.jobs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trials_csv(results, out / "trials.csv")
    write_aggregate_csv(results, out / "aggregate.csv")
    print(format_table(results))
    return EXIT_OK


def cmd_verify(args) -> int:
    report = run_checks(only=args.only, seed=args.seed, fault=args.inject_fault)
    print(report.text())
    if report.passed:
        print("all checks passed")
        return EXIT_OK
    print(f"FAILED: {report.first_failure.name}")
    return EXIT_VERIFY


def cmd_gen(args) -> int:
    spec = _trial_spec(args)
    inst = gen_instance(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_signal(out / "signal.csv", inst.op.apply(inst.x))
    truth = {"n": spec.n, "freqs": inst.freqs.tolist(), "gains": _complex_list(inst.gains)}
    (out / "truth.json").write_text(json.dumps(truth, indent=2) + "\n")
    idx_path = out / "indices.txt"
    if inst.op.is_complete:
        idx_path.unlink(missing_ok=True)
    else:
        write_indices(idx_path, inst.op.indices)
    print(f"wrote instance to {out}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------------

def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _m_grid(s):
    try:
        return [_positive_int(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad m grid {s!r}") from None


def _add_solver(p):
    p.add_argument("--gamma", type=_positive_int, default=_CFG.gamma, help="grid oversampling factor")
    p.add_argument("--beta-shrink", type=float, default=_CFG.beta_shrink)
    p.add_argument("--beta-floor", type=float, default=_CFG.beta_floor_factor,
                   help="beta floor relative to the initial beta")


def _add_spec(p):
    p.add_argument("--n", type=_positive_int, default=_SPEC.n)
    p.add_argument("--k", type=_positive_int, default=_SPEC.K)
    p.add_argument("--m", type=_positive_int, default=_SPEC.m)
    p.add_argument("--min-sep", type=float, default=None, help="default 2/n")
    p.add_argument("--gain-model", choices=["unit-phase", "dynamic-range"], default=_SPEC.gain_model)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sair", description="Gridless line spectral estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate frequencies from a signal CSV")
    p.add_argument("input", help="CSV with header re,im")
    p.add_argument("--indices", help="sample indices, one per line (compressive case)")
    p.add_argument("--n", type=_positive_int, default=None, help="full signal length")
    p.add_argument("--truth", help="truth JSON; adds nmse to the output")
    p.add_argument("--output", "-o", help="output JSON path (default stdout)")
    p.add_argument("--format", choices=["json"], default="json")
    _add_solver(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bench", help="success rate versus m")
    _add_spec(p)
    _add_solver(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--m-grid", type=_m_grid, default=None, help="comma-separated, e.g. 24,32,40")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=["csv"], default="csv")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="run the oracle cross-checks")
    p.add_argument("--only", nargs="+", choices=list(CHECKS), default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", choices=list(CHECKS), default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen", help="write a seeded instance")
    _add_spec(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=["csv"], default="csv")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # invalid instance or solver settings
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
