"""Seeded noiseless instances, recovery metrics and the success-rate-vs-m experiment."""

from __future__ import annotations

import csv
import itertools
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import MeasurementOperator, wrap_distance
from .solver import SolverConfig, reconstruct, sair_run

SUCCESS_NMSE = 1e-4
MAX_REJECTIONS = 10**6

TRIAL_FIELDS = ["m", "trial", "seed", "success", "nmse", "runtime_s"]
AGGREGATE_FIELDS = ["m", "trials", "success_rate", "mean_runtime_s", "median_nmse"]


class InfeasibleSpecError(ValueError):
    pass


@dataclass(frozen=True)
class TrialSpec:
    n: int = 64
    K: int = 5
    m: int = 64
    min_sep: float | None = None          # None -> 2/n
    seed: int = 0
    gain_model: str = "unit-phase"        # or "dynamic-range"
    gain_range: tuple = (1.0, 10.0)       # magnitude bounds for dynamic-range

    def __post_init__(self):
        if self.n < 1 or self.K < 1:
            raise ValueError("n and K must be positive")
        if not 1 <= self.m <= self.n:
            raise ValueError("need 1 <= m <= n")
        if self.K * self.separation >= 1.0:
            raise InfeasibleSpecError(f"K * min_sep = {self.K * self.separation} >= 1")
        if self.gain_model not in ("unit-phase", "dynamic-range"):
            raise ValueError(f"unknown gain model {self.gain_model!r}")
        lo, hi = self.gain_range
        if self.gain_model == "dynamic-range" and not 0 < lo <= hi:
            raise ValueError("dynamic-range needs 0 < low <= high")

    @property
    def separation(self) -> float:
        return 2.0 / self.n if self.min_sep is None else float(self.min_sep)


class Instance(NamedTuple):
    x: np.ndarray
    freqs: np.ndarray
    gains: np.ndarray
    op: MeasurementOperator


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) % 2**64))


def min_wrap_separation(freqs) -> float:
    f = np.sort(np.asarray(freqs, dtype=float))
    if f.size < 2:
        return math.inf
    return float(np.min(wrap_distance(f, np.roll(f, -1))))


def gen_instance(spec: TrialSpec) -> Instance:
    rng = make_rng(spec.seed)
    sep = spec.separation
    for _ in range(MAX_REJECTIONS):
        freqs = rng.random(spec.K)
        if spec.K == 1 or min_wrap_separation(freqs) >= sep:
            break
    else:
        raise InfeasibleSpecError(f"no placement found after {MAX_REJECTIONS} draws")

    phases = np.exp(2j * np.pi * rng.random(spec.K))
    if spec.gain_model == "unit-phase":
        gains = phases
    else:
        lo, hi = spec.gain_range
        gains = np.exp(rng.uniform(np.log(lo), np.log(hi), spec.K)) * phases

    if spec.m == spec.n:
        op = MeasurementOperator.complete(spec.n)
    else:
        op = MeasurementOperator(spec.n, np.sort(rng.choice(spec.n, spec.m, replace=False)))
    return Instance(reconstruct(freqs, gains, spec.n), freqs, gains, op)


def nmse(x_hat, x) -> float:
    x_hat = np.asarray(x_hat, dtype=complex).reshape(-1)
    x = np.asarray(x, dtype=complex).reshape(-1)
    if x_hat.shape != x.shape:
        raise ValueError("signals differ in length")
    ref = float(np.vdot(x, x).real)
    if ref == 0.0:
        raise ValueError("reference signal is zero")
    err = x_hat - x
    return float(np.vdot(err, err).real) / ref


def is_success(nmse_value: float, threshold: float = SUCCESS_NMSE) -> bool:
    return bool(nmse_value <= threshold)


@dataclass
class FrequencyMatch:
    pairs: list                      # (est_index, true_index, wrap_error)
    unmatched_est: list
    unmatched_true: list

    @property
    def errors(self) -> np.ndarray:
        return np.array([e for _, _, e in self.pairs])


def match_frequencies(est_freqs, true_freqs) -> FrequencyMatch:
    """Optimal one-to-one pairing minimising total wrap-around error."""
    est = np.asarray(est_freqs, dtype=float).reshape(-1)
    tru = np.asarray(true_freqs, dtype=float).reshape(-1)
    cost = wrap_distance(est[:, None], tru[None, :])
    k = min(est.size, tru.size)
    if k == 0:
        pairs = []
    elif max(est.size, tru.size) <= 8:
        best, best_cost = None, math.inf
        if est.size <= tru.size:
            for cols in itertools.permutations(range(tru.size), k):
                c = sum(cost[i, j] for i, j in enumerate(cols))
                if c < best_cost:
                    best, best_cost = list(enumerate(cols)), c
        else:
            for rows in itertools.permutations(range(est.size), k):
                c = sum(cost[i, j] for j, i in enumerate(rows))
                if c < best_cost:
                    best, best_cost = [(i, j) for j, i in enumerate(rows)], c
        pairs = sorted(best)
    else:
        rows, cols = linear_sum_assignment(cost)
        pairs = list(zip(rows.tolist(), cols.tolist()))
    pairs = [(int(i), int(j), float(cost[i, j])) for i, j in pairs]
    used_e = {i for i, _, _ in pairs}
    used_t = {j for _, j, _ in pairs}
    return FrequencyMatch(
        pairs=pairs,
        unmatched_est=[i for i in range(est.size) if i not in used_e],
        unmatched_true=[j for j in range(tru.size) if j not in used_t],
    )


# -- Monte Carlo harness ---------------------------------------------------------------------

@dataclass
class TrialRecord:
    m: int
    trial: int
    seed: int
    success: bool
    nmse: float
    runtime_s: float
    error: str = ""


@dataclass
class BenchResult:
    m: int
    trials: int
    successes: int
    success_rate: float
    mean_runtime_s: float
    median_nmse: float
    records: list = field(default_factory=list)


def trial_seed(base_seed: int, m: int, trial: int) -> int:
    """64-bit seed derived from (base seed, m, trial index)."""
    words = np.random.SeedSequence([int(base_seed) % 2**64, int(m), int(trial)]).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


def run_trial(spec: TrialSpec, cfg: SolverConfig, trial: int = 0) -> TrialRecord:
    inst = gen_instance(spec)
    y = inst.op.apply(inst.x)
    t0 = time.perf_counter()
    try:
        est = sair_run(y, inst.op, cfg)
    except Exception as exc:  # recorded, not fatal
        return TrialRecord(spec.m, trial, spec.seed, False, math.nan,
                           time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    runtime = time.perf_counter() - t0
    value = nmse(est.reconstruction, inst.x)
    return TrialRecord(spec.m, trial, spec.seed, is_success(value), value, runtime)


def _run_job(args):
    return run_trial(*args)


def run_benchmark(m_grid, trials: int, base_spec: TrialSpec, cfg: SolverConfig | None = None,
                  jobs: int = 1) -> list[BenchResult]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = SolverConfig() if cfg is None else cfg
    work = [
        (replace(base_spec, m=int(m), seed=trial_seed(base_spec.seed, m, t)), cfg, t)
        for m in m_grid for t in range(trials)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_job, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        records = [_run_job(w) for w in work]

    results = []
    for i, m in enumerate(m_grid):
        recs = records[i * trials:(i + 1) * trials]
        succ = sum(r.success for r in recs)
        results.append(BenchResult(
            m=int(m), trials=trials, successes=succ, success_rate=succ / trials,
            mean_runtime_s=statistics.fmean(r.runtime_s for r in recs),
            median_nmse=float(np.median([r.nmse for r in recs])),
            records=recs,
        ))
    return results


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trials_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_FIELDS)
        for res in results:
            for r in res.records:
                w.writerow([r.m, r.trial, r.seed, int(r.success), _fmt(r.nmse), _fmt(r.runtime_s)])


def write_aggregate_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_FIELDS)
        for res in results:
            w.writerow([res.m, res.trials, _fmt(res.success_rate), _fmt(res.mean_runtime_s),
                        _fmt(res.median_nmse)])


def read_trials_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {"m": int(r["m"]), "trial": int(r["trial"]), "seed": int(r["seed"]),
         "success": bool(int(r["success"])), "nmse": float(r["nmse"]),
         "runtime_s": float(r["runtime_s"])}
        for r in rows
    ]


def read_aggregate_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {"m": int(r["m"]), "trials": int(r["trials"]), "success_rate": float(r["success_rate"]),
         "mean_runtime_s": float(r["mean_runtime_s"]), "median_nmse": float(r["median_nmse"])}
        for r in rows
    ]


def format_table(results) -> str:
    lines = [f"{'m':>4} {'trials':>6} {'success':>8} {'mean_s':>9} {'median_nmse':>12}"]
    for r in results:
        lines.append(f"{r.m:>4} {r.trials:>6} {r.success_rate:>8.3f} {r.mean_runtime_s:>9.4f} "
                     f"{r.median_nmse:>12.3e}")
    return "\n".join(lines)
