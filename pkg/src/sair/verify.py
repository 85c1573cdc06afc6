"""Cross-checks of the fast paths against the dense oracles.

Each check takes a generator and a trial count and returns a ``CheckResult``.
``run_checks`` drives them for the ``verify`` command; the acceptance tests
call the same functions with their full trial counts.
"""

from __future__ import annotations

import time

import numpy as np

from . import oracles
from .model import MeasurementOperator, grid_quadratics, steering_vector, wrap_distance
from .objective import objective, objective_gradient, optimal_weight
from .oracles import CheckResult, VerifyReport
from .solver import sair_run

# relative size of the perturbation applied by an injected fault
FAULT = 1e-3


def _fault(value, on: bool):
    return value * (1.0 + FAULT) + FAULT if on else value


def check_objective(rng, trials=1000, tol=1e-10, fault=False) -> CheckResult:
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(trials):
        st = oracles.random_state(rng)
        ref = oracles.dense_state_objective(st)
        worst = max(worst, abs(_fault(objective(st), fault) - ref) / abs(ref))
    dt = time.perf_counter() - t0
    return CheckResult("objective", worst <= tol,
                       f"worst rel err {worst:.3e} (tol {tol:g}) over {trials} states in {dt:.2f}s")


def check_dhat(rng, trials=1000, d_tol=1e-6, delta_tol=1e-8, fault=False) -> CheckResult:
    wd = wl = 0.0
    for _ in range(trials):
        st = oracles.random_state(rng, y_scale=(0.05, 1.0))
        f = float(rng.random())
        c = optimal_weight(f, st)
        d, val = oracles.numeric_dhat(f, st)
        wd = max(wd, abs(_fault(c.d_hat, fault) - d))
        wl = max(wl, abs(c.delta - val))
    ok = wd <= d_tol and wl <= delta_tol
    return CheckResult("dhat", ok, f"max |d diff| {wd:.3e}, max |dL diff| {wl:.3e} over {trials} pairs")


def check_gradient(rng, trials=100, tol=1e-5, step=1e-6, fault=False) -> CheckResult:
    worst, done = 0.0, 0
    while done < trials:
        st = oracles.random_state(rng, y_scale=(0.05, 1.0))
        if st.r == 0:
            continue
        ga = _fault(np.concatenate(objective_gradient(st)), fault)
        gn = np.concatenate(oracles.fd_gradient(st, step))
        worst = max(worst, float(np.linalg.norm(ga - gn) / max(np.linalg.norm(gn), 1e-300)))
        done += 1
    return CheckResult("gradient", worst <= tol, f"worst rel err {worst:.3e} over {trials} states")


def check_l1(rng, trials=100, n=16, beta=1e-8, rtol=1e-4, fault=False) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        norm1 = float(np.sum(np.abs(x)))
        val = _fault(oracles.l1_specialization_check(x, beta), fault)
        worst = max(worst, abs(val - norm1) / norm1)
    return CheckResult("l1", worst <= rtol, f"worst |L* - |x|_1| / |x|_1 = {worst:.3e} over {trials} vectors")


def random_psd(rng, n, rank):
    B = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    T = B @ B.conj().T
    return 0.5 * (T + T.conj().T), B


def check_lemma3(rng, trials=100, n=16, fault=False) -> CheckResult:
    correct = 0
    for i in range(trials):
        rank = 1 + i % (n - 1)
        T, B = random_psd(rng, n, rank)
        if rng.random() < 0.5:
            x = B @ (rng.standard_normal(rank) + 1j * rng.standard_normal(rank))
        else:
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        member = oracles.in_column_space(T, x)
        verdict = oracles.lemma3_limit_probe(T, x).verdict
        if fault:
            verdict = "diverging" if verdict == "converged" else "converged"
        correct += verdict == ("converged" if member else "diverging")
    return CheckResult("lemma3", correct == trials, f"{correct}/{trials} verdicts correct")


def check_single_atom(rng, trials=20, n=64, beta=1e-10, tol=1e-6, fault=False) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        s = complex(rng.standard_normal(), rng.standard_normal())
        val = _fault(oracles.single_atom_norm_check(s, float(rng.random()), n, beta), fault)
        worst = max(worst, abs(val - abs(s)) / abs(s))
    return CheckResult("single_atom", worst <= tol, f"worst rel err to |s| {worst:.3e} over {trials} draws")


def check_grid(rng, trials=20, gamma=8, tol=1e-9, fault=False) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        st = oracles.random_state(rng, beta_range=(1e-3, 1.0))
        _, qf, sf = grid_quadratics(st, gamma, fast=True)
        _, qd, sd = grid_quadratics(st, gamma, fast=False)
        qf = _fault(qf, fault)
        err = max(np.max(np.abs(qf - qd)) / max(np.max(np.abs(qd)), 1e-300),
                  np.max(np.abs(sf - sd)) / np.max(np.abs(sd)))
        worst = max(worst, float(err))
    return CheckResult("grid", worst <= tol, f"fast vs direct grid scan worst rel err {worst:.3e}")


def check_woodbury(rng, trials=100, tol=1e-8, fault=False) -> CheckResult:
    worst = 0.0
    for _ in range(trials):
        st = oracles.random_state(rng, beta_range=(1e-3, 1.0))
        worst = max(worst, _fault(oracles.inverse_residual(st), fault))
    return CheckResult("woodbury", worst <= tol, f"worst |C^-1 C - I| {worst:.3e} over {trials} states")


def check_recovery(rng, trials=5, n=64, fault=False) -> CheckResult:
    """Single off-grid sinusoid, complete data."""
    op = MeasurementOperator.complete(n)
    worst_f = worst_e = 0.0
    for _ in range(trials):
        f0 = float(rng.random())
        x = np.exp(2j * np.pi * rng.random()) * steering_vector(f0, n)
        est = sair_run(x, op)
        err = float(np.max(wrap_distance(est.freqs, f0))) if est.freqs.size == 1 else 1.0
        worst_f = max(worst_f, _fault(err, fault))
        r = est.reconstruction - x
        worst_e = max(worst_e, float(np.vdot(r, r).real / np.vdot(x, x).real))
    ok = worst_f <= 1e-7 and worst_e <= 1e-10
    return CheckResult("recovery", ok, f"worst freq err {worst_f:.3e}, worst NMSE {worst_e:.3e}")


# counts for the CLI run; the acceptance suite uses the full counts
CHECKS = {
    "objective": (check_objective, 200),
    "dhat": (check_dhat, 200),
    "gradient": (check_gradient, 30),
    "l1": (check_l1, 100),
    "lemma3": (check_lemma3, 100),
    "single_atom": (check_single_atom, 20),
    "grid": (check_grid, 20),
    "woodbury": (check_woodbury, 100),
    "recovery": (check_recovery, 5),
}


def run_checks(only=None, seed=0, fault=None) -> VerifyReport:
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown check(s): {', '.join(unknown)}")
    report = VerifyReport()
    for i, name in enumerate(names):
        fn, trials = CHECKS[name]
        rng = np.random.default_rng([seed, i])
        try:
            res = fn(rng, trials=trials, fault=(name == fault))
        except Exception as exc:  # a crashing oracle is a failed check
            res = CheckResult(name, False, f"{type(exc).__name__}: {exc}")
        report.checks.append(res)
    return report
