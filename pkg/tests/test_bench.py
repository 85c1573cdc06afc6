import math

import numpy as np
import pytest

from sair.bench import (
    InfeasibleSpecError,
    TrialSpec,
    gen_instance,
    is_success,
    match_frequencies,
    min_wrap_separation,
    nmse,
    read_aggregate_csv,
    read_trials_csv,
    run_benchmark,
    trial_seed,
    write_aggregate_csv,
    write_trials_csv,
)
from sair.solver import SolverConfig, sair_run


def test_gen_instance_separation():
    inst = gen_instance(TrialSpec(n=64, K=5, min_sep=2 / 64, seed=7))
    assert inst.freqs.size == 5
    assert min_wrap_separation(inst.freqs) >= 0.03125
    np.testing.assert_allclose(np.abs(inst.gains), 1.0)
    assert inst.op.is_complete


def test_gen_instance_deterministic():
    a = gen_instance(TrialSpec(seed=99, m=40))
    b = gen_instance(TrialSpec(seed=99, m=40))
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.op.indices, b.op.indices)
    assert a.op.m == 40 and np.all(np.diff(a.op.indices) > 0)


def test_gen_single_and_dynamic_range():
    assert gen_instance(TrialSpec(K=1, seed=3)).freqs.size == 1
    inst = gen_instance(TrialSpec(seed=3, gain_model="dynamic-range", gain_range=(1, 10)))
    assert np.all((np.abs(inst.gains) >= 1) & (np.abs(inst.gains) <= 10))


def test_infeasible_spec():
    with pytest.raises(InfeasibleSpecError):
        TrialSpec(n=8, K=5, m=8, min_sep=0.25)
    with pytest.raises(ValueError):
        TrialSpec(m=65)


def test_nmse_examples():
    x = np.array([1 + 1j, 2, -1j])
    assert nmse(x, x) == 0.0
    assert nmse(np.zeros(3), x) == 1.0
    assert nmse(2 * x, x) == 1.0
    with pytest.raises(ValueError):
        nmse(x, np.zeros(3))
    with pytest.raises(ValueError):
        nmse(x[:2], x)


def test_is_success_boundary():
    assert is_success(1e-4)
    assert not is_success(1.0001e-4)
    assert is_success(0.0)


def test_match_frequencies_examples():
    f = np.array([0.1, 0.4, 0.7])
    assert np.all(match_frequencies(f, f).errors == 0)
    np.testing.assert_allclose(match_frequencies(f + 1e-5, f).errors, 1e-5, rtol=1e-6)
    m = match_frequencies([0.999], [0.001])
    assert m.errors[0] == pytest.approx(0.002)
    m = match_frequencies([0.1, 0.5], [0.52])
    assert m.pairs[0][0] == 1 and m.unmatched_est == [0]


def test_match_large_uses_assignment():
    rng = np.random.default_rng(0)
    f = np.sort(rng.random(12))
    perm = rng.permutation(12)
    m = match_frequencies(f[perm], f)
    assert np.all(m.errors == 0)


def test_trial_seed_distinct():
    seeds = {trial_seed(0, m, t) for m in (24, 32) for t in range(50)}
    assert len(seeds) == 100
    assert trial_seed(5, 24, 3) == trial_seed(5, 24, 3)


def test_benchmark_complete_data_and_roundtrip(tmp_path):
    res = run_benchmark([64], 10, TrialSpec(seed=1))
    assert res[0].success_rate == 1.0 and res[0].successes == 10
    write_trials_csv(res, tmp_path / "t.csv")
    write_aggregate_csv(res, tmp_path / "a.csv")
    rows = read_trials_csv(tmp_path / "t.csv")
    assert [r["nmse"] for r in rows] == [r.nmse for r in res[0].records]
    agg = read_aggregate_csv(tmp_path / "a.csv")
    assert agg[0]["success_rate"] == 1.0 and agg[0]["median_nmse"] == res[0].median_nmse


def test_single_trial_matches_direct_run():
    spec = TrialSpec(seed=8, m=48)
    res = run_benchmark([48], 1, spec)
    inst = gen_instance(TrialSpec(seed=trial_seed(8, 48, 0), m=48))
    est = sair_run(inst.op.apply(inst.x), inst.op, SolverConfig())
    assert res[0].records[0].nmse == nmse(est.reconstruction, inst.x)


def test_benchmark_parallel_matches_serial():
    a = run_benchmark([32, 64], 3, TrialSpec(seed=2))
    b = run_benchmark([32, 64], 3, TrialSpec(seed=2), jobs=2)
    for ra, rb in zip(a, b):
        assert [r.nmse for r in ra.records] == [r.nmse for r in rb.records]
        assert [r.success for r in ra.records] == [r.success for r in rb.records]


def test_failed_trial_recorded():
    # beta_floor_factor this large stops annealing far from exact recovery
    res = run_benchmark([64], 2, TrialSpec(seed=3), SolverConfig(beta_floor_factor=0.5, max_stages=1))
    assert res[0].trials == 2 and res[0].successes <= 2
    assert all(math.isfinite(r.runtime_s) for r in res[0].records)


def test_benchmark_rejects_zero_trials():
    with pytest.raises(ValueError):
        run_benchmark([64], 0, TrialSpec())
