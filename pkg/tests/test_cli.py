import json
import subprocess
import sys

import numpy as np
import pytest

from sair.bench import TrialSpec, read_aggregate_csv, read_trials_csv, run_benchmark
from sair.cli import main, read_indices, read_signal, write_signal


def gen(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["gen", "--out-dir", str(out), *extra]) == 0
    return out


def test_signal_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    x[0] = complex(1 / 3, -np.pi)
    write_signal(tmp_path / "s.csv", x)
    np.testing.assert_array_equal(read_signal(tmp_path / "s.csv"), x)


def test_gen_deterministic_and_separated(tmp_path):
    a = gen(tmp_path, "a", "--seed", "5", "--m", "40")
    b = gen(tmp_path, "b", "--seed", "5", "--m", "40")
    for f in ("signal.csv", "truth.json", "indices.txt"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    truth = json.loads((a / "truth.json").read_text())
    f = np.sort(truth["freqs"])
    gaps = np.diff(np.append(f, f[0] + 1))
    assert len(f) == 5 and gaps.min() >= 2 / 64
    idx = read_indices(a / "indices.txt")
    assert idx.size == 40 and np.all(np.diff(idx) > 0)


def test_gen_complete_omits_indices(tmp_path):
    a = gen(tmp_path, "a", "--seed", "1")
    assert not (a / "indices.txt").exists()


def test_estimate_single_sinusoid_with_truth(tmp_path):
    a = gen(tmp_path, "a", "--seed", "2", "--k", "1")
    out = tmp_path / "est.json"
    rc = main(["estimate", str(a / "signal.csv"), "--truth", str(a / "truth.json"), "-o", str(out)])
    assert rc == 0
    est = json.loads(out.read_text())
    assert est["nmse"] <= 1e-10
    assert len(est["frequencies"]) == 1 and set(est["gains"][0]) == {"re", "im"}
    assert {"weights", "runtime_s", "objective_trace"} <= set(est)


def test_estimate_compressive(tmp_path):
    a = gen(tmp_path, "a", "--seed", "3", "--m", "48")
    out = tmp_path / "est.json"
    rc = main(["estimate", str(a / "signal.csv"), "--indices", str(a / "indices.txt"),
               "--truth", str(a / "truth.json"), "-o", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["nmse"] <= 1e-4


def test_full_indices_same_as_complete(tmp_path):
    a = gen(tmp_path, "a", "--seed", "4")
    (tmp_path / "all.txt").write_text("".join(f"{i}\n" for i in range(64)))
    o1, o2 = tmp_path / "1.json", tmp_path / "2.json"
    assert main(["estimate", str(a / "signal.csv"), "-o", str(o1)]) == 0
    assert main(["estimate", str(a / "signal.csv"), "--indices", str(tmp_path / "all.txt"),
                 "-o", str(o2)]) == 0
    e1, e2 = json.loads(o1.read_text()), json.loads(o2.read_text())
    for k in ("frequencies", "gains", "weights", "objective_trace"):
        assert e1[k] == e2[k]


def test_malformed_csv_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("re,im\n1.0,2.0\n0.5,abc\n")
    assert main(["estimate", str(p)]) == 2
    assert "bad.csv:3" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["x,y\n1,2\n", "re,im\n1,2,3\n", "re,im\n"])
def test_bad_signal_files(tmp_path, text):
    p = tmp_path / "s.csv"
    p.write_text(text)
    assert main(["estimate", str(p)]) == 2


def test_missing_input_and_unknown_flag(tmp_path):
    assert main(["estimate", str(tmp_path / "nope.csv")]) == 2
    assert main(["gen", "--bogus"]) == 2


def test_bench_files_match_memory(tmp_path, capsys):
    out = tmp_path / "b"
    rc = main(["bench", "--m-grid", "32,64", "--trials", "2", "--seed", "9", "--out-dir", str(out)])
    assert rc == 0
    assert "success" in capsys.readouterr().out
    mem = run_benchmark([32, 64], 2, TrialSpec(seed=9, m=64))
    rows = read_trials_csv(out / "trials.csv")
    assert [r["nmse"] for r in rows] == [r.nmse for res in mem for r in res.records]
    agg = read_aggregate_csv(out / "aggregate.csv")
    assert [a["success_rate"] for a in agg] == [r.success_rate for r in mem]


def test_verify_only_and_fault(capsys):
    assert main(["verify", "--only", "lemma3"]) == 0
    text = capsys.readouterr().out
    assert "lemma3" in text and "objective" not in text
    assert main(["verify", "--only", "l1", "grid", "--inject-fault", "grid"]) == 4
    assert "FAILED: grid" in capsys.readouterr().out


def test_verify_stock_build():
    assert main(["verify"]) == 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "sair", "verify", "--only", "l1"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout
