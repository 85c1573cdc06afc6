"""Recover one off-grid sinusoid from complete and compressive samples."""

import argparse

import numpy as np

from sair import MeasurementOperator, nmse, sair_run, steering_vector
from sair.model import wrap_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    f0 = float(rng.random())
    x = np.exp(2j * np.pi * rng.random()) * steering_vector(f0, args.n)
    ops = {
        "complete": MeasurementOperator.complete(args.n),
        f"m={args.m}": MeasurementOperator(args.n, np.sort(rng.choice(args.n, args.m, replace=False))),
    }
    print(f"true frequency {f0:.15f}")
    for name, op in ops.items():
        est = sair_run(op.apply(x), op)
        err = wrap_distance(est.freqs, f0).min()
        print(f"{name:>9}: f = {est.freqs}, |df| = {err:.2e}, "
              f"NMSE = {nmse(est.reconstruction, x):.2e}, {est.runtime * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
