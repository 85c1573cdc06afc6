"""Show x^H (T + beta I)^{-1} x converging or blowing up as beta -> 0."""

import numpy as np

from sair.oracles import in_column_space, lemma3_limit_probe


def main():
    rng = np.random.default_rng(0)
    n, rank = 16, 5
    B = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    T = B @ B.conj().T
    cases = {"in range(T)": B @ rng.standard_normal(rank),
             "generic": rng.standard_normal(n) + 1j * rng.standard_normal(n)}
    for name, x in cases.items():
        rep = lemma3_limit_probe(T, x)
        print(f"{name}: member={in_column_space(T, x)} verdict={rep.verdict} "
              f"pinv form={rep.pinv_value:.6g}")
        for b, v in zip(rep.beta_sequence, rep.values):
            print(f"  beta={b:.0e}  value={v:.10g}")


if __name__ == "__main__":
    main()
