"""Replace 39 of 100 responses by 1e6 and compare PENSE with the plain elastic net.

The S-loss with breakdown point 0.4 can give zero weight to up to 40 rows, so
its fit barely moves.  The least-squares elastic net follows the outliers.

Run with ``python demos/breakdown.py``.
"""

import numpy as np

from pensecv import (LossSpec, PenaltySpec, compute_path, lambda_grid, ris_cv, select_lambda,
                     weighted_en_solve)

BETA = np.array([2.0, -1.5, 1.0, 0, 0, 0.5, 0, 0, 0, 0])


def pense(x, y, loss):
    grid = lambda_grid(x, y, loss, 0.5, q=10, min_ratio=0.01)
    reg = compute_path(x, y, loss, 0.5, grid, M=5, n_subsets=20, seed=1)
    sel = select_lambda(ris_cv(reg, x, y, loss, 0.5, K=5, R=2, seed=1), "one-se")
    return reg[sel.index][sel.q]


def main():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((100, 10))
    y = 1 + x @ BETA + rng.standard_normal(100)
    y_bad = y.copy()
    y_bad[rng.choice(100, 39, replace=False)] = 1e6
    loss = LossSpec.s_loss(0.4)

    np.set_printoptions(precision=3, suppress=True, linewidth=120)
    print("true     ", np.concatenate(([1.0], BETA)))
    fits = {}
    for label, resp in [("clean", y), ("39 bad", y_bad)]:
        m = pense(x, resp, loss)
        en = weighted_en_solve(x, resp, PenaltySpec(m.lam, 0.5))
        fits[label] = (m.coefficients, np.concatenate(([en.intercept], en.beta)))
        print(f"{label:>7} PENSE (lambda={m.lam:.3f}, {m.n_zero_weights} zero weights)")
        print("         ", m.coefficients)
        print(f"{label:>7} EN at the same lambda")
        print("         ", fits[label][1])

    norm = np.linalg.norm
    print(f"\nnorm ratio bad/clean: PENSE {norm(fits['39 bad'][0]) / norm(fits['clean'][0]):.3f}, "
          f"EN {norm(fits['39 bad'][1]) / norm(fits['clean'][1]):.3g}")


if __name__ == "__main__":
    main()
