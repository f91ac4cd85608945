"""Two populations, one slope: why the best-minimum path jumps.

Most rows follow y = 100 x, a minority follows y = 0.5 x.  For every penalty
level the robust objective has one local minimum per population.  The
deeper one switches from the majority slope to the minority slope at some
lambda, so a path that keeps only the best minimum jumps by about 99.5,
while each minimum followed on its own moves smoothly.

Run with ``python demos/nonsmooth_path.py``.
"""

import numpy as np

from pensecv.diagnostics import (UnivariateScenario, branch_traces, detect_discontinuities,
                                 path_report, univariate_registry)


def main():
    sc = UnivariateScenario()
    x, y, _ = sc.generate(seed=0)

    report = path_report(sc, x, y)
    two = branch_traces(univariate_registry(sc, x, y, M=2), [sc.beta_c, sc.beta_star])
    one = univariate_registry(sc, x, y, M=1)
    single = np.array([m[0].beta[0] for m in one.minima])
    pred_c, pred_s = sc.predicted_minima(sc.lambda_grid)

    print(f"{'lambda':>9} {'minima (exact)':>22} {'best':>9} {'M=1 path':>9} "
          f"{'branch c':>9} {'pred c':>8} {'branch *':>9} {'pred *':>8}")
    for t, lam in enumerate(sc.lambda_grid):
        locs = " ".join(f"{m.location:8.3f}" for m in report.minima[t])
        print(f"{lam:9.5f} {locs:>22} {report.global_trace[t]:9.3f} {single[t]:9.3f} "
              f"{two[0, t]:9.3f} {pred_c[t]:8.3f} {two[1, t]:9.3f} {pred_s[t]:8.3f}")

    print()
    for name, trace in [("exact best minimum", report.global_trace), ("optimizer, M=1", single),
                        ("optimizer, branch c", two[0]), ("optimizer, branch *", two[1])]:
        jumps = detect_discontinuities(trace, sc.lambda_grid)
        text = ", ".join(f"{j.jump:.2f} at lambda={j.lam:.5f}" for j in jumps) or "none"
        print(f"{name:>20}: jumps {text}")


if __name__ == "__main__":
    main()
