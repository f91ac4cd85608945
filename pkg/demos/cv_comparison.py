"""Naive CV against RIS-CV on one simulated contaminated data set.

Prints both cross-validation curves, the 1-SE selections, the error of each
selected fit on a large clean test sample (relative to the true error
scale) and the wall time of each pipeline.  One seed takes about a minute.

Run with ``python demos/cv_comparison.py [seed]``.
"""

import sys

from pensecv.experiment import ComparisonSettings, compare_engines
from pensecv.simulation import SimulationConfig


def main(seed=1):
    cmp = compare_engines(SimulationConfig(rng_seed=seed), ComparisonSettings())
    ris, naive = cmp.ris, cmp.naive
    print(f"seed {seed}: {len(cmp.lambdas)} lambdas, minima kept per lambda {cmp.registry_counts}")
    print(f"{'lambda':>9} {'RIS wRMSPE':>11} {'sd':>7} {'q':>3} {'naive tau':>10} {'sd':>7}")
    for t, lam in enumerate(cmp.lambdas):
        flags = ("<R" if t == ris.selection.index else "  ") + ("<N" if t == naive.selection.index
                                                                  else "")
        print(f"{lam:9.4f} {ris.outcome.curve[t]:11.3f} {ris.outcome.curve_sd[t]:7.3f} "
              f"{ris.outcome.selected_q[t]:3d} {naive.outcome.curve[t]:10.3f} "
              f"{naive.outcome.curve_sd[t]:7.3f} {flags}")
    print()
    for name, run in [("RIS-CV", ris), ("naive", naive)]:
        print(f"{name:>7}: total variation {run.total_variation:7.3f}, selected lambda "
              f"{run.selection.lam:.4f} (nnz {run.selected.nnz}), test error "
              f"{run.prediction_error:.3f}, {run.total_seconds:.1f} s")
    print(f"zero weights at most {cmp.max_zero_weights} (cap {cmp.zero_weight_cap}), "
          f"{cmp.cap_violations} minima above the cap")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
