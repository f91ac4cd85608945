"""Penalized robust regression paths with multi-minimum tracking and robust cross-validation."""

__version__ = "0.1.0"

from .cv import (CvOutcome, FoldPlan, Selection, make_folds, match_surrogates, naive_cv,
                 replication_seed, ris_cv, select_lambda, weight_similarity, weighted_rmspe)
from .diagnostics import (UnivariateScenario, detect_discontinuities,
                          enumerate_univariate_minima, path_report, total_variation)
from .enet import ENSolution, PenaltySpec, en_objective, lambda_max, weighted_en_solve
from .exceptions import (AllInfinite, AlphaZero, DegenerateResiduals, EmptyErrors, KTooLarge,
                         NonConvergence, PenseError, ZeroVariance, ZeroWeightSum)
from .metrics import metric_mape, metric_rmspe, metric_tau
from .pense import (LocalMinimum, LossSpec, MinimaRegistry, Start, adaptive_loadings,
                    compute_path, generate_starts, intercept_only_fit, lambda_grid,
                    local_optimize, robust_lambda_max)
from .rho import (MScaleSpec, RhoFunction, WeightVector, calibrate_cutoff, m_scale,
                  robustness_weights)
from .simulation import SimulatedDataset, SimulationConfig, gen_test, simulate
