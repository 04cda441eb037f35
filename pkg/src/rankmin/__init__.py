"""Affinely constrained matrix rank minimization by fixed-point iterations.

Hard thresholding, singular value shrinkage and continuation solvers,
a column-sampling approximate SVD, RIP diagnostics and a benchmark harness
for random recovery experiments.
"""

from .approx_svd import ApproxSvd, SamplerParams, linear_time_svd
from .bench import (BenchReport, generate_instance, metrics, near_lowrank_instance, rel_err,
                    run_campaign, wrong_rank_study)
from .linalg import (MatrixFormatError, NumericalError, SvdFactors, hard_threshold, norms,
                     read_matrix, soft_shrink, svd, write_matrix)
from .sensing import (LinearMap, adjoint, apply, check_propositions, dense_map, estimate_rip,
                      gaussian_map, identity_map, mask_map, spectral_upper_bound)
from .solvers import (SolverConfig, SolveTrace, fpc_solve, fpca_solve, fpcar_solve,
                      iht_solve, ihtms_solve, mu_schedule, rank_heuristic, solve)

__version__ = "0.1.0"
