"""
Restricted isometry and the cost of guessing the rank
=====================================================

Estimate the restricted isometry constant of a Gaussian map, then run the
given-rank solvers with too small a rank on rank-3 problems.
"""
from rankmin import estimate_rip, gaussian_map, wrong_rank_study

A = gaussian_map(20, 20, 240, seed=7)
# probes are nested in r; random rank-1 probes often deviate the most
for r in (1, 2, 3):
    est = estimate_rip(A, r, trials=200, seed=0)
    print(f"r={r}: {est.delta_lower:.3f} <= delta_r <= {est.delta_upper:.3f}")

# small instance count keeps this quick; the adaptive solvers recover the rank
rep = wrong_rank_study(true_r=3, given_ranks=(1, 2, 3), solvers=("ihtr",), instances=3)
print(rep.to_text())
