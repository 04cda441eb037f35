"""
Recovering a low-rank matrix from Gaussian measurements
========================================================

Draw a rank-2 40x40 matrix, take 320 random linear measurements and run
each of the six solvers on the same problem.
"""
import numpy as np

from rankmin import SolverConfig, generate_instance, metrics, rel_err, solve
from rankmin.solvers import SIX_SOLVERS

inst = generate_instance(40, 40, 320, 2, seed=1)
print("SR=%(SR).2f  FR=%(FR).2f  r_max=%(r_max)d" % metrics(40, 40, 320, 2))

for name in SIX_SOLVERS:
    # given-rank solvers need the rank, the adaptive ones find it
    cfg = SolverConfig(rank=2) if name.endswith("r") else SolverConfig()
    tr = solve(name, inst.map, inst.b, cfg, truth=inst.M)
    print(f"{name:7s} iters={tr.iterations:5d}  rank={tr.records['rank'][-1]}  "
          f"rel.err={rel_err(tr.X, inst.M):.2e}  {tr.wall_time:.2f}s")

# the error curve is available per iteration when the truth is passed in
curve = tr.error_curve(np.linalg.norm(inst.M))
print("fpca error at iterations 1, 10, 100:", curve[[0, 9, 99]])
