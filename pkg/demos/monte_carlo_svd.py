"""
Column-sampling SVD
===================

Approximate the top singular values of a matrix from a handful of sampled
columns and compare against the exact decomposition.
"""
import numpy as np

from rankmin import SamplerParams, hard_threshold, linear_time_svd, svd
from rankmin.approx_svd import reconstruct

rng = np.random.default_rng(0)
A = (rng.standard_normal((60, 6)) * [12, 8, 5, 3, 2, 1]) @ rng.standard_normal((6, 50))
best = np.linalg.norm(A - hard_threshold(A, 3))

for c in (3, 6, 12, 25, 50):
    res = linear_time_svd(A, SamplerParams(c, 3, seed=1))
    err = np.linalg.norm(A - reconstruct(res, A))
    print(f"c_s={c:3d}  sigma_C={np.round(res.sigma, 2)}  error={err:.3f}  (best {best:.3f})")

print("exact sigma:", np.round(svd(A).s[:3], 2))
