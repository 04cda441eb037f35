"""Monte Carlo column-sampling approximation of the leading singular triples.

Sample `c_s` columns with replacement, rescale each by ``1/sqrt(c_s p_i)``,
take the exact eigendecomposition of the small ``C^T C`` and lift its top
`k_s` eigenvectors to approximate left singular vectors of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import SvdFactors, svd

__all__ = ["DROP_TOL", "SamplerParams", "ApproxSvd", "linear_time_svd",
           "reconstruct", "approx_factors"]

# sigma_t(C) <= DROP_TOL * sigma_1(C) is treated as zero
DROP_TOL = 1e-12


@dataclass(frozen=True)
class SamplerParams:
    c_s: int
    k_s: int
    probs: np.ndarray | None = None
    seed: object = None

    def validated(self, n: int) -> "SamplerParams":
        if not 1 <= self.k_s <= self.c_s:
            raise ValueError(f"need 1 <= k_s <= c_s, got k_s={self.k_s}, c_s={self.c_s}")
        if self.c_s > n:
            raise ValueError(f"c_s={self.c_s} exceeds the column count {n}")
        probs = np.full(n, 1.0 / n) if self.probs is None else np.asarray(self.probs, float)
        if probs.shape != (n,):
            raise ValueError(f"probs must have length {n}")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        return SamplerParams(self.c_s, self.k_s, probs, self.seed)


@dataclass
class ApproxSvd:
    """Approximate left singular vectors `H` and singular values `sigma`.

    ``k_eff`` may be below ``k_s`` when C has fewer nonnegligible
    singular values; ``k_eff == 0`` flags an all-zero sample.
    """

    H: np.ndarray
    sigma: np.ndarray
    columns: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)

    @property
    def k_eff(self) -> int:
        return int(self.sigma.size)

    @property
    def degenerate(self) -> bool:
        return self.k_eff == 0


def linear_time_svd(A, params: SamplerParams) -> ApproxSvd:
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    params = params.validated(n)
    c = params.c_s
    rng = np.random.default_rng(params.seed)
    idx = rng.choice(n, size=c, replace=True, p=params.probs)
    C = A[:, idx] / np.sqrt(c * params.probs[idx])

    w, Y = np.linalg.eigh(C.T @ C)
    order = np.argsort(w)[::-1]
    w, Y = w[order], Y[:, order]
    sig = np.sqrt(np.maximum(w, 0.0))
    if sig[0] == 0.0:
        return ApproxSvd(np.zeros((m, 0)), np.zeros(0), idx, C)
    keep = np.flatnonzero(sig[: params.k_s] > DROP_TOL * sig[0])
    sig = sig[keep]
    H = (C @ Y[:, keep]) / sig
    return ApproxSvd(H, sig, idx, C)


def reconstruct(approx: ApproxSvd, A) -> np.ndarray:
    """``H diag(sigma) (A^T H diag(1/sigma))^T``, which equals ``H H^T A``."""
    if approx.degenerate:
        raise ValueError("cannot reconstruct from a degenerate (k_eff = 0) sample")
    H, s = approx.H, approx.sigma
    W = (np.asarray(A, dtype=float).T @ H) / s
    return (H * s) @ W.T


def approx_factors(approx: ApproxSvd, A) -> SvdFactors:
    """Exact SVD of the rank-k_eff reconstruction, formed from small factors.

    The columns of `H` are orthonormal, so ``H H^T A = (H P) S Q^T`` where
    ``P S Q^T`` is the SVD of the k-by-n matrix ``H^T A``.
    """
    if approx.degenerate:
        raise ValueError("cannot factor a degenerate (k_eff = 0) sample")
    H = approx.H
    f = svd(H.T @ np.asarray(A, dtype=float))
    return SvdFactors(H @ f.U, f.s, f.V)
