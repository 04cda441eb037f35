"""Dense matrix primitives: SVD, hard thresholding, soft shrinkage, norms.

Matrices are plain 2-D ``float64`` numpy arrays of any shape.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "NumericalError",
    "MatrixFormatError",
    "SvdFactors",
    "ORTHO_TOL",
    "svd",
    "hard_threshold",
    "soft_shrink",
    "shrink_factors",
    "norms",
    "inner",
    "vec",
    "unvec",
    "read_matrix",
    "write_matrix",
    "format_matrix",
    "parse_matrix",
]

# per-column tolerance on ||U^T U - I||_F for SvdFactors
ORTHO_TOL = 1e-8


class NumericalError(RuntimeError):
    """An iterative numerical kernel failed to converge."""


class MatrixFormatError(ValueError):
    """Malformed matrix text input."""


class SvdFactors(NamedTuple):
    """Thin (possibly truncated) SVD ``X = U @ diag(s) @ V.T``.

    ``V`` holds right singular vectors as columns, shape ``(n, k)``.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T

    @property
    def rank(self) -> int:
        return int(self.s.size)


def _as_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} has non-finite entries")
    return X


def svd(X, k=None) -> SvdFactors:
    """Thin SVD of `X`, optionally truncated to the top `k` triples.

    Backed by LAPACK ``gesdd``; falls back to ``gesvd`` once before giving up.

    Raises
    ------
    NumericalError
        If LAPACK reports non-convergence on both drivers.
    """
    X = _as_matrix(X)
    kmax = min(X.shape)
    if k is not None and not 1 <= k <= kmax:
        raise ValueError(f"k must lie in [1, {kmax}], got {k}")
    try:
        U, s, Vh = np.linalg.svd(X, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            import scipy.linalg

            U, s, Vh = scipy.linalg.svd(X, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD failed to converge for {X.shape} input") from exc
    if k is not None:
        U, s, Vh = U[:, :k], s[:k], Vh[:k]
    return SvdFactors(U, s, Vh.T)


def shrink_factors(factors: SvdFactors, nu: float) -> SvdFactors:
    """Soft-threshold singular values in factored form, dropping zeros."""
    s = np.maximum(factors.s - nu, 0.0)
    keep = s > 0
    return SvdFactors(factors.U[:, keep], s[keep], factors.V[:, keep])


def hard_threshold(Y, r: int) -> np.ndarray:
    """Best rank-`r` approximation of `Y` (Eckart-Young truncation).

    Ties at the cut keep the first `r` triples in LAPACK order.
    """
    Y = _as_matrix(Y, "Y")
    kmax = min(Y.shape)
    if not 1 <= int(r) <= kmax:
        raise ValueError(f"rank r must lie in [1, {kmax}], got {r}")
    return svd(Y, int(r)).reconstruct()


def soft_shrink(X, nu: float) -> np.ndarray:
    """Singular value soft thresholding ``U diag((s - nu)_+) V^T``."""
    if nu < 0:
        raise ValueError(f"threshold nu must be nonnegative, got {nu}")
    X = _as_matrix(X)
    return shrink_factors(svd(X), nu).reconstruct()


def norms(X) -> dict:
    """Frobenius, spectral and nuclear norms of `X`."""
    X = _as_matrix(X)
    if X.size == 0:
        return {"frobenius": 0.0, "spectral": 0.0, "nuclear": 0.0}
    s = svd(X).s
    return {
        "frobenius": float(np.sqrt(np.sum(X * X))),
        "spectral": float(s[0]) if s.size else 0.0,
        "nuclear": float(np.sum(s)),
    }


def inner(X, Y) -> float:
    """Trace inner product ``<X, Y> = Tr(X^T Y)``."""
    return float(np.vdot(X, Y))


def vec(X) -> np.ndarray:
    """Stack the columns of `X` into one vector."""
    return np.asarray(X, dtype=float).reshape(-1, order="F")


def unvec(x, m: int, n: int) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape((m, n), order="F")


# ---------------------------------------------------------------------------
# matrix text format: "m n" header, then m rows of n reals


def format_matrix(X) -> str:
    X = _as_matrix(X)
    lines = [f"{X.shape[0]} {X.shape[1]}"]
    lines.extend(" ".join(f"{v:.17g}" for v in row) for row in X)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MatrixFormatError("empty matrix text")
    head = lines[0].split()
    try:
        m, n = (int(t) for t in head)
    except ValueError as exc:
        raise MatrixFormatError(f"bad header line {lines[0]!r}") from exc
    if m < 1 or n < 1:
        raise MatrixFormatError(f"nonpositive shape {m}x{n}")
    rows = lines[1:]
    if len(rows) != m:
        raise MatrixFormatError(f"expected {m} rows, found {len(rows)}")
    out = np.empty((m, n))
    for i, row in enumerate(rows):
        toks = row.split()
        if len(toks) != n:
            raise MatrixFormatError(f"row {i + 1}: expected {n} values, found {len(toks)}")
        try:
            out[i] = [float(t) for t in toks]
        except ValueError as exc:
            raise MatrixFormatError(f"row {i + 1}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise MatrixFormatError("NaN or Inf entries are not allowed")
    return out


def read_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())


def write_matrix(path, X) -> None:
    Path(path).write_text(format_matrix(X))
