"""Linear measurement maps, spectral bounds and RIP diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import NumericalError, inner, norms, svd, unvec, vec

__all__ = [
    "LinearMap",
    "gaussian_map",
    "identity_map",
    "mask_map",
    "dense_map",
    "apply",
    "adjoint",
    "spectral_upper_bound",
    "rip_certificate",
    "RipEstimate",
    "estimate_rip",
    "random_lowrank",
    "svd_basis",
    "orthonormalize",
    "project",
    "check_propositions",
]

KINDS = ("dense-gaussian", "identity", "entry-mask", "dense")


@dataclass(frozen=True, eq=False)
class LinearMap:
    """A linear map from m-by-n matrices to R^p.

    Dense kinds carry the p-by-mn matrix in `matrix`, acting on the
    column-stacked vec(X). Entry masks carry the sampled linear indices
    (column-major) in `omega`. `scale` multiplies the whole operator.
    """

    kind: str
    m: int
    n: int
    p: int
    seed: int | None = None
    scale: float = 1.0
    matrix: np.ndarray | None = field(default=None, repr=False)
    omega: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown map kind {self.kind!r}")
        if self.m < 1 or self.n < 1 or self.p < 0:
            raise ValueError(f"bad map shape m={self.m} n={self.n} p={self.p}")
        if self.matrix is not None:
            self.matrix.setflags(write=False)
        if self.omega is not None:
            self.omega.setflags(write=False)

    @property
    def shape(self):
        return (self.m, self.n)

    def __call__(self, X):
        return apply(self, X)

    def T(self, y):
        return adjoint(self, y)

    def scaled(self, c: float) -> "LinearMap":
        return LinearMap(self.kind, self.m, self.n, self.p, self.seed,
                         self.scale * c, self.matrix, self.omega)

    def as_matrix(self) -> np.ndarray:
        """Explicit p-by-mn matrix of the map (for small diagnostics)."""
        if self.kind == "identity":
            return self.scale * np.eye(self.p)
        if self.kind == "entry-mask":
            A = np.zeros((self.p, self.m * self.n))
            A[np.arange(self.p), self.omega] = self.scale
            return A
        return self.scale * self.matrix

    def to_json(self) -> str:
        if self.kind == "dense":
            raise ValueError("explicit dense maps are not serializable; use a seeded kind")
        header = {"kind": self.kind, "m": self.m, "n": self.n, "p": self.p, "seed": self.seed}
        if self.scale != 1.0:
            header["scale"] = self.scale
        return json.dumps(header)

    @classmethod
    def from_json(cls, text: str | dict) -> "LinearMap":
        d = json.loads(text) if isinstance(text, str) else dict(text)
        kind = d.get("kind")
        try:
            m, n, p = int(d["m"]), int(d["n"]), int(d["p"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"operator header needs integer m, n, p: {d}") from exc
        seed = d.get("seed")
        if kind == "dense-gaussian":
            A = gaussian_map(m, n, p, seed)
        elif kind == "identity":
            A = identity_map(m, n)
            if p != m * n:
                raise ValueError("identity map requires p = m*n")
        elif kind == "entry-mask":
            A = mask_map(m, n, p, seed)
        else:
            raise ValueError(f"cannot deserialize operator kind {kind!r}")
        scale = float(d.get("scale", 1.0))
        return A.scaled(scale) if scale != 1.0 else A


def gaussian_map(m: int, n: int, p: int, seed) -> LinearMap:
    """Dense map with i.i.d. N(0, 1/p) entries, regenerated from `seed`.

    The matrix is ``default_rng(seed).standard_normal((p, m*n)) / sqrt(p)``.
    """
    if p < 1:
        raise ValueError("p must be positive")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, m * n)) / np.sqrt(p)
    return LinearMap("dense-gaussian", m, n, p, seed=seed, matrix=A)


def identity_map(m: int, n: int) -> LinearMap:
    return LinearMap("identity", m, n, m * n)


def mask_map(m: int, n: int, p: int, seed=None, omega=None) -> LinearMap:
    """Entry sampling map; `omega` defaults to a uniform random p-subset."""
    if omega is None:
        if not 1 <= p <= m * n:
            raise ValueError("mask size p must lie in [1, m*n]")
        omega = np.sort(np.random.default_rng(seed).choice(m * n, size=p, replace=False))
    omega = np.asarray(omega, dtype=np.intp)
    if omega.size != p or np.unique(omega).size != p or omega.min() < 0 or omega.max() >= m * n:
        raise ValueError("omega must be p distinct linear indices into an m*n matrix")
    return LinearMap("entry-mask", m, n, p, seed=seed, omega=omega.copy())


def dense_map(A, m: int, n: int) -> LinearMap:
    """Wrap an explicit p-by-mn matrix (not serializable)."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != m * n:
        raise ValueError(f"matrix must have m*n={m * n} columns, got shape {A.shape}")
    return LinearMap("dense", m, n, A.shape[0], matrix=A)


def apply(A: LinearMap, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape != A.shape:
        raise ValueError(f"expected a {A.m}x{A.n} matrix, got shape {X.shape}")
    x = vec(X)
    if A.kind == "identity":
        y = x.copy()
    elif A.kind == "entry-mask":
        y = x[A.omega]
    else:
        y = A.matrix @ x
    return A.scale * y if A.scale != 1.0 else y


def adjoint(A: LinearMap, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != A.p:
        raise ValueError(f"expected a length-{A.p} vector, got length {y.size}")
    if A.kind == "identity":
        x = y.copy()
    elif A.kind == "entry-mask":
        x = np.zeros(A.m * A.n)
        x[A.omega] = y
    else:
        x = A.matrix.T @ y
    if A.scale != 1.0:
        x = A.scale * x
    return unvec(x, A.m, A.n)


def spectral_upper_bound(A: LinearMap, tol=1e-6, max_iter=20000, seed=0) -> float:
    """Largest eigenvalue of ``A^* A`` by power iteration.

    Iterates on whichever Gram matrix (p-by-p or mn-by-mn) is smaller;
    both share the nonzero spectrum. Stops when the Rayleigh quotient
    changes by less than `tol` relative.

    Raises
    ------
    NumericalError
        When `max_iter` iterations pass without meeting `tol`.
    """
    if A.kind in ("identity", "entry-mask"):
        return float(A.scale ** 2) if A.p > 0 else 0.0
    M = A.matrix
    if M.shape[0] <= M.shape[1]:
        def op(v):
            return M @ (M.T @ v)
        dim = M.shape[0]
    else:
        def op(v):
            return M.T @ (M @ v)
        dim = M.shape[1]
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = op(v)
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - lam) <= tol * abs(new):
            return float(new * A.scale ** 2)
        lam = new
    raise NumericalError(f"power iteration did not reach tol={tol} in {max_iter} steps")


def _lambda_min_lower(A: LinearMap) -> float:
    """A valid lower bound on the smallest eigenvalue of ``A^* A``."""
    if A.p < A.m * A.n:
        return 0.0
    if A.kind in ("identity", "entry-mask"):
        return float(A.scale ** 2)
    M = A.as_matrix()
    return max(float(np.linalg.eigvalsh(M.T @ M)[0]), 0.0)


def rip_certificate(A: LinearMap, lam_max: float | None = None) -> float:
    """Rank-independent upper bound on every RIP constant of `A`.

    ``max(lam_max - 1, 1 - lam_min_lb, 0)``; `lam_min_lb` is 0 when p < mn.
    """
    if lam_max is None:
        lam_max = spectral_upper_bound(A)
    return max(lam_max - 1.0, 1.0 - _lambda_min_lower(A), 0.0)


@dataclass
class RipEstimate:
    r: int
    delta_lower: float
    delta_upper: float
    trials: int
    seed: int | None
    witness: np.ndarray | None = field(default=None, repr=False)


def random_lowrank(m: int, n: int, r: int, rng) -> np.ndarray:
    """Unit-Frobenius ``G H^T`` with standard normal m-by-r and n-by-r factors."""
    G = rng.standard_normal((m, r))
    H = rng.standard_normal((n, r))
    X = G @ H.T
    return X / np.linalg.norm(X)


def estimate_rip(A: LinearMap, r: int, trials: int = 100, seed=0) -> RipEstimate:
    """Sampled lower bound and certified upper bound on delta_r(A).

    Trial ``t`` draws full-width Gaussian factors from ``default_rng([seed, t])``
    and probes every rank ``s <= r`` built from their leading columns, so the
    probe set for rank r contains the one for any smaller rank and the
    lower bound is monotone in r by construction.
    """
    if not 1 <= r <= min(A.m, A.n):
        raise ValueError(f"r must lie in [1, {min(A.m, A.n)}]")
    if trials < 1:
        raise ValueError("trials must be positive")
    kmax = min(A.m, A.n)
    best, witness = -1.0, None
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        G = rng.standard_normal((A.m, kmax))
        H = rng.standard_normal((A.n, kmax))
        for s in range(1, r + 1):
            X = G[:, :s] @ H[:, :s].T
            X /= np.linalg.norm(X)
            y = apply(A, X)
            dev = abs(float(y @ y) - 1.0)
            if dev > best:
                best, witness = dev, X
    upper = max(rip_certificate(A), best)
    return RipEstimate(r, best, upper, trials, seed, witness)


# ---------------------------------------------------------------------------
# projections onto spans of rank-one matrices


def svd_basis(X, r: int | None = None, tol=1e-12) -> np.ndarray:
    """Rank-one SVD basis ``u_i v_i^T`` of `X`, stacked along axis 0.

    Only triples with singular value above ``tol * sigma_1`` are kept.
    """
    f = svd(X)
    keep = f.s > tol * (f.s[0] if f.s.size else 0.0)
    if r is not None:
        keep[r:] = False
    U, V = f.U[:, keep], f.V[:, keep]
    return np.einsum("ik,jk->kij", U, V)


def orthonormalize(mats, tol=1e-10) -> np.ndarray:
    """Modified Gram-Schmidt in the trace inner product.

    Returns an orthonormal stack spanning the same subspace; members
    that are numerically dependent (residual norm below `tol`) are dropped.
    """
    mats = np.asarray(mats, dtype=float)
    out = []
    for M in mats:
        W = M.copy()
        for _ in range(2):  # reorthogonalize once for stability
            for g in out:
                W -= inner(g, W) * g
        nrm = np.linalg.norm(W)
        if nrm > tol * max(1.0, np.linalg.norm(M)):
            out.append(W / nrm)
    if not out:
        return np.zeros((0,) + mats.shape[1:])
    return np.stack(out)


def project(basis, X) -> np.ndarray:
    """Orthogonal projection of `X` onto span(basis) for an orthonormal stack."""
    basis = np.asarray(basis)
    if basis.shape[0] == 0:
        return np.zeros_like(np.asarray(X, dtype=float))
    coef = np.tensordot(basis, X, axes=([1, 2], [0, 1]))
    return np.tensordot(coef, basis, axes=(0, 0))


def _restricted_gram(A: LinearMap, basis) -> np.ndarray:
    Y = np.stack([apply(A, g) for g in basis])
    return Y @ Y.T


def check_propositions(A: LinearMap, r: int, trials: int = 200, seed=0,
                       delta: float | None = None) -> dict:
    """Numerically check the RIP consequences used in the convergence proofs.

    Each inequality is evaluated with the certified bound ``delta`` (default
    :func:`rip_certificate`) on `trials` random instances; inputs are
    normalized so margins (right side minus left side) are on a unit scale.

    Returns a dict with ``delta_ub`` and the minimum margin per check:

    ``adjoint_bound``
        ``||P_Psi A^* b|| <= sqrt(1+delta) ||b||``
    ``gram_lower`` / ``gram_upper``
        ``(1-delta)||P X|| <= ||P A^*A P X|| <= (1+delta)||P X||``
    ``gram_eigen``
        eigenvalues of ``P A^*A P`` on span(Psi) inside ``[1-delta, 1+delta]``
    ``cross_term``
        ``||P_Psi A^*A (I-P_Psi) X|| <= delta ||(I-P_Psi) X||`` for X in
        span(Psi'), with ``|Psi| + |Psi'| <= r`` (skipped when r < 2)
    ``nuclear_bound``
        ``||A X|| <= sqrt(1+delta)(||X||_F + ||X||_* / sqrt(r))``
    """
    if not 1 <= r <= min(A.m, A.n):
        raise ValueError(f"r must lie in [1, {min(A.m, A.n)}]")
    if delta is None:
        delta = rip_certificate(A)
    m, n = A.m, A.n
    margins = {k: np.inf for k in ("adjoint_bound", "gram_lower", "gram_upper",
                                   "gram_eigen", "cross_term", "nuclear_bound")}
    if r < 2:
        margins["cross_term"] = None
    up = np.sqrt(1.0 + delta)
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        psi = svd_basis(rng.standard_normal((m, r)) @ rng.standard_normal((r, n)), r)
        basis = orthonormalize(psi)

        b = rng.standard_normal(A.p)
        b /= max(np.linalg.norm(b), 1e-300)
        lhs = np.linalg.norm(project(basis, adjoint(A, b)))
        margins["adjoint_bound"] = min(margins["adjoint_bound"], up - lhs)

        X = rng.standard_normal((m, n))
        PX = project(basis, X)
        PX /= np.linalg.norm(PX)
        val = np.linalg.norm(project(basis, adjoint(A, apply(A, PX))))
        margins["gram_lower"] = min(margins["gram_lower"], val - (1.0 - delta))
        margins["gram_upper"] = min(margins["gram_upper"], (1.0 + delta) - val)
        ev = np.linalg.eigvalsh(_restricted_gram(A, basis))
        margins["gram_eigen"] = min(margins["gram_eigen"],
                                    ev[0] - (1.0 - delta), (1.0 + delta) - ev[-1])

        if r >= 2:
            k1 = int(rng.integers(1, r))
            k2 = r - k1
            b1 = orthonormalize(svd_basis(rng.standard_normal((m, k1)) @ rng.standard_normal((k1, n)), k1))
            b2 = svd_basis(rng.standard_normal((m, k2)) @ rng.standard_normal((k2, n)), k2)
            Xs = np.tensordot(rng.standard_normal(b2.shape[0]), b2, axes=(0, 0))
            Xs /= np.linalg.norm(Xs)
            R = Xs - project(b1, Xs)
            lhs = np.linalg.norm(project(b1, adjoint(A, apply(A, R))))
            margins["cross_term"] = min(margins["cross_term"], delta * np.linalg.norm(R) - lhs)

        Z = rng.standard_normal((m, n))
        nz = norms(Z)
        Z /= nz["frobenius"]
        rhs = up * (1.0 + nz["nuclear"] / nz["frobenius"] / np.sqrt(r))
        margins["nuclear_bound"] = min(margins["nuclear_bound"], rhs - np.linalg.norm(apply(A, Z)))

    report = {"delta_ub": float(delta), "r": r, "trials": trials, "seed": seed}
    report.update({k: (None if v is None else float(v)) for k, v in margins.items()})
    report["violations"] = sum(1 for k, v in margins.items() if v is not None and v < -1e-9)
    return report
