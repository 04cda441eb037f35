"""Fixed-point solvers for affinely constrained rank minimization.

All schemes share the same iteration::

    Y = X - tau * A^*(A X - b)
    X = shrink(top_r(Y), nu)

and differ in how `r` and `nu` are chosen:

========  ===========================  =========================
solver    rank                         threshold
========  ===========================  =========================
fpc       full (no truncation)         tau * mu, fixed
ihtr      fixed r                      0
iht       heuristic, starts at r_max   0
ihtmsr    fixed r                      mu, fixed
ihtms     heuristic                    mu, fixed
fpcar     fixed r                      continuation mu_1 .. mu_bar
fpca      heuristic                    tau * mu, continuation
========  ===========================  =========================

Hard thresholding and soft shrinkage commute, so ``S(R(Y))`` and
``R(S(Y))`` are both computed as "keep the top r triples, then shrink".
"""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg

from .approx_svd import SamplerParams, linear_time_svd
from .linalg import SvdFactors, shrink_factors, svd
from .sensing import LinearMap, adjoint, apply, dense_map, spectral_upper_bound

__all__ = [
    "SolverConfig",
    "SolveTrace",
    "mu_schedule",
    "rank_heuristic",
    "max_recoverable_rank",
    "objective",
    "whiten",
    "fpc_solve",
    "iht_solve",
    "ihtms_solve",
    "fpcar_solve",
    "fpca_solve",
    "SOLVERS",
    "solve",
]


@dataclass(frozen=True)
class SolverConfig:
    """Tunables shared by every solver; defaults follow the published table.

    ``tau=None`` means 1 for the rank-limited schemes and ``1/lambda_max``
    for FPC. ``mu_1=None`` means ``eta_mu * sigma_1(A^* b)``. ``c_s=None``
    means ``2 r_max - 2`` (raised to the working rank if smaller).
    ``svd_mode="auto"`` samples columns (LinearTimeSVD) when the rank is
    chosen adaptively and uses the exact truncated SVD for a given rank.
    ``stage_iters``, when given, fixes the iteration count of each
    continuation stage and disables the per-stage stopping test.
    ``whiten`` replaces a dense map by the equivalent map with orthonormal
    rows before iterating (see :func:`whiten`); it does not apply to FPC.
    """

    tau: float | None = None
    mu: float | None = None
    mu_bar: float = 1e-8
    eta_mu: float = 0.25
    mu_1: float | None = None
    xtol: float = 1e-6
    eps_s: float = 0.01
    c_s: int | None = None
    max_inner_iters: int = 500
    max_total_iters: int = 10000
    rank_mode: str = "fixed"
    rank: int | None = None
    r_max: int | None = None
    svd_mode: str = "auto"
    grad_blowup_factor: float = 10.0
    rank_increase: str = "gradient"
    nonexpansive_limit: int = 10
    stage_iters: tuple | None = None
    whiten: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < self.eta_mu < 1:
            raise ValueError("eta_mu must lie in (0, 1)")
        if not self.mu_bar > 0:
            raise ValueError("mu_bar must be positive")
        if not self.xtol > 0:
            raise ValueError("xtol must be positive")
        if not 0 < self.eps_s < 1:
            raise ValueError("eps_s must lie in (0, 1)")
        if self.rank_mode not in ("fixed", "adaptive"):
            raise ValueError(f"rank_mode must be 'fixed' or 'adaptive', got {self.rank_mode!r}")
        if self.svd_mode not in ("auto", "exact", "monte-carlo"):
            raise ValueError(f"svd_mode must be 'auto', 'exact' or 'monte-carlo', "
                             f"got {self.svd_mode!r}")
        if self.rank_increase not in ("gradient", "nonexpansive"):
            raise ValueError("rank_increase must be 'gradient' or 'nonexpansive'")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["stage_iters"] is not None:
            d["stage_iters"] = list(d["stage_iters"])
        return d


TRACE_COLUMNS = ("iter", "mu", "rank", "residual", "step", "rel_err")


@dataclass
class SolveTrace:
    solver: str
    X: np.ndarray
    iterations: int
    converged: bool
    wall_time: float
    records: dict = field(repr=False)
    config: SolverConfig | None = field(default=None, repr=False)

    def column(self, name) -> np.ndarray:
        return np.asarray(self.records[name])

    def error_curve(self, truth_norm: float = 1.0) -> np.ndarray:
        """Absolute errors ||X^k - M||_F from the recorded relative errors."""
        return self.column("rel_err") * truth_norm

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        n = len(self.records["iter"])
        for i in range(n):
            row = [self.records[c][i] for c in TRACE_COLUMNS]
            w.writerow([row[0], f"{row[1]:.17g}", row[2]]
                       + ["" if math.isnan(v) else f"{v:.17g}" for v in row[3:]])
        return buf.getvalue()


def mu_schedule(mu_1: float, eta_mu: float, mu_bar: float) -> list:
    """Geometric continuation ``mu_{j+1} = max(mu_j * eta_mu, mu_bar)``."""
    if not mu_bar > 0:
        raise ValueError("mu_bar must be positive")
    if not 0 < eta_mu < 1:
        raise ValueError("eta_mu must lie in (0, 1)")
    if mu_1 < mu_bar:
        raise ValueError("mu_1 must be at least mu_bar")
    out = [float(mu_1)]
    while out[-1] > mu_bar:
        out.append(max(out[-1] * eta_mu, mu_bar))
    out[-1] = float(mu_bar)
    return out


def max_recoverable_rank(m: int, n: int, p: int) -> int:
    """Largest r with r(m + n - r) < p, or 0 if there is none."""
    best = 0
    for r in range(1, min(m, n) + 1):
        if r * (m + n - r) < p:
            best = r
    return best


def rank_heuristic(prev_sigma, sigma1: float | None, eps_s: float,
                   grad_norm_history=(), current_r: int | None = None,
                   r_max: int | None = None, blowup_factor: float = 10.0) -> int:
    """Next working rank from the singular values of the previous iterate.

    Counts the values above ``eps_s * sigma1``, clamps to ``[1, r_max]`` and
    adds one when the latest gradient norm jumped by more than
    `blowup_factor` over the one before it.
    """
    if not 0 < eps_s < 1:
        raise ValueError("eps_s must lie in (0, 1)")
    s = np.asarray(prev_sigma, dtype=float)
    if s.size == 0:
        r = 1
    else:
        top = float(s.max()) if sigma1 is None else float(sigma1)
        r = int(np.count_nonzero(s > eps_s * top))
    hi = r_max if r_max is not None else max(r, 1)
    r = min(max(r, 1), hi)
    g = list(grad_norm_history)
    if len(g) >= 2 and g[-1] > blowup_factor * g[-2]:
        r = min(r + 1, hi)
    return r


def objective(A: LinearMap, b, X, mu: float) -> float:
    """``mu ||X||_* + 0.5 ||A X - b||^2``."""
    res = apply(A, X) - b
    return float(mu * np.sum(svd(X).s) + 0.5 * res @ res)


# ---------------------------------------------------------------------------


def _svd_mode(cfg: SolverConfig) -> str:
    if cfg.svd_mode == "auto":
        return "monte-carlo" if cfg.rank_mode == "adaptive" else "exact"
    return cfg.svd_mode


def _truncate(Y, r, cfg: SolverConfig, k: int, c_s: int) -> SvdFactors:
    if r is None:
        return svd(Y)
    if _svd_mode(cfg) == "monte-carlo":
        n = Y.shape[1]
        cols = min(max(c_s, r), n)
        approx = linear_time_svd(Y, SamplerParams(cols, min(r, cols), seed=[cfg.seed, k]))
        if not approx.degenerate:
            # Y ~ H diag(sigma_C) W^T; W is not orthonormal, and shrinkage
            # acts on the sampled values sigma_C directly
            W = (Y.T @ approx.H) / approx.sigma
            return SvdFactors(approx.H, approx.sigma, W)
    return svd(Y, min(r, min(Y.shape)))


def whiten(A: LinearMap, b):
    """Equivalent map with orthonormal rows: ``A' = L^{-1} A``, ``b' = L^{-1} b``.

    ``L L^T = A A^T`` (Cholesky, or a rank-revealing eigen factorization when
    the Gram matrix is singular, in which case redundant rows are dropped).
    The feasible set ``{X : A X = b}`` is unchanged, and ``tau = 1`` becomes
    the exact projection onto it. Returns ``(A', b', L)``; identity and mask
    maps are returned unchanged with ``L = None``.
    """
    b = np.asarray(b, dtype=float).ravel()
    if A.kind in ("identity", "entry-mask"):
        return A, b, None
    M = A.as_matrix()
    G = M @ M.T
    try:
        L = np.linalg.cholesky(G)
        d = np.diag(L)
        if d.min() <= 1e-6 * d.max():  # numerically singular, pivots are rounding noise
            raise np.linalg.LinAlgError
        Mw = scipy.linalg.solve_triangular(L, M, lower=True)
        bw = scipy.linalg.solve_triangular(L, b, lower=True)
    except np.linalg.LinAlgError:
        w, Q = np.linalg.eigh(G)
        keep = w > max(w[-1], 0.0) * G.shape[0] * np.finfo(float).eps
        if not np.any(keep):
            return A, b, None
        w, Q = w[keep], Q[:, keep]
        L = Q * np.sqrt(w)
        Mw = (Q.T @ M) / np.sqrt(w)[:, None]
        bw = (Q.T @ b) / np.sqrt(w)
    return dense_map(Mw, A.m, A.n), bw, L


def _stage_cap(cfg: SolverConfig, j: int, last: int):
    if cfg.stage_iters is not None:
        return cfg.stage_iters[min(j, len(cfg.stage_iters) - 1)]
    return cfg.max_inner_iters if j < last else None


def _engine(name, A: LinearMap, b, cfg: SolverConfig, *, stages, tau,
            adaptive: bool, rank, x0=None, truth=None, callback=None,
            L=None) -> SolveTrace:
    """Shared loop. `stages` lists thresholds nu (already scaled by tau if needed);
    `rank` is the fixed rank, None for full SVD, or r_max when adaptive.
    `L`, when given, maps residuals of a whitened map back to the original."""
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float).ravel()
    m, n = A.shape
    kmax = min(m, n)
    X = np.zeros((m, n)) if x0 is None else np.array(x0, dtype=float)
    truth_norm = None
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        truth_norm = float(np.linalg.norm(truth)) or 1.0

    r_max = rank
    c_s = cfg.c_s
    if c_s is None:
        rm = cfg.r_max or max_recoverable_rank(m, n, A.p) or (rank or 1)
        c_s = max(2 * rm - 2, 1)

    rec = {c: [] for c in TRACE_COLUMNS}
    resid = apply(A, X) - b
    sigma_prev = None
    grad_prev = None
    r = rank
    violations = 0
    prev_Y = None
    k = 0
    converged = False
    last = len(stages) - 1
    fixed_count = cfg.stage_iters is not None
    for j, nu in enumerate(stages):
        cap = _stage_cap(cfg, j, last)
        inner = 0
        while k < cfg.max_total_iters:
            g = adjoint(A, resid)
            grad = float(np.linalg.norm(g))
            Y = X - tau * g
            if adaptive:
                if sigma_prev is None:
                    r = r_max
                elif cfg.rank_increase == "gradient":
                    r = rank_heuristic(sigma_prev, None, cfg.eps_s, (grad_prev, grad),
                                       r_max=r_max, blowup_factor=cfg.grad_blowup_factor)
                else:
                    r = rank_heuristic(sigma_prev, None, cfg.eps_s, r_max=r_max)
                    if violations >= cfg.nonexpansive_limit:
                        r = min(r + 1, r_max)
                        violations = 0
                r = min(max(r, 1), kmax)
            grad_prev = grad
            F = shrink_factors(_truncate(Y, r, cfg, k, c_s), nu)
            X_new = F.reconstruct() if F.s.size else np.zeros((m, n))
            dX = float(np.linalg.norm(X_new - X))
            if adaptive and cfg.rank_increase == "nonexpansive" and prev_Y is not None:
                if dX > np.linalg.norm(Y - prev_Y) * (1 + 1e-12):
                    violations += 1
                prev_Y = Y
            elif adaptive and cfg.rank_increase == "nonexpansive":
                prev_Y = Y
            step = dX / max(1.0, float(np.linalg.norm(X)))
            X = X_new
            sigma_prev = F.s
            resid = apply(A, X) - b
            k += 1
            inner += 1
            rec["iter"].append(k)
            rec["mu"].append(float(nu))
            rec["rank"].append(int(r) if r is not None else max(int(F.s.size), 1))
            rec["residual"].append(float(np.linalg.norm(resid if L is None else L @ resid)))
            rec["step"].append(step)
            rec["rel_err"].append(float(np.linalg.norm(X - truth)) / truth_norm
                                  if truth is not None else float("nan"))
            if callback is not None:
                callback(k, X)
            if fixed_count:
                if inner >= cap:
                    break
                continue
            if step < cfg.xtol:
                converged = j == last
                break
            if cap is not None and inner >= cap:
                break
        if k >= cfg.max_total_iters and not (fixed_count and inner >= cap):
            break
    else:
        if fixed_count:
            converged = True
    return SolveTrace(name, X, k, converged, time.perf_counter() - t0, rec, cfg)


def _prepare(A, b, cfg: SolverConfig):
    if cfg.whiten:
        return whiten(A, b)
    return A, np.asarray(b, dtype=float).ravel(), None


def _default_mu1(A, b, cfg: SolverConfig) -> float:
    if cfg.mu_1 is not None:
        return max(cfg.mu_1, cfg.mu_bar)
    s1 = float(svd(adjoint(A, b), 1).s[0]) if np.any(b) else 0.0
    return max(cfg.eta_mu * s1, cfg.mu_bar)


def _fixed_rank(A, cfg):
    if cfg.rank is None:
        raise ValueError("fixed-rank solvers need config.rank")
    if not 1 <= cfg.rank <= min(A.shape):
        raise ValueError(f"rank must lie in [1, {min(A.shape)}]")
    return cfg.rank


def _r_max(A, cfg):
    r_max = cfg.r_max or max_recoverable_rank(A.m, A.n, A.p)
    if r_max < 1:
        raise ValueError("no recoverable rank: r(m+n-r) >= p for every r >= 1")
    return min(r_max, min(A.shape))


def fpc_solve(A: LinearMap, b, mu: float | None = None, config: SolverConfig | None = None,
              **kw) -> SolveTrace:
    """Proximal-gradient iteration for ``min mu ||X||_* + 0.5 ||A X - b||^2``.

    Uses a full SVD each step. ``tau`` outside ``(0, 2/lambda_max)`` is
    clamped to ``1.99 / lambda_max`` with a warning.
    """
    cfg = config or SolverConfig()
    mu = cfg.mu_bar if mu is None else mu
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    lam = spectral_upper_bound(A)
    tau = cfg.tau if cfg.tau is not None else (1.0 / lam if lam > 0 else 1.0)
    if lam > 0 and tau >= 2.0 / lam:
        warnings.warn(f"tau={tau:g} outside (0, 2/lambda_max={2 / lam:g}); clamping", stacklevel=2)
        tau = 1.99 / lam
    return _engine("fpc", A, b, cfg, stages=[tau * mu], tau=tau, adaptive=False,
                   rank=None, **kw)


def iht_solve(A: LinearMap, b, config: SolverConfig | None = None, **kw) -> SolveTrace:
    """Iterative hard thresholding: gradient step, then best rank-r truncation."""
    cfg = config or SolverConfig()
    tau = 1.0 if cfg.tau is None else cfg.tau
    A, b, L = _prepare(A, b, cfg)
    if cfg.rank_mode == "adaptive":
        return _engine("iht", A, b, cfg, stages=[0.0], tau=tau, adaptive=True,
                       rank=_r_max(A, cfg), L=L, **kw)
    return _engine("ihtr", A, b, cfg, stages=[0.0], tau=tau, adaptive=False,
                   rank=_fixed_rank(A, cfg), L=L, **kw)


def ihtms_solve(A: LinearMap, b, mu: float | None = None,
                config: SolverConfig | None = None, **kw) -> SolveTrace:
    """Hard thresholding with a fixed soft shrinkage `mu` (default ``mu_bar``)."""
    cfg = config or SolverConfig()
    mu = (cfg.mu if cfg.mu is not None else cfg.mu_bar) if mu is None else mu
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    tau = 1.0 if cfg.tau is None else cfg.tau
    A, b, L = _prepare(A, b, cfg)
    if cfg.rank_mode == "adaptive":
        return _engine("ihtms", A, b, cfg, stages=[mu], tau=tau, adaptive=True,
                       rank=_r_max(A, cfg), L=L, **kw)
    return _engine("ihtmsr", A, b, cfg, stages=[mu], tau=tau, adaptive=False,
                   rank=_fixed_rank(A, cfg), L=L, **kw)


def fpcar_solve(A: LinearMap, b, config: SolverConfig | None = None, **kw) -> SolveTrace:
    """Given-rank continuation: ``X = S_mu(R_r(Y))`` over a decreasing mu schedule.

    Each stage runs until the relative step drops below ``xtol`` (or the
    per-stage cap), then warm-starts the next; the run has converged once
    the step test passes at ``mu = mu_bar``.
    """
    cfg = config or SolverConfig()
    if cfg.rank_mode == "adaptive":
        return fpca_solve(A, b, cfg, **kw)
    tau = 1.0 if cfg.tau is None else cfg.tau
    A, b, L = _prepare(A, b, cfg)
    stages = mu_schedule(_default_mu1(A, b, cfg), cfg.eta_mu, cfg.mu_bar)
    return _engine("fpcar", A, b, cfg, stages=stages, tau=tau, adaptive=False,
                   rank=_fixed_rank(A, cfg), L=L, **kw)


def fpca_solve(A: LinearMap, b, config: SolverConfig | None = None, **kw) -> SolveTrace:
    """Continuation with adaptive rank and ``X = S_{tau mu}(R_r(Y))``."""
    cfg = config or SolverConfig()
    if cfg.rank_mode != "adaptive":
        cfg = replace(cfg, rank_mode="adaptive")
    tau = 1.0 if cfg.tau is None else cfg.tau
    A, b, L = _prepare(A, b, cfg)
    stages = [tau * mu for mu in mu_schedule(_default_mu1(A, b, cfg), cfg.eta_mu, cfg.mu_bar)]
    return _engine("fpca", A, b, cfg, stages=stages, tau=tau, adaptive=True,
                   rank=_r_max(A, cfg), L=L, **kw)


# solver id -> (function, rank_mode)
SOLVERS = {
    "fpc": (fpc_solve, "fixed"),
    "ihtr": (iht_solve, "fixed"),
    "iht": (iht_solve, "adaptive"),
    "ihtmsr": (ihtms_solve, "fixed"),
    "ihtms": (ihtms_solve, "adaptive"),
    "fpcar": (fpcar_solve, "fixed"),
    "fpca": (fpca_solve, "adaptive"),
}
ALIASES = {
    "iht-adaptive": "iht",
    "ihtms-adaptive": "ihtms",
    "fpcar-adaptive": "fpca",
    "fpca-adaptive": "fpca",
}
SIX_SOLVERS = ("ihtr", "iht", "ihtmsr", "ihtms", "fpcar", "fpca")


def canonical_solver(name: str) -> str:
    key = ALIASES.get(name.lower(), name.lower())
    if key not in SOLVERS:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")
    return key


def needs_rank(name: str) -> bool:
    return canonical_solver(name) in ("ihtr", "ihtmsr", "fpcar")


def solve(name: str, A: LinearMap, b, config: SolverConfig | None = None, **kw) -> SolveTrace:
    """Dispatch by solver id (``ihtr``, ``iht``, ``fpca``, ...)."""
    key = canonical_solver(name)
    fn, mode = SOLVERS[key]
    cfg = replace(config or SolverConfig(), rank_mode=mode)
    if key == "fpc":
        return fn(A, b, cfg.mu, cfg, **kw)
    return fn(A, b, config=cfg, **kw)
