"""Random recovery instances, metrics and multi-instance campaigns."""

from __future__ import annotations

import csv
import io
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import hard_threshold
from .sensing import LinearMap, apply, gaussian_map
from .solvers import (SolverConfig, SolveTrace, canonical_solver, max_recoverable_rank,
                      solve)

__all__ = [
    "RECOVERY_TOL",
    "ProblemInstance",
    "generate_instance",
    "near_lowrank_instance",
    "metrics",
    "rel_err",
    "recovered",
    "instance_seed",
    "CellResult",
    "BenchReport",
    "run_campaign",
    "wrong_rank_study",
    "PRESETS",
    "decay_curve_csv",
]

log = logging.getLogger(__name__)

RECOVERY_TOL = 1e-3

PRESETS = {
    "desk": [(40, 40, 320, r) for r in (1, 2, 3)],
    "paper": [(60, 60, 720, r) for r in (1, 2, 3, 4, 5)],
}


@dataclass
class ProblemInstance:
    m: int
    n: int
    p: int
    r_true: int
    map: LinearMap = field(repr=False)
    b: np.ndarray = field(repr=False)
    M: np.ndarray | None = field(default=None, repr=False)
    noise_norm: float = 0.0
    seed: int | None = None


def metrics(m: int, n: int, p: int, r: int | None = None) -> dict:
    """Sampling ratio p/(mn), degrees-of-freedom ratio r(m+n-r)/p and r_max."""
    if min(m, n, p) <= 0:
        raise ValueError("m, n, p must be positive")
    out = {"SR": p / (m * n), "r_max": max_recoverable_rank(m, n, p)}
    if r is not None:
        out["FR"] = r * (m + n - r) / p
    return out


def rel_err(X, M) -> float:
    M = np.asarray(M, dtype=float)
    nM = np.linalg.norm(M)
    if nM == 0:
        raise ValueError("relative error is undefined for a zero reference")
    return float(np.linalg.norm(np.asarray(X) - M) / nM)


def recovered(X, M) -> bool:
    return rel_err(X, M) < RECOVERY_TOL


def _noise(p, noise_norm, seed):
    if noise_norm == 0:
        return np.zeros(p)
    u = np.random.default_rng([seed, 2]).standard_normal(p)
    return noise_norm * u / np.linalg.norm(u)


def generate_instance(m: int, n: int, p: int, r: int, seed: int,
                      noise_norm: float = 0.0) -> ProblemInstance:
    """``M = M_L M_R^T`` with N(0,1) factors, Gaussian map, ``b = A vec(M) + e``.

    The map is ``gaussian_map(m, n, p, seed)``; the factors come from
    ``default_rng([seed, 1])`` and the noise direction from
    ``default_rng([seed, 2])``, scaled to ``||e|| = noise_norm``.
    """
    if not 1 <= r <= min(m, n):
        raise ValueError(f"r must lie in [1, {min(m, n)}]")
    if not 1 <= p <= m * n:
        raise ValueError("p must lie in [1, m*n]")
    if noise_norm < 0:
        raise ValueError("noise_norm must be nonnegative")
    A = gaussian_map(m, n, p, seed)
    rng = np.random.default_rng([seed, 1])
    M = rng.standard_normal((m, r)) @ rng.standard_normal((n, r)).T
    b = apply(A, M) + _noise(p, noise_norm, seed)
    return ProblemInstance(m, n, p, r, A, b, M, float(noise_norm), seed)


def near_lowrank_instance(m: int, n: int, r: int, decay: float, seed: int,
                          p: int | None = None, sr: float = 0.4) -> ProblemInstance:
    """Approximately rank-r truth with a geometric spectral tail.

    Singular values are 1 for the first `r` and ``decay**(i - r)`` after,
    with Haar-random singular vectors; ``decay = 0`` gives rank exactly r.
    """
    if not 0 <= decay < 1:
        raise ValueError("decay must lie in [0, 1)")
    k = min(m, n)
    if not 1 <= r <= k:
        raise ValueError(f"r must lie in [1, {k}]")
    p = int(round(sr * m * n)) if p is None else p
    rng = np.random.default_rng([seed, 1])
    U, _ = np.linalg.qr(rng.standard_normal((m, k)))
    V, _ = np.linalg.qr(rng.standard_normal((n, k)))
    i = np.arange(1, k + 1)
    s = np.where(i <= r, 1.0, decay ** np.maximum(i - r, 0).astype(float))
    M = (U * s) @ V.T
    A = gaussian_map(m, n, p, seed)
    return ProblemInstance(m, n, p, r, A, apply(A, M), M, 0.0, seed)


def truncation_floor(M, r: int) -> float:
    """Relative error of the best rank-r approximation of `M`."""
    return rel_err(hard_threshold(M, r), M)


def instance_seed(master_seed: int, m: int, n: int, p: int, r: int, index: int) -> int:
    """Stable per-instance seed: first word of ``SeedSequence([master, m, n, p, r, index])``."""
    return int(np.random.SeedSequence([master_seed, m, n, p, r, index]).generate_state(1)[0])


@dataclass
class CellResult:
    solver: str
    m: int
    n: int
    p: int
    r: int
    SR: float
    FR: float
    NS: int
    instances: int
    avg_time_s: float | None
    avg_rel_err: float | None
    rel_errs: list = field(default_factory=list, repr=False)
    times: list = field(default_factory=list, repr=False)
    label: str | None = None


CSV_HEADER = ("solver", "m", "n", "p", "r", "SR", "FR", "NS", "avg_time_s", "avg_rel_err")


@dataclass
class BenchReport:
    rows: list
    config: dict
    master_seed: int

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [c for c in CSV_HEADER if timing or c != "avg_time_s"]
        w.writerow(cols)
        for row in self.rows:
            vals = {
                "solver": row.label or row.solver, "m": row.m, "n": row.n, "p": row.p,
                "r": row.r, "SR": f"{row.SR:.4g}", "FR": f"{row.FR:.4g}", "NS": row.NS,
                "avg_time_s": "" if row.avg_time_s is None else f"{row.avg_time_s:.2f}",
                "avg_rel_err": "" if row.avg_rel_err is None else f"{row.avg_rel_err:.6e}",
            }
            w.writerow([vals[c] for c in cols])
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'solver':>10} {'m':>4} {'n':>4} {'p':>5} {'r':>3} {'FR':>5} | {'NS':>3} {'time':>8} {'rel.err.':>9}"
        lines = [head, "-" * len(head)]
        for row in self.rows:
            t = "---" if row.avg_time_s is None else f"{row.avg_time_s:.2f}"
            e = "---" if row.avg_rel_err is None else f"{row.avg_rel_err:.2e}"
            lines.append(f"{row.label or row.solver:>10} {row.m:>4} {row.n:>4} {row.p:>5} "
                         f"{row.r:>3} {row.FR:>5.2f} | {row.NS:>3} {t:>8} {e:>9}")
        return "\n".join(lines)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LRR_THREADS", "1")))
    except ValueError:
        return 1


def _run_one(solver, cfg, m, n, p, r, seed, noise_norm):
    inst = generate_instance(m, n, p, r, seed, noise_norm)
    try:
        tr = solve(solver, inst.map, inst.b, cfg)
    except Exception as exc:  # a failed solve counts as not recovered
        log.warning("solve %s failed on seed %d: %s", solver, seed, exc)
        return float("inf"), 0.0
    return rel_err(tr.X, inst.M), tr.wall_time


def _aggregate(solver, m, n, p, r, errs, times, label=None) -> CellResult:
    met = metrics(m, n, p, r)
    ok = [i for i, e in enumerate(errs) if e < RECOVERY_TOL]
    return CellResult(
        solver, m, n, p, r, met["SR"], met["FR"], len(ok), len(errs),
        float(np.mean([times[i] for i in ok])) if ok else None,
        float(np.mean([errs[i] for i in ok])) if ok else None,
        list(errs), list(times), label)


def run_campaign(cells, instances_per_cell: int = 10, solver: str = "fpca",
                 config: SolverConfig | None = None, master_seed: int = 0,
                 noise_norm: float = 0.0, rank_given=None) -> BenchReport:
    """Solve `instances_per_cell` random problems per ``(m, n, p, r)`` cell.

    Fixed-rank solvers are given the true rank unless `rank_given` is set.
    Rows are emitted in cell order regardless of execution order.
    """
    cells = [tuple(int(v) for v in c) for c in cells]
    if not cells:
        raise ValueError("empty cell list")
    if instances_per_cell < 1:
        raise ValueError("instances_per_cell must be positive")
    solver = canonical_solver(solver)
    base = config or SolverConfig()
    jobs = []
    for ci, (m, n, p, r) in enumerate(cells):
        fr = r * (m + n - r) / p
        if fr > 1:
            warnings.warn(f"cell {(m, n, p, r)} has FR={fr:.2f} > 1: recovery is impossible",
                          stacklevel=2)
        cfg = replace(base, rank=rank_given or r)
        for i in range(instances_per_cell):
            jobs.append((ci, i, cfg, m, n, p, r, instance_seed(master_seed, m, n, p, r, i)))

    def work(job):
        ci, i, cfg, m, n, p, r, seed = job
        return ci, i, _run_one(solver, cfg, m, n, p, r, seed, noise_norm)

    nthreads = _threads()
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as ex:
            results = list(ex.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    results.sort(key=lambda t: (t[0], t[1]))

    rows = []
    for ci, (m, n, p, r) in enumerate(cells):
        res = [t[2] for t in results if t[0] == ci]
        rows.append(_aggregate(solver, m, n, p, r, [e for e, _ in res], [t for _, t in res]))
    return BenchReport(rows, {"solver": solver, **base.to_dict()}, master_seed)


def wrong_rank_study(true_r: int = 3, given_ranks=(1, 2, 3, 4, 5, 6),
                     solvers=("ihtr", "ihtmsr", "fpcar"), config: SolverConfig | None = None,
                     m: int = 40, n: int = 40, p: int = 320, instances: int = 10,
                     master_seed: int = 0, adaptive=("iht", "ihtms", "fpca")) -> BenchReport:
    """Fixed-rank solvers run with each given rank on rank-`true_r` problems,
    followed by the adaptive solvers on the same instances."""
    rows = []
    base = config or SolverConfig()
    for s in solvers:
        for g in given_ranks:
            rep = run_campaign([(m, n, p, true_r)], instances, s, base, master_seed,
                               rank_given=g)
            row = rep.rows[0]
            row.label = f"{s}@{g}"
            rows.append(row)
    for s in adaptive:
        rows.extend(run_campaign([(m, n, p, true_r)], instances, s, base, master_seed).rows)
    return BenchReport(rows, {"true_r": true_r, **base.to_dict()}, master_seed)


def decay_curve_csv(trace: SolveTrace, truth_norm: float) -> str:
    """Per-iteration ``iter, log10_abs_err`` rows for decay plots."""
    err = trace.error_curve(truth_norm)
    lines = ["iter,log10_abs_err"]
    for k, e in zip(trace.column("iter"), err):
        lines.append(f"{k},{np.log10(e) if e > 0 else float('-inf'):.17g}")
    return "\n".join(lines) + "\n"
