"""Acceptance gate.

Each test records one PASS/FAIL line in ``conftest.ACCEPTANCE``; the lines
are printed in the terminal summary. Criteria known to be out of reach are
marked ``xfail(strict=True)`` so an unexpected pass is reported.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import best_rank, jacobi_svd
from rankmin.approx_svd import SamplerParams, linear_time_svd, reconstruct
from rankmin.bench import (generate_instance, instance_seed, near_lowrank_instance, rel_err,
                           run_campaign, truncation_floor, wrong_rank_study)
from rankmin.linalg import hard_threshold, soft_shrink, svd
from rankmin.sensing import (adjoint, apply, check_propositions, dense_map, estimate_rip,
                             gaussian_map, identity_map, mask_map, orthonormalize, project,
                             svd_basis)
from rankmin.solvers import SIX_SOLVERS, SolverConfig, solve

DESK = [(40, 40, 320, r) for r in (1, 2, 3)]


def _record(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)
    return ok


def _desk_campaign():
    start = time.perf_counter()
    reports = {s: run_campaign(DESK, 10, s, master_seed=0) for s in SIX_SOLVERS}
    return reports, time.perf_counter() - start


@pytest.fixture(scope="session")
def desk():
    return _desk_campaign()


def _csv(reports):
    return "".join(reports[s].to_csv(timing=False) for s in SIX_SOLVERS)


# -- 1 ---------------------------------------------------------------------


def test_criterion_1_desk_recovery(desk):
    reports, _ = desk
    cells = [(s, row.r, row.NS, row.avg_rel_err) for s in SIX_SOLVERS for row in reports[s].rows]
    bad = [c for c in cells if c[2] != 10]
    worst = max(c[3] for c in cells if c[3] is not None)
    _record("1", not bad, f"18 cells, NS=10 in {18 - len(bad)}; worst avg rel.err {worst:.2e}")
    assert not bad, bad


@pytest.mark.xfail(strict=True, reason="single-core dense matvecs: about 250 s for 1080 solves")
def test_criterion_1_runtime(desk):
    _, elapsed = desk
    assert _record("1 runtime", elapsed < 60, f"desk campaign {elapsed:.1f} s (target < 60 s)")


# -- 2 ---------------------------------------------------------------------


def test_criterion_2_large_cell_spot_check():
    start = time.perf_counter()
    row = run_campaign([(60, 60, 720, 2)], 10, "fpcar", master_seed=0).rows[0]
    elapsed = time.perf_counter() - start
    ok = row.NS == 10 and row.avg_rel_err <= 1e-4 and elapsed < 300
    _record("2", ok, f"(60,60,720,2) fpcar NS={row.NS}, avg rel.err {row.avg_rel_err:.2e}, "
                     f"{elapsed:.1f} s")
    assert ok


# -- 3 ---------------------------------------------------------------------


def test_criterion_3_wrong_rank(desk):
    reports, _ = desk
    wrong = wrong_rank_study(3, (1, 2), master_seed=0, adaptive=())
    ns = {row.label: row.NS for row in wrong.rows}
    # given r = 3 and the adaptive runs are the r = 3 desk cells
    for s in SIX_SOLVERS:
        ns[f"{s}@3" if s in ("ihtr", "ihtmsr", "fpcar") else s] = reports[s].rows[2].NS
    ok = (all(v == 0 for k, v in ns.items() if k.endswith(("@1", "@2")))
          and all(v == 10 for k, v in ns.items() if not k.endswith(("@1", "@2"))))
    _record("3", ok, " ".join(f"{k}={v}" for k, v in sorted(ns.items())))
    assert ok, ns


# -- 4 ---------------------------------------------------------------------


def _decay(name):
    inst = generate_instance(40, 40, 320, 2, instance_seed(0, 40, 40, 320, 2, 0))
    cfg = SolverConfig(rank=2) if name in ("ihtr", "ihtmsr", "fpcar") else SolverConfig()
    tr = solve(name, inst.map, inst.b, cfg, truth=inst.M)
    err = tr.error_curve(np.linalg.norm(inst.M))[1:20]   # iterations 2..20
    ks = np.arange(2, 2 + len(err))
    slope = np.polyfit(ks, np.log10(err), 1)[0]
    return slope, float(np.median(err[1:] / err[:-1]))


@pytest.mark.xfail(strict=True, reason="restricted spectrum at FR=0.49 caps the tau=1 "
                                       "contraction near 0.95 per step")
def test_criterion_4_geometric_decay():
    stats = {s: _decay(s) for s in SIX_SOLVERS}
    ok = all(sl <= -0.05 and c <= 0.9 for sl, c in stats.values())
    _record("4", ok, " ".join(f"{s}:slope={sl:.3f},ratio={c:.3f}" for s, (sl, c) in stats.items()))
    assert ok


# -- 5 and 6 ---------------------------------------------------------------


@pytest.fixture(scope="module")
def noisy_runs():
    mu = 1e-6
    out = {}
    for zeta in (1e-4, 1e-3):
        rows = []
        for i in range(10):
            inst = generate_instance(40, 40, 480, 2, instance_seed(0, 40, 40, 480, 2, i), zeta)
            x_iht = solve("ihtr", inst.map, inst.b, SolverConfig(rank=2)).X
            x_ms = solve("ihtmsr", inst.map, inst.b, SolverConfig(rank=2, mu=mu)).X
            rows.append((np.linalg.norm(x_iht - inst.M), np.linalg.norm(x_ms - inst.M)))
        out[zeta] = rows
    return out, mu


def test_criterion_5_noise_floor(noisy_runs):
    runs, _ = noisy_runs
    delta = estimate_rip(generate_instance(40, 40, 480, 2, instance_seed(0, 40, 40, 480, 2, 0)).map,
                         6, trials=20, seed=0).delta_lower
    hits = {z: sum(e <= 10 * z for e, _ in rows) for z, rows in runs.items()}
    worst = {z: max(e for e, _ in rows) / z for z, rows in runs.items()}
    ok = all(h >= 9 for h in hits.values())
    _record("5", ok, ", ".join(f"|e|={z:g}: {hits[z]}/10, worst {worst[z]:.2f}|e|" for z in runs)
            + f"; delta_6 lower estimate {delta:.2f} (no exclusions applied)")
    assert ok


def test_criterion_6_ihtms_mu_floor(noisy_runs):
    runs, mu = noisy_runs
    slack = 5 * mu * np.sqrt(40)
    hits = {z: sum(ms <= iht + slack for iht, ms in rows) for z, rows in runs.items()}
    ok = all(h >= 9 for h in hits.values())
    _record("6", ok, ", ".join(f"|e|={z:g}: {hits[z]}/10" for z in runs)
            + f" within IHT error + {slack:.1e}")
    assert ok


# -- 7 ---------------------------------------------------------------------


def _operator_suite():
    rng = np.random.default_rng(7)
    fails = []
    maps = [gaussian_map(6, 5, 20, 0), identity_map(4, 4), mask_map(5, 5, 12, 1)]
    for A in maps:
        for _ in range(20):
            X, y = rng.standard_normal(A.shape), rng.standard_normal(A.p)
            if abs(apply(A, X) @ y - np.vdot(X, adjoint(A, y))) > 1e-10 * max(
                    1.0, np.linalg.norm(X) * np.linalg.norm(y)):
                fails.append("adjoint")
    for _ in range(200):
        m, n = rng.integers(2, 8, size=2)
        X, Y = rng.standard_normal((2, m, n)) * rng.uniform(0.1, 5)
        nu = rng.uniform(0, 2)
        r = int(rng.integers(1, min(m, n) + 1))
        if np.linalg.norm(soft_shrink(X, nu) - soft_shrink(Y, nu)) > np.linalg.norm(X - Y) + 1e-12:
            fails.append("nonexpansive")
        if np.linalg.norm(soft_shrink(Y, nu) - Y) > nu * np.sqrt(min(m, n)) + 1e-12:
            fails.append("shrink bound")
        s = svd(Y).s
        if r < len(s) and s[r - 1] - s[r] < 1e-6:
            continue
        if np.linalg.norm(soft_shrink(hard_threshold(Y, r), nu)
                          - hard_threshold(soft_shrink(Y, nu), r)) > 1e-8:
            fails.append("commute")
        Z = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        tail = np.sqrt(np.sum(jacobi_svd(Y)[1][r:] ** 2))
        err = np.linalg.norm(Y - hard_threshold(Y, r))
        if abs(err - tail) > 1e-8 * max(1.0, tail) or err > np.linalg.norm(Y - Z) + 1e-12:
            fails.append("eckart-young")
    for _ in range(100):
        m, n = rng.integers(3, 7, size=2)
        r = int(rng.integers(1, min(m, n)))
        Y = rng.standard_normal((m, n))
        X = best_rank(Y, r)
        Xr = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        B = orthonormalize(np.concatenate([svd_basis(X, r), svd_basis(Xr, r)]))
        if (np.linalg.norm(project(B, X) - project(B, Y))
                > np.linalg.norm(project(B, Xr) - project(B, Y)) + 1e-10):
            fails.append("lemma")
    for A, r in [(gaussian_map(4, 4, 400, 11), 2), (gaussian_map(20, 20, 240, 7), 2),
                 (identity_map(5, 4), 3)]:
        if check_propositions(A, r, trials=200, seed=0)["violations"]:
            fails.append("propositions")
    if estimate_rip(identity_map(5, 5), 2, trials=50, seed=0).delta_lower > 1e-12:
        fails.append("rip identity")
    if estimate_rip(dense_map(np.zeros((4, 9)), 3, 3), 1, trials=10, seed=0).delta_lower != 1.0:
        fails.append("rip zero")
    return fails


def test_criterion_7_operator_properties():
    fails = _operator_suite()
    _record("7", not fails, "all property checks hold" if not fails
            else f"failures: {sorted(set(fails))}")
    assert not fails


# -- 8 ---------------------------------------------------------------------


def test_criterion_8_linear_time_svd():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((12, 9))
    sig = max(np.max(np.abs(res.sigma - jacobi_svd(res.C)[1][:res.k_eff]))
              for res in (linear_time_svd(A, SamplerParams(6, 4, seed=s)) for s in range(10)))
    B = (rng.standard_normal((30, 5)) * [10, 6, 4, 2, 1]) @ rng.standard_normal((5, 24))
    B += 0.1 * rng.standard_normal(B.shape)
    k = 3
    med = [np.median([np.linalg.norm(B - reconstruct(linear_time_svd(B, SamplerParams(c, k, seed=s)),
                                                     B)) for s in range(20)])
           for c in (k, 2 * k, 4 * k, 24)]
    R = np.outer(rng.standard_normal(10), rng.standard_normal(7))
    rank1 = max(np.linalg.norm(reconstruct(linear_time_svd(R, SamplerParams(7, 1, seed=s)), R) - R)
                for s in range(5)) / np.linalg.norm(R)
    monotone = all(b <= a for a, b in zip(med, med[1:]))
    ok = sig <= 1e-8 and monotone and rank1 <= 1e-6
    _record("8", ok, f"sigma(C) gap {sig:.1e}; median errors "
                     + ",".join(f"{v:.3f}" for v in med) + f"; rank-1 rel {rank1:.1e}")
    assert ok


# -- 9 ---------------------------------------------------------------------


def test_criterion_9_determinism(desk):
    reports, _ = desk
    again, _ = _desk_campaign()
    first, second = _csv(reports).encode(), _csv(again).encode()
    _record("9", first == second, f"two desk runs, {len(first)} CSV bytes each, "
                                  f"{'identical' if first == second else 'different'}")
    assert first == second


# -- substitute for the video experiment ------------------------------------


def test_near_lowrank_substitute():
    inst = near_lowrank_instance(200, 20, 5, 0.5, seed=0)
    floor = truncation_floor(inst.M, 5)
    ratios = {s: rel_err(solve(s, inst.map, inst.b, SolverConfig(rank=5, xtol=2e-3)).X, inst.M)
              / floor for s in ("ihtr", "fpcar")}
    ok = all(v <= 3 for v in ratios.values())
    _record("substitute", ok, "near-low-rank 200x20 r=5: error / truncation floor "
            + ", ".join(f"{s}={v:.2f}" for s, v in ratios.items()))
    assert ok
