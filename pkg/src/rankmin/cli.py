"""Command-line front end: ``rankmin {solve,bench,rip,svd,wrong-rank}``.

Exit codes: 0 ok, 2 usage or input error, 3 solver did not converge
(artifacts are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import typing
from pathlib import Path

import numpy as np

from .approx_svd import SamplerParams, linear_time_svd, reconstruct
from .bench import (PRESETS, decay_curve_csv, generate_instance, metrics, rel_err,
                    run_campaign, wrong_rank_study)
from .linalg import MatrixFormatError, read_matrix, svd, write_matrix
from .sensing import (LinearMap, check_propositions, estimate_rip, gaussian_map,
                      identity_map)
from .solvers import SIX_SOLVERS, SolverConfig, canonical_solver, needs_rank, solve

EXIT_OK, EXIT_USAGE, EXIT_NOCONV = 0, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# solver config: CLI flag > JSON file > defaults

_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}
_HINTS = typing.get_type_hints(SolverConfig)


def _field_type(name):
    hint = _HINTS[name]
    args = [a for a in typing.get_args(hint) if a is not type(None)] or [hint]
    return args[0]


def _add_config_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver config (overrides --config)")
    g.add_argument("--config", type=Path, help="JSON file of SolverConfig fields")
    for name in _FIELDS:
        flag = "--" + name.replace("_", "-")
        if name == "seed":
            continue
        t = _field_type(name)
        if t is bool:
            g.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        elif name == "stage_iters":
            g.add_argument(flag, dest=name, default=None,
                           help="comma-separated iteration counts per stage")
        else:
            g.add_argument(flag, dest=name, type=t if t in (int, float) else str, default=None)


def _coerce(name, value):
    if name == "stage_iters" and value is not None:
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        return tuple(int(v) for v in value)
    return value


def build_config(args, seed=None) -> SolverConfig:
    values = {}
    if getattr(args, "config", None) is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in data.items():
            key = k.replace("-", "_")
            if key not in _FIELDS:
                raise UsageError(f"unknown config field {k!r}")
            values[key] = v
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None and name != "seed":
            values[name] = v
    if seed is not None and "seed" not in values:
        values["seed"] = seed
    try:
        values = {k: _coerce(k, v) for k, v in values.items()}
        return SolverConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------


def read_vector(path) -> np.ndarray:
    try:
        toks = Path(path).read_text().split()
        b = np.array([float(t) for t in toks])
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read vector {path}: {exc}") from exc
    if b.size == 0 or not np.all(np.isfinite(b)):
        raise UsageError(f"vector {path} is empty or has NaN/Inf entries")
    return b


def write_vector(path, b):
    Path(path).write_text("".join(f"{v:.17g}\n" for v in np.asarray(b, float).ravel()))


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_solve(args) -> int:
    solver = canonical_solver(args.solver)
    cfg = build_config(args, args.seed)
    if needs_rank(solver) and cfg.rank is None:
        raise UsageError(f"solver {solver} needs --rank")
    truth = None
    if args.operator is not None:
        if args.b is None:
            raise UsageError("--operator needs --b")
        try:
            A = LinearMap.from_json(Path(args.operator).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read operator {args.operator}: {exc}") from exc
        b = read_vector(args.b)
        if b.size != A.p:
            raise UsageError(f"b has {b.size} entries, operator expects p={A.p}")
        if args.truth is not None:
            try:
                truth = read_matrix(args.truth)
            except (OSError, MatrixFormatError) as exc:
                raise UsageError(str(exc)) from exc
    else:
        need = {"--m": args.m, "--n": args.n, "--p": args.p, "--true-rank": args.true_rank}
        missing = [k for k, v in need.items() if v is None]
        if missing:
            raise UsageError("give --operator/--b or an instance spec; missing "
                             + ", ".join(missing))
        try:
            inst = generate_instance(args.m, args.n, args.p, args.true_rank,
                                     args.seed, args.noise)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        A, b, truth = inst.map, inst.b, inst.M
    try:
        tr = solve(solver, A, b, cfg, truth=truth)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "X.mat", tr.X)
    (out / "trace.csv").write_text(tr.to_csv())
    summary = {
        "solver": solver,
        "iterations": tr.iterations,
        "converged": tr.converged,
        "final_rank": tr.records["rank"][-1] if tr.iterations else 0,
        "residual": tr.records["residual"][-1] if tr.iterations else float(np.linalg.norm(b)),
        "wall_time_s": round(tr.wall_time, 2),
        "config": tr.config.to_dict(),
    }
    if truth is not None:
        summary["rel_err"] = rel_err(tr.X, truth)
        (out / "decay.csv").write_text(decay_curve_csv(tr, float(np.linalg.norm(truth))))
    _dump(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("solver", "iterations", "converged")
                      if k in summary} | ({"rel_err": summary["rel_err"]}
                                          if "rel_err" in summary else {})))
    return EXIT_OK if tr.converged else EXIT_NOCONV


def _load_cells(args):
    if args.cells is not None:
        try:
            cells = json.loads(Path(args.cells).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read cells {args.cells}: {exc}") from exc
        if not isinstance(cells, list) or not all(
                isinstance(c, list) and len(c) == 4 for c in cells):
            raise UsageError("cells must be a JSON list of [m, n, p, r]")
    else:
        cells = PRESETS[args.preset]
    if not cells:
        raise UsageError("empty cell list")
    return cells


def _emit_report(rep, out, stem, timing=True):
    text = rep.to_text()
    print(text)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(rep.to_csv(timing=timing))
        (out / f"{stem}.txt").write_text(text + "\n")


def cmd_bench(args) -> int:
    cells = _load_cells(args)
    cfg = build_config(args, args.master_seed)
    names = SIX_SOLVERS if args.solver == "all" else [canonical_solver(args.solver)]
    reports = [run_campaign(cells, args.instances, s, cfg, args.master_seed, args.noise)
               for s in names]
    rep = reports[0]
    for other in reports[1:]:
        rep.rows.extend(other.rows)
    rep.config["solver"] = args.solver
    _emit_report(rep, args.out, "bench", timing=not args.no_timing)
    return EXIT_OK


def cmd_wrong_rank(args) -> int:
    cfg = build_config(args, args.master_seed)
    ranks = [int(v) for v in args.ranks.split(",")]
    rep = wrong_rank_study(args.true_rank, ranks, config=cfg, m=args.m, n=args.n, p=args.p,
                           instances=args.instances, master_seed=args.master_seed)
    _emit_report(rep, args.out, "wrong_rank", timing=not args.no_timing)
    return EXIT_OK


def cmd_rip(args) -> int:
    if args.identity:
        A = identity_map(args.m, args.n)
    elif args.gaussian:
        if args.p is None:
            raise UsageError("--gaussian needs --p")
        A = gaussian_map(args.m, args.n, args.p, args.seed)
    else:
        try:
            A = LinearMap.from_json(Path(args.operator).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read operator {args.operator}: {exc}") from exc
    try:
        est = estimate_rip(A, args.r, args.trials, args.seed)
        margins = check_propositions(A, args.r, args.prop_trials, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = {
        "m": A.m, "n": A.n, "p": A.p, "r": args.r, "trials": args.trials, "seed": args.seed,
        "delta_lower": est.delta_lower, "delta_upper": est.delta_upper,
        "margins": margins,
    }
    if A.p:
        report.update(metrics(A.m, A.n, A.p, args.r))
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out is not None:
        _dump(args.out, report)
    return EXIT_OK


def cmd_svd(args) -> int:
    if args.input is not None:
        try:
            A = read_matrix(args.input)
        except (OSError, MatrixFormatError) as exc:
            raise UsageError(str(exc)) from exc
    else:
        if args.m is None or args.n is None:
            raise UsageError("give --input or --m/--n for a random matrix")
        A = np.random.default_rng(args.seed).standard_normal((args.m, args.n))
    k = args.target_rank
    try:
        approx = linear_time_svd(A, SamplerParams(args.cols, k, seed=args.seed))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    exact = svd(A)
    fro2 = float(np.sum(A * A))
    best2 = float(np.sum(exact.s[k:] ** 2))
    approx2 = float(np.sum((A - reconstruct(approx, A)) ** 2)) if not approx.degenerate else fro2
    report = {
        "shape": list(A.shape), "cols": args.cols, "target_rank": k, "seed": args.seed,
        "k_eff": approx.k_eff,
        "sigmaC": approx.sigma.tolist(),
        "sigma_exact": exact.s[:k].tolist(),
        "error_vs_exact": {
            "frobenius_sq": approx2,
            "best_rank_k_frobenius_sq": best2,
            "excess_over_norm_sq": (approx2 - best2) / fro2 if fro2 else 0.0,
        },
    }
    print(json.dumps(report, indent=2, sort_keys=True))
    if args.out is not None:
        _dump(args.out, report)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rankmin", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    solver_help = "fpc, ihtr, iht, ihtmsr, ihtms, fpcar, fpca (or *-adaptive)"

    s = sub.add_parser("solve", help="solve one problem")
    s.add_argument("--solver", required=True, help=solver_help)
    s.add_argument("--operator", type=Path, help="operator JSON header")
    s.add_argument("--b", type=Path, help="measurement vector, one value per line")
    s.add_argument("--truth", type=Path, help="true matrix for rel_err (matrix text format)")
    s.add_argument("--m", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--true-rank", type=int)
    s.add_argument("--noise", type=float, default=0.0, help="noise norm ||e||_2")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="rankmin_out")
    _add_config_flags(s)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="multi-instance recovery campaign")
    grp = b.add_mutually_exclusive_group()
    grp.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    grp.add_argument("--cells", type=Path, help="JSON list of [m, n, p, r]")
    b.add_argument("--solver", default="all", help=solver_help + ", or all")
    b.add_argument("--instances", type=int, default=10)
    b.add_argument("--master-seed", type=int, default=0)
    b.add_argument("--noise", type=float, default=0.0)
    b.add_argument("--no-timing", action="store_true", help="drop the timing column")
    b.add_argument("--out")
    _add_config_flags(b)
    b.set_defaults(func=cmd_bench)

    w = sub.add_parser("wrong-rank", help="fixed-rank solvers given the wrong rank")
    w.add_argument("--true-rank", type=int, default=3)
    w.add_argument("--ranks", default="1,2,3,4,5,6")
    w.add_argument("--m", type=int, default=40)
    w.add_argument("--n", type=int, default=40)
    w.add_argument("--p", type=int, default=320)
    w.add_argument("--instances", type=int, default=10)
    w.add_argument("--master-seed", type=int, default=0)
    w.add_argument("--no-timing", action="store_true")
    w.add_argument("--out")
    _add_config_flags(w)
    w.set_defaults(func=cmd_wrong_rank)

    r = sub.add_parser("rip", help="estimate restricted isometry constants")
    grp = r.add_mutually_exclusive_group(required=True)
    grp.add_argument("--identity", action="store_true")
    grp.add_argument("--gaussian", action="store_true")
    grp.add_argument("--operator", type=Path)
    r.add_argument("--m", type=int, default=10)
    r.add_argument("--n", type=int, default=10)
    r.add_argument("--p", type=int)
    r.add_argument("--r", type=int, default=1)
    r.add_argument("--trials", type=int, default=100)
    r.add_argument("--prop-trials", type=int, default=50,
                   help="trials for the proposition margin checks")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_rip)

    v = sub.add_parser("svd", help="column-sampling approximate SVD")
    v.add_argument("--input", type=Path, help="matrix text file")
    v.add_argument("--m", type=int)
    v.add_argument("--n", type=int)
    v.add_argument("--cols", type=int, required=True)
    v.add_argument("--target-rank", type=int, required=True)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_svd)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"rankmin {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
