import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from rankmin.bench import generate_instance
from rankmin.cli import main, write_vector
from rankmin.linalg import read_matrix, write_matrix
from test_sensing import PINNED_DELTA_LOWER


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_solve_instance_spec(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", "--solver", "fpca", "--m", "40", "--n", "40", "--p", "320",
                 "--true-rank", "2", "--seed", "1", "--out", str(out)])
    assert code == 0
    s = _summary(out)
    assert s["converged"] and s["rel_err"] < 1e-3
    assert s["config"]["xtol"] == 1e-6
    assert (out / "trace.csv").read_text().startswith("iter,mu,rank,residual,step,rel_err\n")
    assert (out / "decay.csv").exists()


def test_solve_matrix_roundtrip_bit_exact(tmp_path):
    out = tmp_path / "run"
    main(["solve", "--solver", "ihtr", "--rank", "1", "--m", "10", "--n", "10", "--p", "60",
          "--true-rank", "1", "--max-total-iters", "7", "--out", str(out)])
    X = read_matrix(out / "X.mat")
    write_matrix(tmp_path / "again.mat", X)
    assert (tmp_path / "again.mat").read_text() == (out / "X.mat").read_text()


def test_fixed_rank_solver_needs_rank(tmp_path, capsys):
    code = main(["solve", "--solver", "ihtr", "--m", "10", "--n", "10", "--p", "60",
                 "--true-rank", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "--rank" in capsys.readouterr().err


def test_non_convergence_exit_code_keeps_artifacts(tmp_path):
    out = tmp_path / "run"
    code = main(["solve", "--solver", "iht", "--m", "10", "--n", "10", "--p", "60",
                 "--true-rank", "1", "--max-total-iters", "2", "--out", str(out)])
    assert code == 3
    assert not _summary(out)["converged"] and (out / "X.mat").exists()


def test_solve_from_operator_files(tmp_path):
    inst = generate_instance(10, 10, 60, 1, seed=9)
    (tmp_path / "op.json").write_text(inst.map.to_json())
    write_vector(tmp_path / "b.txt", inst.b)
    write_matrix(tmp_path / "M.mat", inst.M)
    out = tmp_path / "run"
    code = main(["solve", "--solver", "ihtr", "--rank", "1", "--operator",
                 str(tmp_path / "op.json"), "--b", str(tmp_path / "b.txt"),
                 "--truth", str(tmp_path / "M.mat"), "--out", str(out)])
    assert code == 0 and _summary(out)["rel_err"] < 1e-3


@pytest.mark.parametrize("content", ["1 2 nan\n", "1 2 x\n", ""])
def test_bad_vector_file(tmp_path, content):
    inst = generate_instance(4, 4, 3, 1, seed=0)
    (tmp_path / "op.json").write_text(inst.map.to_json())
    (tmp_path / "b.txt").write_text(content)
    code = main(["solve", "--solver", "iht", "--operator", str(tmp_path / "op.json"),
                 "--b", str(tmp_path / "b.txt"), "--out", str(tmp_path / "o")])
    assert code == 2


def test_config_precedence(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"xtol": 1e-4, "eps-s": 0.02}))
    base = ["solve", "--solver", "ihtr", "--rank", "1", "--m", "10", "--n", "10", "--p", "60",
            "--true-rank", "1", "--config", str(tmp_path / "cfg.json")]
    main(base + ["--out", str(tmp_path / "a")])
    cfg = _summary(tmp_path / "a")["config"]
    assert (cfg["xtol"], cfg["eps_s"], cfg["mu_bar"]) == (1e-4, 0.02, 1e-8)
    main(base + ["--xtol", "1e-5", "--out", str(tmp_path / "b")])
    assert _summary(tmp_path / "b")["config"]["xtol"] == 1e-5


def test_config_rejects_unknown_field(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"xtoll": 1.0}))
    assert main(["solve", "--solver", "iht", "--m", "5", "--n", "5", "--p", "10",
                 "--true-rank", "1", "--config", str(tmp_path / "cfg.json")]) == 2


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 2
    assert main(["solve", "--solver", "nope", "--m", "5", "--n", "5", "--p", "10",
                 "--true-rank", "1"]) == 2
    assert main(["solve", "--solver", "iht", "--tau", "-1", "--m", "5", "--n", "5", "--p", "10",
                 "--true-rank", "1"]) == 2


def test_bench_cells_and_empty(tmp_path, capsys):
    (tmp_path / "cells.json").write_text("[[10, 10, 60, 1]]")
    code = main(["bench", "--cells", str(tmp_path / "cells.json"), "--solver", "ihtr",
                 "--instances", "2", "--out", str(tmp_path / "o")])
    assert code == 0
    csv_text = (tmp_path / "o" / "bench.csv").read_text()
    assert csv_text.splitlines()[1].startswith("ihtr,10,10,60,1,")
    (tmp_path / "empty.json").write_text("[]")
    assert main(["bench", "--cells", str(tmp_path / "empty.json")]) == 2
    (tmp_path / "bad.json").write_text("[[1, 2]]")
    assert main(["bench", "--cells", str(tmp_path / "bad.json")]) == 2


def test_rip_identity(capsys):
    assert main(["rip", "--identity", "--m", "5", "--n", "5", "--r", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["delta_lower"] < 1e-12 and rep["margins"]["violations"] == 0


def test_rip_gaussian_pinned(capsys):
    assert main(["rip", "--gaussian", "--m", "20", "--n", "20", "--p", "240", "--r", "2",
                 "--trials", "500", "--seed", "7", "--prop-trials", "5"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["delta_lower"] == pytest.approx(PINNED_DELTA_LOWER, abs=1e-12)


def test_svd_command(tmp_path, capsys):
    rng = np.random.default_rng(0)
    A = (rng.standard_normal((30, 5)) * [9, 7, 5, 3, 2]) @ rng.standard_normal((5, 20))
    write_matrix(tmp_path / "A.mat", A)
    assert main(["svd", "--cols", "15", "--target-rank", "5", "--seed", "3",
                 "--input", str(tmp_path / "A.mat")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["sigmaC"]) == 5
    excess = rep["error_vs_exact"]["excess_over_norm_sq"]
    assert -1e-12 <= excess <= 1.0
    assert main(["svd", "--cols", "25", "--target-rank", "5", "--input",
                 str(tmp_path / "A.mat")]) == 2


def test_console_script():
    exe = shutil.which("rankmin")
    cmd = [exe] if exe else [sys.executable, "-m", "rankmin.cli"]
    res = subprocess.run(cmd + ["rip", "--identity", "--m", "3", "--n", "3"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and '"delta_lower"' in res.stdout
