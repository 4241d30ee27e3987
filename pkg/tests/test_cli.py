import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bayeslingam import datagen
from bayeslingam.cli import build_config, load_config, main, UsageError
from bayeslingam.datagen import SyntheticConfig, generate_synthetic
from bayeslingam.graph import Dag
from bayeslingam.score import standardize


def run(*argv):
    return main([str(a) for a in argv])


def write_data(path, X, names=None):
    datagen.write_csv(standardize(X, names), path)
    return path


def test_simulate(tmp_path):
    out = tmp_path / "d.csv"
    assert run("simulate", "--n", 2, "--q", 1, "--N", 100, "--seed", 7, "--out", out) == 0
    X, names = datagen.read_csv(out)
    assert X.shape == (100, 2)
    truth = json.loads((tmp_path / "d.truth.json").read_text())
    assert truth["dag"] in ("2", "2;1->2", "2;2->1") and truth["seed"] == 7 and truth["q"] == 1.0
    first = out.read_bytes(), (tmp_path / "d.truth.json").read_bytes()
    assert run("simulate", "--n", 2, "--q", 1, "--N", 100, "--seed", 7, "--out", out) == 0
    assert (out.read_bytes(), (tmp_path / "d.truth.json").read_bytes()) == first


def test_simulate_fixed_dag(tmp_path):
    out = tmp_path / "d.csv"
    assert run("simulate", "--n", 2, "--N", 50, "--dag", "2;1->2", "--out", out, "--truth", tmp_path / "t.json") == 0
    assert json.loads((tmp_path / "t.json").read_text())["dag"] == "2;1->2"


def test_simulate_usage_errors(tmp_path, capsys):
    assert run("simulate", "--n", 2, "--dag", "3;1->2", "--out", tmp_path / "x.csv") == 2
    assert run("simulate", "--n", 2, "--dag", "2;1->2;2->1", "--out", tmp_path / "x.csv") == 2
    assert run("simulate", "--n", 2) == 2
    with pytest.raises(SystemExit) as exc:
        run("simulate", "--q", "abc")
    assert exc.value.code == 2


def test_posterior_round_trip_from_simulate(tmp_path):
    out = tmp_path / "d.csv"
    run("simulate", "--n", 2, "--q", 2.7, "--N", 400, "--seed", 3, "--dag", "2;2->1", "--out", out)
    assert run("posterior", out, "--out", tmp_path / "p.json") == 0
    post = json.loads((tmp_path / "p.json").read_text())
    assert post["dags"][0]["dag"] == "2;2->1"
    assert sum(d["prob"] for d in post["dags"]) == pytest.approx(1.0, abs=1e-9)
    assert sum(c["prob"] for c in post["classes"]) == pytest.approx(1.0, abs=1e-9)
    assert post["mode"] == "exhaustive" and "log_normalizer" in post


def test_posterior_independent_data(tmp_path):
    p = write_data(tmp_path / "i.csv", np.random.default_rng(0).laplace(size=(500, 2)))
    assert run("posterior", p, "--out", tmp_path / "p.json") == 0
    assert json.loads((tmp_path / "p.json").read_text())["dags"][0]["dag"] == "2"


def test_posterior_greedy_and_jobs(tmp_path):
    case = generate_synthetic(SyntheticConfig(n=3, q=2.0, N=200, seed=1))
    p = tmp_path / "d.csv"
    datagen.write_csv(case.data, p)
    assert run("posterior", p, "--search", "greedy", "--out", tmp_path / "a.json") == 0
    assert run("posterior", p, "--search", "greedy", "--jobs", 2, "--out", tmp_path / "b.json") == 0
    a = (tmp_path / "a.json").read_bytes()
    assert a == (tmp_path / "b.json").read_bytes()
    obj = json.loads(a)
    assert obj["mode"] == "greedy" and obj["path"][0]["dag"] == "3"


def test_score_counts(tmp_path):
    p = write_data(tmp_path / "d.csv", np.random.default_rng(1).laplace(size=(60, 2)))
    assert run("score", p, "--out", tmp_path / "f.json") == 0
    fams = json.loads((tmp_path / "f.json").read_text())["families"]
    assert len(fams) == 4
    assert {"node", "parents", "log_ml", "dim", "converged", "restarts_used", "hessian_shift"} <= set(fams[0])
    assert [f["node"] for f in fams] == [1, 1, 2, 2]


@pytest.mark.slow
def test_score_six_columns(tmp_path):
    p = write_data(tmp_path / "d.csv", np.random.default_rng(1).laplace(size=(40, 6)))
    assert run("score", p, "--out", tmp_path / "f.json") == 0
    assert len(json.loads((tmp_path / "f.json").read_text())["families"]) == 192


def test_exhaustive_refuses_seven_columns(tmp_path, capsys):
    p = write_data(tmp_path / "d.csv", np.random.default_rng(1).laplace(size=(30, 7)))
    assert run("posterior", p) == 2
    assert "greedy" in capsys.readouterr().err
    assert run("score", p) == 2


def test_missing_and_bad_files(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("posterior", missing) == 2
    assert str(missing) in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,oops\n")
    assert run("score", bad) == 2
    const = tmp_path / "c.csv"
    const.write_text("a,b\n1,2\n1,3\n1,5\n")
    assert run("score", const) == 2
    assert "'a'" in capsys.readouterr().err


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nfamily = mog\nmog_components = 3\nrestarts = 2\nsearch = greedy\nseed = 5\n"
                   "alpha_prior_sd = 2.0\n")
    rc = load_config(cfg)
    assert rc.density.family == "mog" and rc.density.mog_components == 3
    assert rc.score.restarts == 2 and rc.search == "greedy" and rc.score.seed == 5
    assert rc.density.alpha_prior == (0.0, 2.0)
    rc = load_config(cfg, {"seed": 9, "search": "exhaustive"})
    assert rc.score.seed == 9 and rc.search == "exhaustive"


def test_config_errors(tmp_path):
    with pytest.raises(UsageError, match="unknown config key"):
        build_config({"restart": "3"})
    with pytest.raises(UsageError):
        build_config({"restarts": "0"})
    with pytest.raises(UsageError):
        build_config({"gtol": "fast"})
    with pytest.raises(UsageError):
        build_config({"structure_prior": "sparse"})
    p = write_data(tmp_path / "d.csv", np.random.default_rng(1).laplace(size=(30, 2)))
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("restarts = 0\n")
    assert run("score", p, "--config", cfg) == 2
    assert run("score", p, "--config", tmp_path / "none.cfg") == 2


def test_resimulate(tmp_path):
    src = tmp_path / "s.csv"
    run("simulate", "--n", 2, "--N", 500, "--seed", 1, "--dag", "2;1->2", "--q", 2, "--out", src)
    out = tmp_path / "r.csv"
    assert run("resimulate", src, "--dag", "2", "--seed", 3, "--out", out) == 0
    X, _ = datagen.read_csv(src)
    Y, _ = datagen.read_csv(out)
    for k in range(2):
        np.testing.assert_allclose(np.sort(Y[:, k]), np.sort(X[:, k]), atol=1e-12)
    assert run("resimulate", src, "--dag", "2;1->2", "--N-out", 100, "--seed", 3, "--out", out) == 0
    first = out.read_bytes()
    assert len(first.decode().splitlines()) == 101
    assert run("resimulate", src, "--dag", "2;1->2", "--N-out", 100, "--seed", 3, "--out", out) == 0
    assert out.read_bytes() == first
    assert json.loads((tmp_path / "r.truth.json").read_text())["dag"] == "2;1->2"
    assert run("resimulate", src, "--dag", "2;1->2", "--N-out", 900, "--out", out) == 2


def test_resimulate_collinear_is_a_computation_error(tmp_path, capsys):
    x = np.random.default_rng(0).normal(size=40)
    p = tmp_path / "c.csv"
    datagen.write_csv(standardize(np.column_stack([x, -x, np.random.default_rng(1).normal(size=40)])), p)
    assert run("resimulate", p, "--dag", "3;1->3;2->3", "--out", tmp_path / "o.csv") == 1
    assert "collinear" in capsys.readouterr().err


def test_benchmark(tmp_path):
    out, cal = tmp_path / "b.csv", tmp_path / "c.csv"
    args = ("benchmark", "--q", 0.5, 2.0, "--N", 30, "--reps", 3, "--seed", 1, "--no-timing",
            "--methods", "gl-laplace,mog-mcmc", "--out", out, "--calibration", cal)
    assert run(*args) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["q", "N", "rep", "method", "binary", "class", "log", "quadratic", "runtime_s", "error"]
    assert len(rows) == 1 + 2 * 3 * 2
    assert all(r[-1] for r in rows[1:] if r[3] == "mog-mcmc")  # recorded, run completed
    first = out.read_bytes()
    cal_rows = list(csv.reader(open(cal)))
    assert cal_rows[0] == ["bin_lo", "bin_hi", "mean_pred", "freq", "count"]
    assert sum(int(r[4]) for r in cal_rows[1:]) == 3 * 2 * 3
    assert run(*args) == 0
    assert out.read_bytes() == first


def test_benchmark_usage_errors(tmp_path):
    assert run("benchmark", "--q", -1, "--N", 30, "--reps", 1, "--out", tmp_path / "b.csv") == 2
    assert run("benchmark", "--methods", "gl-vb", "--out", tmp_path / "b.csv") == 2
    with pytest.raises(SystemExit) as exc:
        run("benchmark", "--q", 1)
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "d.csv"
    r = subprocess.run([sys.executable, "-m", "bayeslingam", "simulate", "--N", "20", "--out", str(out)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and out.exists()
    r = subprocess.run([sys.executable, "-m", "bayeslingam", "score", str(tmp_path / "missing.csv")],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "missing.csv" in r.stderr
