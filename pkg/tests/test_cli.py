import json
import subprocess
import sys

import numpy as np
import pytest

from optdes.cli import main


@pytest.fixture
def three_point(tmp_path):
    path = tmp_path / "design.csv"
    path.write_text("-1\n0\n1\n")
    return path


def test_run_finds_optimum(tmp_path, capsys):
    out = tmp_path / "run.json"
    code = main(["run", "--criterion", "D", "--factors", "1", "--points", "3", "--swarm-size", "50",
                 "--topology", "local", "--seed", "7", "--out", str(out)])
    assert code == 0
    rec = json.loads(out.read_text())
    assert float(rec["best_value"]) == pytest.approx(6.75, abs=1e-6)
    assert rec["function_evaluations"] == 50 * (rec["iterations"] + 1)
    assert "best design" in capsys.readouterr().out


def test_run_is_reproducible(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["run", "-K", "2", "-N", "7", "--criterion", "I", "--seed", "11", "--out", str(p)]) == 0
    a, b = (json.loads(p.read_text()) for p in paths)
    a.pop("wall_time_seconds"), b.pop("wall_time_seconds")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


@pytest.mark.parametrize(
    "extra",
    [
        ["--factors", "0", "--points", "3"],
        ["--factors", "1", "--points", "3", "--topology", "ring"],
        ["--factors", "1", "--points", "3", "--criterion", "A"],
        ["--factors", "1", "--points", "3", "--swarm-size", "0"],
        ["--factors", "1", "--points", "0"],
    ],
)
def test_run_validation_errors(extra, tmp_path):
    out = tmp_path / "never.json"
    assert main(["run", *extra, "--out", str(out)]) == 1
    assert not out.exists()


def test_usage_errors_exit_with_one():
    for argv in (["run", "--factors", "1"], ["nope"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1


def test_singular_run_exits_two(tmp_path):
    assert main(["run", "-K", "2", "-N", "3", "--seed", "1", "--max-iter", "5"]) == 2


def test_eval_both(three_point, capsys):
    assert main(["eval", "--design", str(three_point), "--factors", "1", "--criterion", "both"]) == 0
    lines = dict(line.split(": ") for line in capsys.readouterr().out.strip().splitlines())
    assert float(lines["D"]) == pytest.approx(6.75, abs=1e-12)
    assert float(lines["I"]) == pytest.approx(2.4, abs=1e-12)


def test_eval_reference(three_point, capsys):
    assert main(["eval", "--design", str(three_point), "-K", "1", "--criterion", "D", "--reference", "6.75"]) == 0
    assert "relative efficiency: 100%" in capsys.readouterr().out


def test_eval_catalog(three_point, tmp_path, capsys):
    cat = tmp_path / "cat.json"
    cat.write_text(json.dumps({"1-3-I": {"value": 3.0}}))
    assert main(["eval", "--design", str(three_point), "-K", "1", "--criterion", "I", "--catalog", str(cat)]) == 0
    assert "I relative efficiency: 125%" in capsys.readouterr().out


def test_eval_singular(tmp_path, capsys):
    path = tmp_path / "zeros.csv"
    path.write_text("0\n0\n0\n")
    assert main(["eval", "--design", str(path), "-K", "1"]) == 2
    assert "singular" in capsys.readouterr().out


@pytest.mark.parametrize("text, K", [("1.5\n0\n", 1), ("a\n", 1), ("0,0\n1,1\n", 1), ("", 1)])
def test_eval_bad_input(tmp_path, text, K):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    assert main(["eval", "--design", str(path), "-K", str(K)]) == 1


def test_eval_missing_file(tmp_path):
    assert main(["eval", "--design", str(tmp_path / "absent.csv"), "-K", "1"]) == 1


def test_moment_json(capsys):
    assert main(["moment", "--factors", "1", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["V"] == 2.0 and data["terms"] == ["1", "x1", "x1^2"]
    np.testing.assert_allclose(data["W"], [[2, 0, 2 / 3], [0, 2 / 3, 0], [2 / 3, 0, 2 / 5]], atol=1e-15)


def test_moment_table(capsys):
    assert main(["moment", "-K", "2"]) == 0
    out = capsys.readouterr().out
    assert "V = 4" in out and "x1*x2" in out
    row = next(line for line in out.splitlines() if line.startswith("1 "))
    assert row.split()[1] == "4"


def test_moment_out_of_range():
    assert main(["moment", "-K", "7"]) == 1
    assert main(["moment", "-K", "0"]) == 1


def test_bench_paper_grid_one_replicate(tmp_path, capsys):
    jl, cs = tmp_path / "r.jsonl", tmp_path / "s.csv"
    code = main(["bench", "--paper-grid", "--replicates", "1", "--swarm-sizes", "50", "--variants", "local",
                 "--criteria", "D", "--max-iter", "40", "--out-jsonl", str(jl), "--out-csv", str(cs)])
    assert code == 0
    assert len(jl.read_text().splitlines()) == 21
    assert len(cs.read_text().splitlines()) == 22
    assert len(capsys.readouterr().out.strip().splitlines()) == 21


def test_bench_validation(tmp_path):
    jl = tmp_path / "r.jsonl"
    assert main(["bench", "--paper-grid", "--replicates", "0", "--out-jsonl", str(jl)]) == 1
    assert main(["bench", "--scenarios", str(tmp_path / "missing.json"), "--out-jsonl", str(jl)]) == 1
    assert main(["bench", "--paper-grid", "--catalog", str(tmp_path / "missing.json"), "--out-jsonl", str(jl)]) == 1
    assert main(["bench", "--out-jsonl", str(jl)]) == 1
    assert not jl.exists()


def test_bench_scenarios_file_and_env_workers(tmp_path, monkeypatch):
    sc = tmp_path / "sc.json"
    sc.write_text(json.dumps([{"K": 1, "N": 4, "criterion": "I", "swarm_size": 10, "variant": "global"}]))
    monkeypatch.setenv("OPTDES_WORKERS", "1")
    jl, cs = tmp_path / "r.jsonl", tmp_path / "s.csv"
    assert main(["bench", "--scenarios", str(sc), "--replicates", "2", "--out-jsonl", str(jl),
                 "--out-csv", str(cs)]) == 0
    recs = [json.loads(line) for line in jl.read_text().splitlines()]
    assert [r["replicate"] for r in recs] == [0, 1]


def test_module_entry_point(three_point):
    proc = subprocess.run([sys.executable, "-m", "optdes", "eval", "--design", str(three_point), "-K", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "D: 6.75" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "optdes", "run", "-K", "1"], capture_output=True, text=True)
    assert proc.returncode == 1
