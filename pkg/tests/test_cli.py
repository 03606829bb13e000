import csv
import io
import json
import subprocess
import sys

import pytest

from affine_perc.cli import main, parse_p_grid
from affine_perc.errors import DomainError


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_analytic_json(capsys):
    code, out, err = run(["analytic", "--n", "2", "--m", "3", "--p", "0.5"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["extinction_t"] == pytest.approx(0.017321, abs=1e-6)
    assert rep["p_A"] is None
    assert err.startswith("config ")


@pytest.mark.parametrize("argv", [
    ["analytic", "--n", "2", "--m", "3", "--p", "1.5"],
    ["analytic", "--n", "3", "--m", "3", "--p", "0.5"],
    ["estimate", "--n", "2", "--m", "3", "--p", "0.5", "--level", "2", "--trials", "0"],
    ["estimate", "--n", "2", "--m", "3", "--p", "0.5", "--level", "2", "--bogus"],
    ["frobnicate"],
    ["sweep", "--n", "2", "--m", "3", "--level", "2", "--p-grid", "0.9:0.1:0.1"],
])
def test_invalid_arguments_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert "error" in err


def test_seed_is_echoed(capsys):
    code, out, err = run(["survival", "--n", "2", "--m", "3", "--p", "0.5", "--level", "4",
                          "--trials", "50"], capsys)
    assert code == 0
    seed = json.loads(err.split("config ", 1)[1].splitlines()[0])["seed"]
    assert json.loads(out)["master_seed"] == seed
    code, out2, _ = run(["survival", "--n", "2", "--m", "3", "--p", "0.5", "--level", "4",
                         "--trials", "50", "--seed", str(seed)], capsys)
    assert json.loads(out2) == json.loads(out)


def test_sweep_csv_monotone(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, _, _ = run(["sweep", "--n", "2", "--m", "3", "--level", "3", "--p-grid", "0.5:1.0:0.1",
                      "--trials", "300", "--seed", "9", "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert [float(r["p"]) for r in rows] == [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    hats = [float(r["p_hat"]) for r in rows]
    assert hats == sorted(hats) and hats[-1] == 1.0


def test_threads_do_not_change_results(capsys, monkeypatch):
    base = ["estimate", "--n", "2", "--m", "3", "--p", "0.7", "--level", "3",
            "--trials", "400", "--seed", "5"]
    results = []
    for t in ("1", "3"):
        code, out, _ = run(base + ["--threads", t], capsys)
        assert code == 0
        results.append(json.loads(out)["hits"])
    monkeypatch.setenv("AFFINE_PERC_THREADS", "2")
    code, out, _ = run(base, capsys)
    results.append(json.loads(out)["hits"])
    assert len(set(results)) == 1


def test_generate_then_render(tmp_path, capsys):
    js = tmp_path / "r.json"
    assert run(["generate", "--n", "3", "--m", "4", "--p", "0.7", "--level", "3", "--seed", "1",
                "--out", str(js)], capsys)[0] == 0
    doc = json.loads(js.read_text())
    assert doc["depth"] == 3 and doc["seed"] == 1
    svg = tmp_path / "r.svg"
    assert run(["render", "--input", str(js), "--level", "3", "--out", str(svg)], capsys)[0] == 0
    assert svg.read_text().count("<rect") == len(doc["levels"][2]) + 1
    pgm = tmp_path / "r.pgm"
    code, _, _ = run(["render", "--n", "3", "--m", "4", "--p", "0.7", "--level", "2", "--seed", "1",
                      "--format", "pgm", "--width", "9", "--height", "16", "--out", str(pgm)], capsys)
    assert code == 0 and pgm.read_bytes().startswith(b"P5\n9 16\n255\n")
    code, _, _ = run(["render", "--input", str(js), "--level", "3", "--format", "pgm",
                      "--width", "8", "--out", str(tmp_path / "x.pgm")], capsys)
    assert code == 2


def test_render_missing_input_is_runtime_error(tmp_path, capsys):
    code, _, _ = run(["render", "--input", str(tmp_path / "none.json"), "--level", "1",
                      "--out", str(tmp_path / "x.svg")], capsys)
    assert code == 1


def test_census_critical_compare(capsys):
    code, out, _ = run(["census", "--n", "2", "--m", "3", "--p", "0.8", "--level", "3",
                        "--seed", "2"], capsys)
    assert code == 0 and json.loads(out)["level"] == 3
    code, out, _ = run(["critical", "--n", "2", "--m", "3", "--level", "1", "--trials", "200",
                        "--seed", "2", "--tol", "0.05"], capsys)
    br = json.loads(out)
    assert code == 0 and br["hi"] - br["lo"] <= 0.05 and br["lo"] <= br["hi"]
    code, out, _ = run(["compare-hv", "--n", "2", "--m", "3", "--p", "0.7", "--level", "2",
                        "--trials", "300", "--seed", "2"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["both"] + rep["h_only"] + rep["v_only"] + rep["neither"] == 300


def test_p_grid_parsing():
    assert parse_p_grid("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
    assert parse_p_grid("0.2,0.5") == [0.2, 0.5]
    with pytest.raises(DomainError):
        parse_p_grid("0.1:0.3:0")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "affine_perc", "analytic", "--n", "3", "--m", "4",
                           "--p", "0.9"], capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["p_A"] == pytest.approx(0.9959847, abs=1e-6)
