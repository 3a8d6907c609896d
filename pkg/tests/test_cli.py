from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from helioseis import __version__, cli


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, doc in {
        "const": {"R": 0, "speed": {"kind": "constant", "value": 1}},
        "shell": {"R": 0.2, "speed": {"kind": "constant", "value": 1}},
        "lin": {"R": 0.1, "speed": {"kind": "polynomial", "coeffs": [2, -1]}},
        "bad": {"R": 0, "speed": {"kind": "polynomial", "coeffs": [0.5, 0, 2]}},
    }.items():
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        out[name] = str(p)
    out["dir"] = tmp_path
    return out


def run(argv, capsys):
    code = cli.main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_model_validate(files, capsys):
    code, out, _ = run(["model", "validate", files["const"]], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["helioseis"] == __version__
    assert doc["data"]["herglotz_margin"] == 1.0
    code, _, err = run(["model", "validate", files["bad"]], capsys)
    assert code == 2 and "Herglotz" in err
    code, _, err = run(["model", "validate", str(files["dir"] / "missing.json")], capsys)
    assert code == 2


def test_lsp_list_example(files, capsys):
    code, out, _ = run(["lsp", "list", files["const"], "--n-max", "5"], capsys)
    assert code == 0
    orbits = json.loads(out)["data"]
    pairs = {(o["m"], o["n"]): o for o in orbits}
    assert (1, 3) in pairs and (2, 5) in pairs
    assert pairs[(2, 5)]["T_sharp"] == pytest.approx(10 * np.sin(2 * np.pi / 5), rel=1e-12)


def test_lsp_list_tol_and_check(files, capsys):
    code, out, _ = run(["lsp", "list", files["shell"], "--kind", "both", "--n-max", "6",
                        "--tol", "0.05"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert {o["kind"] for o in doc["data"]} == {"diving", "reflecting"}
    assert "near_degenerate" in doc
    code, out, _ = run(["lsp", "check", files["const"], "--grid", "128", "--n-max", "6"], capsys)
    assert code == 0
    assert json.loads(out)["data"]["conjugate_cells"] == []


def test_csv_header_and_precision(files, capsys):
    code, out, _ = run(["rays", "table", files["const"], "--r-grid", "5"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == f"# helioseis {__version__}"
    cfg = json.loads(lines[1][len("# config: "):])
    assert cfg["r_grid"] == 5 and cfg["model_doc"]["R"] == 0.0
    assert lines[2] == "r_tip,p,R_star,alpha,L,alpha_prime"
    row = [float(v) for v in lines[3].split(",")]
    assert row[3] == pytest.approx(np.arccos(row[0]), rel=1e-13)
    # 17 significant digits survive a round trip
    assert len(lines[3].split(",")[3].replace(".", "").lstrip("0")) >= 16


def test_rays_path(files, capsys):
    code, out, _ = run(["rays", "path", files["const"], "--tip", "0.5", "--samples", "5"], capsys)
    assert code == 0
    last = out.strip().splitlines()[-1].split(",")
    assert float(last[2]) == pytest.approx(np.pi / 3, rel=1e-9)
    code, _, _ = run(["rays", "path", files["const"], "--tip", "1.5"], capsys)
    assert code == 2


def test_modes_solve(files, capsys):
    code, out, _ = run(["modes", "solve", files["shell"], "--regime", "reflecting",
                        "--n", "0..2", "--k", "0"], capsys)
    assert code == 0
    rows = [r.split(",") for r in out.strip().splitlines()[3:]]
    assert [float(r[3]) for r in rows] == pytest.approx([(n + 1) * np.pi / 0.8 for n in range(3)])
    code, _, err = run(["modes", "solve", files["shell"], "--regime", "reflecting",
                        "--n", "0", "--k", "1000"], capsys)
    assert code == 3 and "numerical" in err
    code, _, _ = run(["modes", "solve", files["shell"], "--regime", "reflecting",
                      "--n", "3..1", "--k", "0"], capsys)
    assert code == 2


def test_abel_commands(files, capsys, tmp_path):
    fwd = tmp_path / "g.csv"
    code, _, _ = run(["abel", "forward", files["const"], "--f", "1", "--grid", "50",
                      "--out", str(fwd)], capsys)
    assert code == 0
    _, header, cols = cli.read_csv(fwd)
    assert header == ["r", "g"]
    np.testing.assert_allclose(cols["g"], np.sqrt(1 - cols["r"] ** 2), atol=1e-12)
    code, out, _ = run(["abel", "invert", files["const"], "--f", str(fwd)], capsys)
    assert code == 0
    f = [float(line.split(",")[1]) for line in out.strip().splitlines()[3:-1]]
    np.testing.assert_allclose(f, 1.0, atol=1e-8)


def test_rigidity_check(files, capsys):
    code, out, _ = run(["rigidity", "check", files["lin"], "--h", "0,0,1", "--n-max", "5"], capsys)
    assert code == 0
    doc = json.loads(out)
    row = doc["data"][0]
    assert set(row) == {"orbit", "dl_dtau", "pbrt_value", "residual"}
    assert doc["max_residual"] < 1e-8
    code, out, _ = run(["rigidity", "check", files["lin"], "--h", "0,0,1", "--n-max", "5",
                        "--unweighted"], capsys)
    assert code == 0 and json.loads(out)["max_residual"] > 1e-2


def test_trace_pipeline_and_mismatch(files, capsys, tmp_path):
    tr = tmp_path / "t.csv"
    orb = tmp_path / "l.json"
    args = ["trace", "synth", files["shell"], "--l-max", "40", "--omega-max", "60",
            "--window", "25", "--t-max", "6", "--t-min", "1", "--dt", "0.01"]
    assert run(args + ["--out", str(tr)], capsys)[0] == 0
    code, out, _ = run(args, capsys)
    assert out == tr.read_text()            # byte-identical reruns
    assert run(["lsp", "list", files["shell"], "--kind", "both", "--n-max", "6",
                "--out", str(orb)], capsys)[0] == 0
    code, out, _ = run(["trace", "peaks", str(tr)], capsys)
    assert code == 0 and out.splitlines()[2] == "t,height"
    code, out, _ = run(["trace", "match", files["shell"], str(tr), str(orb)], capsys)
    assert code == 0
    assert {"matched", "missing", "unexplained", "amplitudes"} <= set(json.loads(out)["data"])
    code, _, err = run(["trace", "match", files["const"], str(tr), str(orb)], capsys)
    assert code == 2 and "different model" in err
    code, _, err = run(["trace", "match", files["shell"], str(orb), str(orb)], capsys)
    assert code == 2


def test_limits_and_usage(files, capsys):
    code, _, err = run(["trace", "synth", files["shell"], "--l-max", "5001", "--omega-max", "10",
                        "--window", "5", "--t-max", "1"], capsys)
    assert code == 2 and "5000" in err
    assert run(["rays", "table", files["const"], "--r-grid", str(2 ** 20 + 1)], capsys)[0] == 2
    assert run(["lsp", "list", files["const"], "--n-max", "5", "--tol", "-1"], capsys)[0] == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["bogus"])
    assert info.value.code == 2
    capsys.readouterr()


def test_unwritable_output(files, capsys):
    code, _, err = run(["model", "validate", files["const"], "--out", "/nonexistent/dir/x.json"],
                       capsys)
    assert code == 2 and "cannot write" in err


def test_model_normalize(tmp_path, capsys):
    s = np.linspace(0.5, 1.0, 33)
    metric = tmp_path / "metric.json"
    metric.write_text(json.dumps({"r": s.tolist(), "a": [4.0] * 33, "C": [1.0] * 33}))
    out = tmp_path / "norm.json"
    assert run(["model", "normalize", str(metric), "--out", str(out)], capsys)[0] == 0
    doc = json.loads(out.read_text())
    assert doc["data"]["R"] == pytest.approx(0.25, abs=1e-12)
    # the output is itself a loadable model file
    assert run(["model", "validate", str(out)], capsys)[0] == 0


def test_entry_point_with_thread_cap(files):
    env = dict(os.environ, HELIOSEIS_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "helioseis.cli", "--version"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0 and __version__ in proc.stdout
    proc = subprocess.run(
        [sys.executable, "-c", "import helioseis.cli, os; print(os.environ['OMP_NUM_THREADS'])"],
        capture_output=True, text=True, env=env)
    assert proc.stdout.strip() == "1"
