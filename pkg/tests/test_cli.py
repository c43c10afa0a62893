import json
import math

import numpy as np
import pytest

from recombklv.cli import main
from recombklv.cubature import degree3_formula, dump_formula
from recombklv.measure import ParticleMeasure, read_particles_csv, write_particles_csv


@pytest.fixture
def cloud(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "in.csv"
    write_particles_csv(ParticleMeasure(rng.normal(size=(300, 2)), rng.random(300) + 0.1), path)
    return path


@pytest.mark.parametrize("algorithm", ["1", "2"])
@pytest.mark.parametrize("center", ["com", "origin"])
def test_reduce(cloud, tmp_path, capsys, algorithm, center):
    out = tmp_path / "out.csv"
    code = main(["reduce", str(cloud), "-o", str(out), "--degree", "2",
                 "--center", center, "--algorithm", algorithm])
    assert code == 0
    mu, nu = read_particles_csv(cloud), read_particles_csv(out)
    assert len(nu) <= 6
    assert nu.weights.sum() == pytest.approx(mu.weights.sum(), rel=1e-12)
    report = json.loads((tmp_path / "out.report.json").read_text())
    assert set(report) == {"input_support", "output_support", "procedure_a_calls",
                           "elimination_steps", "max_moment_error"}
    assert report["output_support"] == len(nu)
    assert "300 ->" in capsys.readouterr().out


def test_verify_cubature(tmp_path, capsys):
    path = tmp_path / "f.json"
    dump_formula(degree3_formula(2), path)
    assert main(["verify-cubature", str(path)]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_verify_cubature_bad_file(tmp_path, capsys):
    path = tmp_path / "f.json"
    path.write_text('{"d": 1, "m": 3, "weights": [-1.0], "paths": [[[1.0, [0.0]]]]}')
    assert main(["verify-cubature", str(path)]) == 2
    assert "error" in capsys.readouterr().err


def write_config(tmp_path, **kw):
    cfg = {"model": "gbm", "model_params": {"sigma": 0.2}, "payoff": "call",
           "payoff_params": {"K": 1.0}, "x0": [1.0], "k": 6}
    cfg.update(kw)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


def test_run(tmp_path, capsys):
    cfg = write_config(tmp_path)
    diag, summary = tmp_path / "diag.csv", tmp_path / "summary.json"
    assert main(["run", "--config", str(cfg), "--diagnostics", str(diag), "--summary", str(summary)]) == 0
    lines = diag.read_text().splitlines()
    assert lines[0] == "step,s_j,u_j,particles_before,particles_after,patches,wall_ms"
    assert len(lines) == 7
    data = json.loads(summary.read_text())
    assert data["abs_error"] < 0.02
    assert data["steps"] == 6


def test_run_bad_config(tmp_path, capsys):
    cfg = write_config(tmp_path, k=0)
    assert main(["run", "--config", str(cfg)]) == 2


def test_convergence(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "conv.csv"
    assert main(["convergence", "--config", str(cfg), "--k", "2,4", "--output", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3
    summary = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert summary["slope_fit"] < 0


def test_cost(capsys):
    assert main(["cost", "--D", "10", "--delta", "1", "--N", "2", "--r", "2", "--nhat", "1000"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(100 * 6**4 * math.log2(1000) + 6000, rel=1e-12)
