"""End-to-end command tests: exit codes, artifacts, reproducibility."""

import json
import math

import numpy as np
import pytest

from mbridge import DiscreteMeasure, measure_to_json
from mbridge.cli import main


def write_measure(path, atoms, weights):
    doc = measure_to_json(DiscreteMeasure(atoms, weights))
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


@pytest.fixture
def study_files(tmp_path):
    mu = write_measure(tmp_path / "mu.json",
                       [[-1.0], [0.0], [1.0]], [0.40, 0.46, 0.14])
    nu = write_measure(tmp_path / "nu.json",
                       [[-2.0], [0.0], [2.0]], [0.43, 0.27, 0.30])
    return mu, nu


def test_solve_writes_artifacts_and_exits_zero(tmp_path, study_files, capsys):
    mu, nu = study_files
    out = tmp_path / "run"
    code = main(["solve", "--mu", mu, "--nu", nu, "--out", str(out)])
    assert code == 0
    report = json.loads((out / "solve_report.json").read_text())
    assert report["schema"] == "mbridge/1"
    assert report["converged"] is True
    assert report["duality_gap"] < 1e-8
    assert report["identity_residual"] < 1e-10
    man = report["manifest"]
    assert man["command"] == "solve"
    assert man["inputs"] == {"mu": mu, "nu": nu}
    assert "wall" not in json.dumps(man)
    csv_lines = (out / "coupling.csv").read_text().strip().split("\n")
    assert csv_lines[0] == "nu_0,nu_1,nu_2"
    assert len(csv_lines) == 4
    matrix = np.array([[float(v) for v in line.split(",")]
                       for line in csv_lines[1:]])
    assert abs(matrix.sum() - 1.0) < 1e-12
    err = capsys.readouterr().err
    assert "wall-clock" in err


def test_identical_runs_produce_byte_identical_artifacts(tmp_path, study_files):
    mu, nu = study_files
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--mu", mu, "--nu", nu, "--out", str(out1)]) == 0
    assert main(["solve", "--mu", mu, "--nu", nu, "--out", str(out2)]) == 0
    for name in ("solve_report.json", "coupling.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_certify_value_chain_passes(tmp_path, study_files):
    mu, nu = study_files
    out = tmp_path / "run"
    code = main(["certify", "--mu", mu, "--nu", nu, "--out", str(out)])
    assert code == 0
    report = json.loads((out / "certify_report.json").read_text())
    assert report["all_pass"] is True
    assert all(report["checks"].values())
    assert report["variational_gap"] < 1e-7
    assert max(report["schroedinger_residuals"]) < 1e-10


def test_infeasible_instance_exits_three(tmp_path, capsys):
    mu = write_measure(tmp_path / "mu.json", [[-1.0], [1.0]], [0.5, 0.5])
    nu = write_measure(tmp_path / "nu.json", [[0.0]], [1.0])
    code = main(["solve", "--mu", mu, "--nu", nu,
                 "--out", str(tmp_path / "run")])
    assert code == 3
    assert "infeasible" in capsys.readouterr().err


def test_malformed_json_exits_one_with_single_diagnostic(tmp_path, capsys):
    bad = tmp_path / "mu.json"
    bad.write_text("{not json", encoding="utf-8")
    nu = write_measure(tmp_path / "nu.json", [[0.0]], [1.0])
    code = main(["solve", "--mu", str(bad), "--nu", nu,
                 "--out", str(tmp_path / "run")])
    assert code == 1
    err_lines = [line for line in capsys.readouterr().err.split("\n")
                 if line and "wall-clock" not in line]
    assert len(err_lines) == 1
    assert "mu.json" in err_lines[0]


def test_unknown_flag_exits_one(study_files, capsys):
    mu, nu = study_files
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--mu", mu, "--nu", nu, "--frobnicate"])
    assert exc.value.code == 1
    assert "error" in capsys.readouterr().err


def test_missing_required_flag_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["threepoint", "--p1", "0.4"])
    assert exc.value.code == 1


def test_gaussian_measure_rejected_by_solve(tmp_path, capsys):
    gau = tmp_path / "mu.json"
    gau.write_text(json.dumps({"gaussian": {"mean": [0.0],
                                            "covariance": [[1.0]]}}),
                   encoding="utf-8")
    nu = write_measure(tmp_path / "nu.json", [[0.0]], [1.0])
    code = main(["solve", "--mu", str(gau), "--nu", nu,
                 "--out", str(tmp_path / "run")])
    assert code == 1
    assert "discrete" in capsys.readouterr().err


def test_gaussian_command_unit_increment(tmp_path):
    out = tmp_path / "run"
    code = main(["gaussian", "--sigma0", "1", "--sigma1", "2",
                 "--out", str(out)])
    assert code == 0
    report = json.loads((out / "gaussian_report.json").read_text())
    assert abs(report["entropy_value"] - 0.5 * math.log(2.0)) < 1e-15
    assert report["energy_closed_form"] == 0.0
    assert report["max_schedule_discrepancy"] < 1e-12
    lines = (out / "schedules.csv").read_text().strip().split("\n")
    assert lines[0].startswith("t,sigma_00,tau_0")
    assert len(lines) == 102
    # unit increment: constant volatility schedule
    sig = np.array([float(line.split(",")[1]) for line in lines[1:]])
    assert np.max(np.abs(sig - 1.0)) == 0.0


def test_threepoint_command_artifacts(tmp_path):
    out = tmp_path / "run"
    code = main(["threepoint", "--p1", "0.40", "--q1", "0.46",
                 "--p2", "0.43", "--q2", "0.27", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "threepoint_report.json").read_text())
    gap = report["optimizer_gap"]
    assert abs(gap[0] - (-1.0595712992461648e-3)) < 1e-9
    assert abs(gap[1] - 1.4304212539823224e-3) < 1e-9
    text = (out / "threepoint_matrices.txt").read_text()
    assert "entropy optimizer" in text and "flat-volatility optimizer" in text


def test_simulate_gaussian_fiber(tmp_path):
    out = tmp_path / "run"
    code = main(["simulate", "--delta", "2", "--paths", "4000",
                 "--grid-points", "201", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "simulate_report.json").read_text())
    assert report["all_pass"] is True
    assert report["pathwise_max_dev"] < 1e-12
    assert report["rel_discrepancy"] < 1e-2
    lines = (out / "ensemble.csv").read_text().strip().split("\n")
    assert lines[0] == "path_id,t,M,X,fiber"
    # 200 stored paths x 5 stored times (default store_every 50)
    assert len(lines) == 1 + 200 * 5


def test_simulate_discrete_mixture(tmp_path):
    mu = write_measure(tmp_path / "mu.json", [[-1.0], [1.0]], [0.5, 0.5])
    nu = write_measure(tmp_path / "nu.json", [[-2.0], [0.0], [2.0]],
                       [0.3, 0.4, 0.3])
    out = tmp_path / "run"
    code = main(["simulate", "--mu", mu, "--nu", nu, "--paths", "3000",
                 "--grid-points", "201", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "simulate_report.json").read_text())
    assert report["all_pass"] is True
    assert report["pathwise_max_dev"] < 1e-8
    assert abs(report["terminal_second_moment"]
               - (0.3 * 4 + 0.4 * 0 + 0.3 * 4)) < 0.15


def test_simulate_flag_conflicts(tmp_path, study_files, capsys):
    mu, nu = study_files
    code = main(["simulate", "--delta", "2", "--mu", mu,
                 "--out", str(tmp_path / "run")])
    assert code == 1
    code = main(["simulate", "--mu", mu, "--out", str(tmp_path / "run")])
    assert code == 1


def test_filter_command(tmp_path):
    out = tmp_path / "run"
    code = main(["filter", "--paths", "20000", "--steps", "2000",
                 "--out", str(out)])
    assert code == 0
    report = json.loads((out / "filter_report.json").read_text())
    assert report["all_pass"] is True
    assert report["sigma_invariance"]["max_ks"] < 0.02
    assert max(report["wonham"]["ks"].values()) < 0.02
    lines = (out / "filter_quantiles.csv").read_text().strip().split("\n")
    assert lines[0] == "q,M_sigma_0.5,M_sigma_1.0,M_sigma_2.0"
    assert len(lines) == 202


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
