import importlib
import json
from contextlib import nullcontext
from unittest.mock import patch

import pytest

import ChandraMCC.bench
from ChandraMCC.statespace import load_trajectory, save_trajectory, simulate

main_module = importlib.import_module("ChandraMCC.main")
main = main_module.main


@pytest.fixture(autouse=True)
def no_pinning():
    # keep the test process at its normal priority and affinity
    with patch.object(ChandraMCC.bench, "timing_environment", side_effect=lambda _: nullcontext()):
        yield


@pytest.fixture
def short_config(tmp_path):
    path = tmp_path / "short.json"
    path.write_text(json.dumps({"N": 60}))
    return str(path)


@pytest.fixture
def traj_file(tmp_path):
    path = tmp_path / "traj.json"
    assert main(["simulate", "--seed", "7", "--out", str(path)]) == 0
    return str(path)


def test_version_and_usage(capsys):
    assert main(["--version"]) == 0
    assert "chandramcc" in capsys.readouterr().out
    assert main([]) == 2
    assert main(["simulate", "--pi0", "unit"]) == 2


def test_simulate_writes_trajectory(tmp_path, capsys):
    path = tmp_path / "traj.json"
    assert main(["simulate", "--seed", "7", "--out", str(path)]) == 0
    out = capsys.readouterr().out
    assert "N=300 n=4 m=1 corrupted=28" in out
    traj = load_trajectory(path)
    assert traj.states.shape == (301, 4)
    assert traj.seed == 7


def test_simulate_is_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["simulate", "--seed", "3", "--q4", "0.000063", "--out", str(a)]) == 0
    assert main(["simulate", "--seed", "3", "--q4", "0.000063", "--out", str(b)]) == 0
    assert a.read_text() == b.read_text()


def test_simulate_requires_out(capsys):
    assert main(["simulate"]) == 2
    assert "--out" in capsys.readouterr().err


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", "x"]) == 2
    assert "not found" in capsys.readouterr().err


def test_filter_reports_alpha(traj_file, tmp_path, capsys):
    out = tmp_path / "out.json"
    code = main(
        ["filter", "--trajectory", traj_file, "--filter", "alg2", "--pi0", "zero"]
        + ["--out", str(out)]
    )
    assert code == 0
    assert "alpha=1" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert data["filter"] == "alg2"
    assert data["lambda"] == "adaptive"
    assert len(data["x_pred"]) == 301


def test_filter_uses_embedded_model(traj_file, tmp_path, capsys):
    out = tmp_path / "out.json"
    assert main(["filter", "--trajectory", traj_file, "--filter", "alg4", "--out", str(out)]) == 0
    assert "alpha=4" in capsys.readouterr().out


def test_filter_needs_exactly_one_filter(traj_file, tmp_path):
    out = str(tmp_path / "o.json")
    assert main(["filter", "--trajectory", traj_file, "--out", out]) == 2
    args = ["filter", "--trajectory", traj_file, "--out", out, "--filter", "kf", "--filter", "alg1"]
    assert main(args) == 2


def test_fixed_sigma_with_chandrasekhar_is_usage_error(traj_file, tmp_path, capsys):
    out = str(tmp_path / "o.json")
    args = ["filter", "--trajectory", traj_file, "--filter", "alg3", "--sigma", "2", "--out", out]
    assert main(args) == 2
    assert "constant lambda" in capsys.readouterr().err


def test_dimension_mismatch_is_data_error(tmp_path, make_random_model, capsys):
    path = tmp_path / "small.json"
    save_trajectory(simulate(make_random_model(0), 20), path)
    out = str(tmp_path / "o.json")
    args = ["filter", "--trajectory", str(path), "--filter", "kf", "--q4", "0.0063", "--out", out]
    assert main(args) == 3
    assert "dimensions" in capsys.readouterr().err


def test_unreadable_trajectory_is_data_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    args = ["filter", "--trajectory", str(bad), "--filter", "kf", "--out", str(tmp_path / "o")]
    assert main(args) == 3


def test_bench_csv(capsys, short_config):
    args = ["bench", "--config", short_config, "--runs", "3", "--format", "csv"]
    assert main(args + ["--filter", "kf", "--filter", "imcc-riccati", "--filter", "alg2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("filter,rmse_x1")
    assert [line.split(",")[0] for line in lines[1:]] == ["kf", "imcc-riccati", "alg2"]


def test_bench_json_to_file(tmp_path, short_config):
    out = tmp_path / "report.json"
    args = ["bench", "--config", short_config, "--runs", "2", "--format", "json", "--out", str(out)]
    assert main(args) == 0
    data = json.loads(out.read_text())
    assert data["runs"] == 2
    assert data["pi0"] == "benchmark"
    assert len(data["rows"]) == 6


def test_bench_reference_table(capsys, short_config):
    args = ["bench", "--config", short_config, "--runs", "2", "--filter", "kf", "--reference"]
    assert main(args) == 0
    assert "Comparison with published RMSE" in capsys.readouterr().out


def test_bench_rejects_bad_runs(short_config):
    assert main(["bench", "--config", short_config, "--runs", "0"]) == 2


def test_verify_passes(capsys, short_config):
    assert main(["verify", "--config", short_config, "--pi0", "zero"]) == 0
    assert "woodbury:alg3" in capsys.readouterr().out


def test_verify_reports_failure(capsys, short_config):
    assert main(["verify", "--config", short_config, "--reference-lambda", "1.0"]) == 1
    assert "FAILED state:alg1" in capsys.readouterr().err


def test_verify_json(tmp_path, traj_file):
    out = tmp_path / "verify.json"
    args = ["verify", "--trajectory", traj_file, "--format", "json", "--out", str(out)]
    assert main(args) == 0
    data = json.loads(out.read_text())
    assert data["passed"] is True
    assert data["steps"] == 301


def test_verify_steady_prior_has_zero_rank(tmp_path, short_config):
    out = tmp_path / "verify.json"
    args = ["verify", "--config", short_config, "--pi0", "steady", "--format", "json"]
    assert main(args + ["--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["passed"] is True
    assert data["alpha"] == 0


def test_filter_steady_prior(traj_file, tmp_path, capsys):
    out = tmp_path / "out.json"
    args = ["filter", "--trajectory", traj_file, "--filter", "alg1", "--pi0", "steady"]
    assert main(args + ["--out", str(out)]) == 0
    assert "alpha=0" in capsys.readouterr().out
