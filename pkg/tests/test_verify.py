from dataclasses import replace

import numpy as np

from ChandraMCC.filters import steady_state_covariance
from ChandraMCC.statespace import LtiModel, ShotNoiseSpec, simulate
from ChandraMCC.verify import CheckResult, render_verification, verify_model


def test_satellite_suite_passes(sat_benchmark):
    report = verify_model(sat_benchmark, shot=ShotNoiseSpec())
    assert report.passed, [c.name for c in report.failures]
    assert report.alpha == 4
    assert report.steps == 301
    names = {c.name for c in report.checks}
    assert {"degeneracy:kf", "woodbury:alg3", "lemma:alg4", "agreement:alg1-alg3"} <= names


def test_zero_prior_suite_passes(sat_zero):
    report = verify_model(sat_zero, lam=0.3, N=150, seed=4)
    assert report.passed
    assert report.alpha == 1


def test_steady_prior_suite_passes():
    model = LtiModel(
        F=[[0.8]], G=[[1.0]], H=[[1.0]], Q=[[1.0]], R=[[1.0]], x0_mean=[[0.0]], Pi0=[[1.0]]
    )
    model = replace(model, Pi0=steady_state_covariance(model))
    report = verify_model(model, lam=1.0, N=100)
    assert report.passed
    assert report.alpha == 0


def test_given_trajectory_is_used(sat_benchmark):
    traj = simulate(sat_benchmark, 40, seed=9)
    assert verify_model(sat_benchmark, trajectory=traj).steps == 41


def test_mismatched_reference_fails(sat_benchmark):
    report = verify_model(sat_benchmark, N=60, reference_lambda=1.0)
    assert not report.passed
    failing = {c.name: c for c in report.failures}
    assert "state:alg2" in failing
    assert failing["state:alg2"].failing_step is not None
    # the internal consistency checks do not depend on the oracle
    assert "lemma:alg2" not in failing
    assert "agreement:alg1-alg2" not in failing


def test_report_json_and_rendering(sat_zero):
    report = verify_model(sat_zero, N=30)
    data = report.to_json()
    assert data["passed"] is True
    assert data["alpha"] == 1
    assert len(data["checks"]) == len(report.checks)
    text = render_verification(report)
    assert "woodbury:alg3" in text
    assert "PASS" in text


def test_check_result_flags_failure():
    ok = CheckResult("x", 1e-12, 1e-8)
    bad = CheckResult("y", 1e-3, 1e-8, failing_step=5)
    assert ok.passed and not bad.passed
    assert bad.to_json()["failing_step"] == 5
    assert np.isclose(bad.to_json()["max_residual"], 1e-3)
