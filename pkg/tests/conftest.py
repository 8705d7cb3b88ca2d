import sys
import os
from collections.abc import Callable
from dataclasses import replace

import numpy as np
import pytest

# Add src to path so tests can import the package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from ChandraMCC.statespace import LtiModel, ShotNoiseSpec, satellite_model, simulate


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CHANDRAMCC_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set CHANDRAMCC_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def sat_benchmark() -> LtiModel:
    """Satellite model, q4 = 0.63e-2, Pi0 = diag(1, 1, 1, 0.01)."""
    return satellite_model(0.63e-2)


@pytest.fixture
def sat_zero() -> LtiModel:
    """Satellite model, q4 = 0.63e-2, Pi0 = 0."""
    return replace(satellite_model(0.63e-2), Pi0=np.zeros((4, 4)))


@pytest.fixture
def scalar_model() -> LtiModel:
    return LtiModel(
        F=[[1.0]], G=[[1.0]], H=[[1.0]], Q=[[0.0]], R=[[1.0]], x0_mean=[[0.0]], Pi0=[[1.0]]
    )


def _random_stable_model(seed: int, n: int = 3, m: int = 1, q: int = 2) -> LtiModel:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    F = 0.9 * a / max(abs(np.linalg.eigvals(a)))
    G = rng.standard_normal((n, q))
    H = rng.standard_normal((m, n))
    b = rng.standard_normal((q, q))
    c = rng.standard_normal((m, m))
    return LtiModel(
        F=F,
        G=G,
        H=H,
        Q=b @ b.T + 0.1 * np.eye(q),
        R=c @ c.T + np.eye(m),
        x0_mean=rng.standard_normal((n, 1)),
        Pi0=np.eye(n),
    )


@pytest.fixture
def make_random_model() -> Callable[..., LtiModel]:
    """Factory for seeded random models with spectral radius 0.9."""
    return _random_stable_model


@pytest.fixture
def sat_trajectory(sat_benchmark):
    return simulate(sat_benchmark, 300, ShotNoiseSpec(), seed=7)
