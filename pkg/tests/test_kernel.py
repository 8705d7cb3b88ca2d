import math

import numpy as np
import pytest

from ChandraMCC.exceptions import ConfigurationError
from ChandraMCC.filters.kernel import (
    ADAPTIVE_LAMBDA,
    KernelStrategy,
    gaussian_kernel,
    lambda_weight,
    mahalanobis_norm,
)


def test_gaussian_kernel_values():
    assert gaussian_kernel(1.0, 1.0) == pytest.approx(math.exp(-0.5))
    assert gaussian_kernel(2.0, 1.0) == pytest.approx(math.exp(-2.0))
    assert gaussian_kernel(0.0, 3.0) == 1.0
    with pytest.raises(ValueError):
        gaussian_kernel(1.0, 0.0)


def test_mahalanobis_norm():
    v = np.array([[3.0], [4.0]])
    assert mahalanobis_norm(v, np.eye(2)) == pytest.approx(5.0)
    assert mahalanobis_norm(v, 4.0 * np.eye(2)) == pytest.approx(10.0)


def test_adaptive_weight_is_constant():
    r_inv = np.array([[1.0]])
    for e in (0.1, 1.0, 250.0):
        assert lambda_weight(np.array([[e]]), r_inv, KernelStrategy.adaptive()) == pytest.approx(
            ADAPTIVE_LAMBDA
        )
    assert ADAPTIVE_LAMBDA == pytest.approx(0.6065306597126334)


def test_adaptive_weight_for_zero_innovation():
    assert lambda_weight(np.zeros((1, 1)), np.eye(1), KernelStrategy.adaptive()) == 1.0


def test_constant_weight_ignores_innovation():
    strategy = KernelStrategy.constant(0.3)
    assert lambda_weight(np.array([[9.0]]), np.eye(1), strategy) == 0.3


def test_fixed_sigma_weight():
    strategy = KernelStrategy.fixed_sigma(1.0)
    e = np.array([[2.0]])
    assert lambda_weight(e, np.eye(1), strategy) == pytest.approx(math.exp(-2.0))
    # nonzero prediction residual enters the denominator
    lam = lambda_weight(e, np.eye(1), strategy, np.array([[1.0]]), np.eye(1))
    assert lam == pytest.approx(math.exp(-1.5))
    with pytest.raises(ValueError, match="p_pred"):
        lambda_weight(e, np.eye(1), strategy, np.array([[1.0]]))


def test_strategy_validation():
    with pytest.raises(ConfigurationError):
        KernelStrategy.constant(0.0)
    with pytest.raises(ConfigurationError):
        KernelStrategy.fixed_sigma(-1.0)
    with pytest.raises(ConfigurationError):
        KernelStrategy("mystery")
    assert KernelStrategy("adaptive", 5.0).value is None


def test_strategy_lambda_and_labels():
    assert KernelStrategy.constant(0.5).constant_lambda() == 0.5
    assert KernelStrategy.adaptive().constant_lambda() == ADAPTIVE_LAMBDA
    with pytest.raises(ConfigurationError):
        KernelStrategy.fixed_sigma(2.0).constant_lambda()

    assert KernelStrategy.constant(0.5).label() == 0.5
    assert KernelStrategy.adaptive().label() == "adaptive"
    assert KernelStrategy.fixed_sigma(2.0).label() == "sigma=2.0"
    assert not KernelStrategy.fixed_sigma(2.0).is_constant
    assert KernelStrategy.fixed_sigma(2.0).to_json() == {"strategy": "fixed-sigma", "sigma": 2.0}
