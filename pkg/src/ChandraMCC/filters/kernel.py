"""Gaussian kernel and the scalar adjusting weight λ.

The correntropy filters scale their innovation correction by
``λ_k = k_σ(‖e_k‖_{R⁻¹}) / k_σ(‖x̂_{k|k-1} − F x̂_{k-1|k-1}‖_{P⁻¹})``. A
:class:`KernelStrategy` decides how σ (and hence λ) is chosen at each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

from ..exceptions import ConfigurationError
from ..linalg import Mat, spd_solve

__all__ = [
    "ADAPTIVE_LAMBDA",
    "KernelStrategy",
    "gaussian_kernel",
    "mahalanobis_norm",
    "lambda_weight",
]

# λ produced by σ_k = ‖e_k‖_{R⁻¹}: k_σ(σ) = exp(−1/2).
ADAPTIVE_LAMBDA: float = math.exp(-0.5)

StrategyKind = Literal["constant", "adaptive", "fixed-sigma"]


@dataclass(frozen=True)
class KernelStrategy:
    """How the adjusting weight is chosen.

    Attributes:
        kind: ``"constant"`` (fixed λ), ``"adaptive"`` (σ_k equals the
            innovation norm, so λ = exp(−1/2)) or ``"fixed-sigma"`` (a
            constant kernel size, time-varying λ_k).
        value: λ for ``"constant"``, σ for ``"fixed-sigma"``; unused otherwise.
    """

    kind: StrategyKind = "adaptive"
    value: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if self.value is None or not self.value > 0:
                raise ConfigurationError(f"Invalid constant lambda: {self.value}. Must be > 0.")
        elif self.kind == "fixed-sigma":
            if self.value is None or not self.value > 0:
                raise ConfigurationError(f"Invalid kernel size sigma: {self.value}. Must be > 0.")
        elif self.kind == "adaptive":
            object.__setattr__(self, "value", None)
        else:
            raise ConfigurationError(
                f"Invalid kernel strategy: {self.kind}. "
                "Must be 'constant', 'adaptive' or 'fixed-sigma'."
            )

    @classmethod
    def constant(cls, lam: float) -> KernelStrategy:
        """Constant adjusting weight ``lam``."""
        return cls("constant", float(lam))

    @classmethod
    def adaptive(cls) -> KernelStrategy:
        """Kernel size equal to the innovation norm."""
        return cls("adaptive")

    @classmethod
    def fixed_sigma(cls, sigma: float) -> KernelStrategy:
        """Constant kernel size ``sigma``; λ varies over time."""
        return cls("fixed-sigma", float(sigma))

    @property
    def is_constant(self) -> bool:
        """True when λ does not change over time (admissible for Chandrasekhar filters)."""
        return self.kind != "fixed-sigma"

    def constant_lambda(self) -> float:
        """The time-invariant λ this strategy implies.

        Raises:
            ConfigurationError: For ``"fixed-sigma"``, whose λ varies.
        """
        if self.kind == "constant":
            assert self.value is not None
            return self.value
        if self.kind == "adaptive":
            return ADAPTIVE_LAMBDA
        raise ConfigurationError(
            "A fixed kernel size gives a time-varying lambda; "
            "only the Riccati-form filters accept it."
        )

    def label(self) -> str | float:
        """Value written to the ``lambda`` field of outputs."""
        if self.kind == "constant":
            assert self.value is not None
            return self.value
        if self.kind == "adaptive":
            return "adaptive"
        return f"sigma={self.value}"

    def to_json(self) -> dict[str, Any]:
        """Encode for config files."""
        out: dict[str, Any] = {"strategy": self.kind}
        if self.kind == "constant":
            out["lambda"] = self.value
        elif self.kind == "fixed-sigma":
            out["sigma"] = self.value
        return out


def gaussian_kernel(u: float, sigma: float) -> float:
    """Evaluate ``exp(−u² / (2σ²))``.

    Raises:
        ValueError: If ``sigma`` is not positive.
    """
    if not sigma > 0:
        raise ValueError(f"Invalid kernel size sigma: {sigma}. Must be positive.")
    return math.exp(-(u * u) / (2.0 * sigma * sigma))


def mahalanobis_norm(vec: Mat, weight: Mat) -> float:
    """Return ``sqrt(vecᵀ · weight · vec)`` for a column ``vec``."""
    val = float((vec.T @ weight @ vec)[0, 0])
    return math.sqrt(max(val, 0.0))


def lambda_weight(
    ek: Mat,
    r_inv: Mat,
    strategy: KernelStrategy,
    prediction_residual: Mat | None = None,
    p_pred: Mat | None = None,
) -> float:
    """Compute the adjusting weight λ_k for one step.

    Args:
        ek: Innovation ``y_k − H x̂_{k|k-1}``.
        r_inv: ``R⁻¹``.
        strategy: Kernel strategy.
        prediction_residual: ``x̂_{k|k-1} − F x̂_{k-1|k-1}`` for the
            denominator of ``"fixed-sigma"``; None means the a priori form,
            where it is identically zero.
        p_pred: ``P_{k|k-1}``, needed only when the residual is nonzero.

    Returns:
        λ_k. The adaptive strategy returns 1 for a zero innovation, where
        the kernel size would be zero.
    """
    if strategy.kind == "constant":
        assert strategy.value is not None
        return strategy.value

    e_norm = mahalanobis_norm(ek, r_inv)
    if strategy.kind == "adaptive":
        if e_norm == 0.0:
            return 1.0
        return gaussian_kernel(e_norm, e_norm)

    sigma = strategy.value
    assert sigma is not None
    numerator = gaussian_kernel(e_norm, sigma)
    d_norm = 0.0
    if prediction_residual is not None and np.any(prediction_residual):
        if p_pred is None:
            raise ValueError("p_pred is required when the prediction residual is nonzero.")
        d_norm = math.sqrt(
            max(float((prediction_residual.T @ spd_solve(p_pred, prediction_residual))[0, 0]), 0.0)
        )
    return numerator / gaussian_kernel(d_norm, sigma)
