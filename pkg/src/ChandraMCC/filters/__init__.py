"""Filter implementations for ChandraMCC.

This package contains the classical Kalman filter, the improved maximum
correntropy Kalman filter in its Riccati and two-stage forms, the four
Chandrasekhar-type variants, and the Gaussian kernel machinery that chooses
the adjusting weight λ.
"""

from __future__ import annotations

from .kernel import ADAPTIVE_LAMBDA, KernelStrategy, gaussian_kernel, lambda_weight
from .riccati import (
    RiccatiFilterState,
    riccati_init,
    kf_step,
    imcckf_riccati_step,
    imcckf_two_stage_step,
    steady_state_covariance,
)
from .chandrasekhar import (
    VARIANTS,
    ChandrasekharFilterState,
    chandrasekhar_init,
    alg1_step,
    alg2_step,
    alg3_step,
    alg4_step,
    chandrasekhar_step,
    reconstruct_covariance,
    lemma1_residual,
)

__all__ = [
    "ADAPTIVE_LAMBDA",
    "KernelStrategy",
    "gaussian_kernel",
    "lambda_weight",
    "RiccatiFilterState",
    "riccati_init",
    "kf_step",
    "imcckf_riccati_step",
    "imcckf_two_stage_step",
    "steady_state_covariance",
    "VARIANTS",
    "ChandrasekharFilterState",
    "chandrasekhar_init",
    "alg1_step",
    "alg2_step",
    "alg3_step",
    "alg4_step",
    "chandrasekhar_step",
    "reconstruct_covariance",
    "lemma1_residual",
]
