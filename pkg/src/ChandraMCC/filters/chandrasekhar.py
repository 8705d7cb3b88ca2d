"""Chandrasekhar-type IMCC-KF implementations.

With a constant adjusting weight λ the IMCC Riccati recursion can be run on
the low-rank difference ``ΔP_{k+1|k} = P_{k+1|k} − P_{k|k-1} = L_k M_k L_kᵀ``
instead of on ``P`` itself. The rank α of the difference is fixed at
initialization, so every step costs O(n²α) instead of O(n³).

Four equivalent variants are provided. They differ in which gain drives the
``L`` update and in which quantities are propagated as inverses:

========  =================================  ===================
variant   propagated                         inversions per step
========  =================================  ===================
alg1      ``K_p``, ``R^λ_e``, ``M``           one m×m
alg2      ``K_p``, ``R^λ_e``, ``M``           one m×m (solve)
alg3      ``K = K_p R^λ_e``, ``[R^λ_e]⁻¹``,   one α×α
          ``M``, ``M⁻¹``
alg4      ``K_p``, ``R^λ_e``, ``M``, ``M⁻¹``  one m×m and one α×α
========  =================================  ===================
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..linalg import (
    LowRankFactors,
    Mat,
    invert_small,
    ldlt_bunch_kaufman,
    low_rank_trim,
    spd_inverse,
    spd_solve,
    symmetrize,
)
from ..statespace import LtiModel

__all__ = [
    "VARIANTS",
    "Variant",
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

logger = logging.getLogger(__name__)

Variant = Literal["alg1", "alg2", "alg3", "alg4"]
VARIANTS: tuple[Variant, ...] = ("alg1", "alg2", "alg3", "alg4")


@dataclass(slots=True)
class ChandrasekharFilterState:
    """State of a Chandrasekhar-type filter at time ``k``.

    Step functions never modify a state; each returns a new one.

    Attributes:
        variant: Which algorithm owns this state.
        x_pred: ``x̂_{k|k-1}``.
        factors: ``(L_k, M_k)`` with ``L_k M_k L_kᵀ = ΔP_{k+1|k}``.
        gain: ``K_{p,k}``; for ``alg3`` the unnormalized ``K_k = K_{p,k} R^λ_{e,k}``.
        lam: Constant adjusting weight.
        re: ``R^λ_{e,k}`` (None for ``alg3``).
        re_inv: ``[R^λ_{e,k}]⁻¹`` (None for ``alg2``).
        m_inv: ``M_k⁻¹`` (``alg3`` and ``alg4`` only).
        k: Time index of the next measurement to consume.
        innovation: ``e_{k-1}`` from the step that produced this state.
    """

    variant: Variant
    x_pred: Mat
    factors: LowRankFactors
    gain: Mat
    lam: float
    re: Mat | None = None
    re_inv: Mat | None = None
    m_inv: Mat | None = None
    k: int = 0
    innovation: Mat | None = None

    @property
    def alpha(self) -> int:
        """Displacement rank."""
        return self.factors.alpha

    @property
    def gain_p(self) -> Mat:
        """Normalized predictor gain ``K_{p,k}`` for every variant."""
        if self.variant == "alg3":
            assert self.re_inv is not None
            return self.gain @ self.re_inv
        return self.gain

    @property
    def innovation_cov(self) -> Mat:
        """``R^λ_{e,k}`` for every variant."""
        if self.re is not None:
            return self.re
        assert self.re_inv is not None
        return spd_inverse(self.re_inv, check=False, name="propagated inverse")

    def predictor_gain_times_innovation(self, e: Mat) -> Mat:
        """Return ``K_{p,k}·e`` without forming ``K_{p,k}`` for ``alg3``."""
        if self.variant == "alg3":
            assert self.re_inv is not None
            return self.gain @ (self.re_inv @ e)
        return self.gain @ e


def chandrasekhar_init(
    model: LtiModel,
    lam: float,
    variant: Variant = "alg2",
    rel_tol: float | None = None,
    zero_prior_shortcut: bool = True,
) -> ChandrasekharFilterState:
    """Compute the initial innovation covariance, gain and difference factors.

    ``ΔP_{1|0} = F Π₀ Fᵀ + G Q Gᵀ − λ K_{p,0} R^λ_{e,0} K_{p,0}ᵀ − Π₀`` is
    factored with Bunch-Kaufman LDLᵀ and trimmed to its numerical rank.
    When Π₀ is exactly zero and ``zero_prior_shortcut`` is set, only ``Q``
    is factored and ``L₀ = G L_Q``.

    Args:
        model: LTI model.
        lam: Constant adjusting weight, > 0.
        variant: Algorithm to seed.
        rel_tol: Trim tolerance passed to :func:`low_rank_trim`.
        zero_prior_shortcut: Factor ``Q`` directly when Π₀ = 0.

    Returns:
        The state at ``k = 0`` with ``x̂_{0|-1} = x̄₀``.

    Raises:
        ValueError: If ``lam`` is not positive or ``variant`` is unknown.
        DefinitenessError: If ``R^λ_{e,0}`` is not SPD.
    """
    if not lam > 0:
        raise ValueError(f"Invalid lambda: {lam}. Must be > 0.")
    if variant not in VARIANTS:
        raise ValueError(f"Invalid variant: {variant}. Must be one of {', '.join(VARIANTS)}.")

    F, H, Pi0 = model.F, model.H, model.Pi0
    re0 = symmetrize(model.R + lam * (H @ Pi0 @ H.T))
    # K_p0 R_e0 = F Π₀ Hᵀ
    k_unnorm = F @ Pi0 @ H.T
    kp0 = spd_solve(re0, k_unnorm.T, name="initial innovation covariance").T

    if zero_prior_shortcut and not np.any(Pi0):
        q_factors = low_rank_trim(
            ldlt_bunch_kaufman(model.Q), rel_tol, reference_scale=float(np.linalg.norm(model.Q))
        )
        factors = LowRankFactors(L=model.G @ q_factors.L, M=q_factors.M)
    else:
        dp = F @ Pi0 @ F.T + model.gqg - lam * (kp0 @ re0 @ kp0.T) - Pi0
        scale = (
            float(np.linalg.norm(F @ Pi0 @ F.T))
            + float(np.linalg.norm(model.gqg))
            + float(np.linalg.norm(Pi0))
        )
        factors = low_rank_trim(ldlt_bunch_kaufman(symmetrize(dp)), rel_tol, reference_scale=scale)
    logger.info("%s initialized with displacement rank alpha=%d", variant, factors.alpha)

    re_inv0 = spd_inverse(re0, check=False, name="initial innovation covariance")
    m_inv0 = invert_small(factors.M, 0, "M_0") if variant in ("alg3", "alg4") else None
    return ChandrasekharFilterState(
        variant=variant,
        x_pred=model.x0_mean.copy(),
        factors=factors,
        gain=k_unnorm if variant == "alg3" else kp0,
        lam=float(lam),
        re=None if variant == "alg3" else re0,
        re_inv=None if variant == "alg2" else re_inv0,
        m_inv=m_inv0,
    )


def _check_variant(state: ChandrasekharFilterState, expected: Variant) -> None:
    if state.variant != expected:
        raise ValueError(f"State of variant {state.variant} passed to {expected} step.")


def _sym(a: Mat) -> Mat:
    # order-1 blocks are symmetric as computed
    return a if a.shape[0] == 1 else symmetrize(a)


def _advance_estimate(
    state: ChandrasekharFilterState, y: Mat, model: LtiModel, lam: float
) -> tuple[Mat, Mat]:
    e = y - model.H @ state.x_pred
    x_next = model.F @ state.x_pred + lam * state.predictor_gain_times_innovation(e)
    return x_next, e


def _frozen_step(
    state: ChandrasekharFilterState, y: Mat, model: LtiModel, lam: float
) -> ChandrasekharFilterState:
    # α = 0: ΔP vanishes, so gain, covariances and factors stay constant.
    x_next, e = _advance_estimate(state, y, model, lam)
    return ChandrasekharFilterState(
        variant=state.variant,
        x_pred=x_next,
        factors=state.factors,
        gain=state.gain,
        lam=lam,
        re=state.re,
        re_inv=state.re_inv,
        m_inv=state.m_inv,
        k=state.k + 1,
        innovation=e,
    )


def alg1_step(
    state: ChandrasekharFilterState, y: Mat, model: LtiModel, lam: float
) -> ChandrasekharFilterState:
    """Advance Algorithm 1: ``L`` driven by the new gain, ``M`` by the cached old inverse.

    Raises:
        DefinitenessError: If ``R^λ_{e,k+1}`` loses definiteness.
    """
    _check_variant(state, "alg1")
    if state.alpha == 0:
        return _frozen_step(state, y, model, lam)
    assert state.re is not None and state.re_inv is not None
    L, M = state.factors.L, state.factors.M
    x_next, e = _advance_estimate(state, y, model, lam)

    hl = model.H @ L
    hlm = hl @ M
    fl = model.F @ L
    re_next = _sym(state.re + lam * (hlm @ hl.T))
    re_inv_next = spd_inverse(re_next, check=False, name="innovation covariance")
    kp_next = (state.gain @ state.re + fl @ hlm.T) @ re_inv_next
    # (F − λ K_{p,k+1} H) L_k without forming the n×n matrix
    L_next = fl - lam * (kp_next @ hl)
    M_next = _sym(M + lam * (hlm.T @ state.re_inv @ hlm))
    return ChandrasekharFilterState(
        variant="alg1",
        x_pred=x_next,
        factors=LowRankFactors(L=L_next, M=M_next),
        gain=kp_next,
        lam=lam,
        re=re_next,
        re_inv=re_inv_next,
        k=state.k + 1,
        innovation=e,
    )


def alg2_step(
    state: ChandrasekharFilterState, y: Mat, model: LtiModel, lam: float
) -> ChandrasekharFilterState:
    """Advance Algorithm 2: ``L`` driven by the old gain, ``M`` by the new covariance.

    The gain and the ``M`` correction share one Cholesky factorization of
    ``R^λ_{e,k+1}``.

    Raises:
        DefinitenessError: If ``R^λ_{e,k+1}`` loses definiteness.
    """
    _check_variant(state, "alg2")
    if state.alpha == 0:
        return _frozen_step(state, y, model, lam)
    assert state.re is not None
    L, M = state.factors.L, state.factors.M
    n = model.n
    x_next, e = _advance_estimate(state, y, model, lam)

    hl = model.H @ L
    hlm = hl @ M
    fl = model.F @ L
    re_next = _sym(state.re + lam * (hlm @ hl.T))
    k_unnorm = state.gain @ state.re + fl @ hlm.T
    if model.m == 1:
        kp_next = spd_solve(re_next, k_unnorm, check=False, name="innovation covariance")
        correction = hlm.T @ spd_solve(re_next, hlm, check=False, name="innovation covariance")
    else:
        rhs = np.hstack([k_unnorm.T, hlm])
        sol = spd_solve(re_next, rhs, check=False, name="innovation covariance")
        kp_next = sol[:, :n].T
        correction = hlm.T @ sol[:, n:]
    M_next = _sym(M - lam * correction)
    L_next = fl - lam * (state.gain @ hl)
    return ChandrasekharFilterState(
        variant="alg2",
        x_pred=x_next,
        factors=LowRankFactors(L=L_next, M=M_next),
        gain=kp_next,
        lam=lam,
        re=re_next,
        k=state.k + 1,
        innovation=e,
    )


def alg3_step(
    state: ChandrasekharFilterState, y: Mat, model: LtiModel, lam: float
) -> ChandrasekharFilterState:
    """Advance Algorithm 3: propagate ``[R^λ_e]⁻¹`` by a rank-α inverse update.

    Only the α×α matrix ``M_{k+1}⁻¹`` is inverted.

    Raises:
        ConditioningError: If ``M_{k+1}⁻¹`` is singular; names the step.
    """
    _check_variant(state, "alg3")
    if state.alpha == 0:
        return _frozen_step(state, y, model, lam)
    assert state.re_inv is not None and state.m_inv is not None
    L, M = state.factors.L, state.factors.M
    re_inv = state.re_inv
    x_next, e = _advance_estimate(state, y, model, lam)

    hl = model.H @ L
    fl = model.F @ L
    w = re_inv @ hl
    L_next = fl - lam * (state.gain @ w)
    m_inv_next = _sym(state.m_inv + lam * (hl.T @ w))
    M_next = invert_small(m_inv_next, state.k, "M_{k+1}^-1")
    re_inv_next = _sym(re_inv - lam * (w @ M_next @ w.T))
    k_next = state.gain + fl @ (M @ hl.T)
    return ChandrasekharFilterState(
        variant="alg3",
        x_pred=x_next,
        factors=LowRankFactors(L=L_next, M=M_next),
        gain=k_next,
        lam=lam,
        re_inv=re_inv_next,
        m_inv=m_inv_next,
        k=state.k + 1,
        innovation=e,
    )


def alg4_step(
    state: ChandrasekharFilterState, y: Mat, model: LtiModel, lam: float
) -> ChandrasekharFilterState:
    """Advance Algorithm 4, the symmetric variant with both inversions.

    Raises:
        DefinitenessError: If ``R^λ_{e,k+1}`` loses definiteness.
        ConditioningError: If ``M_{k+1}⁻¹`` is singular.
    """
    _check_variant(state, "alg4")
    if state.alpha == 0:
        return _frozen_step(state, y, model, lam)
    assert state.re is not None and state.re_inv is not None and state.m_inv is not None
    L, M = state.factors.L, state.factors.M
    x_next, e = _advance_estimate(state, y, model, lam)

    hl = model.H @ L
    hlm = hl @ M
    fl = model.F @ L
    re_next = _sym(state.re + lam * (hlm @ hl.T))
    re_inv_next = spd_inverse(re_next, check=False, name="innovation covariance")
    m_inv_next = _sym(state.m_inv + lam * (hl.T @ state.re_inv @ hl))
    M_next = invert_small(m_inv_next, state.k, "M_{k+1}^-1")
    kp_next = (state.gain @ state.re + fl @ hlm.T) @ re_inv_next
    L_next = fl - lam * (state.gain @ hl)
    return ChandrasekharFilterState(
        variant="alg4",
        x_pred=x_next,
        factors=LowRankFactors(L=L_next, M=M_next),
        gain=kp_next,
        lam=lam,
        re=re_next,
        re_inv=re_inv_next,
        m_inv=m_inv_next,
        k=state.k + 1,
        innovation=e,
    )


StepFunction = Callable[[ChandrasekharFilterState, Mat, LtiModel, float], ChandrasekharFilterState]

_STEPS: dict[str, StepFunction] = {
    "alg1": alg1_step,
    "alg2": alg2_step,
    "alg3": alg3_step,
    "alg4": alg4_step,
}


def chandrasekhar_step(
    state: ChandrasekharFilterState, y: Mat, model: LtiModel, lam: float | None = None
) -> ChandrasekharFilterState:
    """Dispatch to the step function of ``state.variant``; λ defaults to ``state.lam``."""
    return _STEPS[state.variant](state, y, model, state.lam if lam is None else lam)


def reconstruct_covariance(history: Sequence[LowRankFactors], Pi0: Mat) -> Mat:
    """Recover ``P_{k+1|k} = Π₀ + Σ_{j≤k} L_j M_j L_jᵀ`` from the factor history."""
    p = np.array(Pi0, dtype=np.float64, copy=True)
    for f in history:
        p += f.product()
    return symmetrize(p)


def lemma1_residual(
    state: ChandrasekharFilterState,
    prev: ChandrasekharFilterState,
    model: LtiModel,
    lam: float,
) -> float:
    """Check both closed-form difference recursions across one step.

    From the previous step's ``ΔP = L_k M_k L_kᵀ``:

    * ``(F − λK_{p,k+1}H)(ΔP + λ ΔP Hᵀ [R^λ_{e,k}]⁻¹ H ΔP)(F − λK_{p,k+1}H)ᵀ``
    * ``(F − λK_{p,k}H)(ΔP − λ ΔP Hᵀ [R^λ_{e,k+1}]⁻¹ H ΔP)(F − λK_{p,k}H)ᵀ``

    Both must equal ``L_{k+1} M_{k+1} L_{k+1}ᵀ``.

    Returns:
        The larger Frobenius-norm discrepancy of the two.
    """
    F, H = model.F, model.H
    dp = prev.factors.product()
    target = state.factors.product()
    hdp = H @ dp

    a_new = F - lam * (state.gain_p @ H)
    inner1 = dp + lam * (hdp.T @ spd_solve(prev.innovation_cov, hdp, check=False))
    form1 = a_new @ inner1 @ a_new.T

    a_old = F - lam * (prev.gain_p @ H)
    inner2 = dp - lam * (hdp.T @ spd_solve(state.innovation_cov, hdp, check=False))
    form2 = a_old @ inner2 @ a_old.T

    return max(
        float(np.linalg.norm(form1 - target)),
        float(np.linalg.norm(form2 - target)),
    )
