"""Riccati-form filters: classical KF and the improved MCC Kalman filter.

All three step functions propagate the one-step-ahead pair
``(x̂_{k|k-1}, P_{k|k-1})`` and return the pair for ``k + 1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import orth, solve_discrete_are

from ..exceptions import ConvergenceError
from ..linalg import Mat, psd_factor, spd_solve, symmetrize
from ..statespace import LtiModel
from .kernel import KernelStrategy, lambda_weight

__all__ = [
    "RiccatiFilterState",
    "riccati_init",
    "kf_step",
    "imcckf_riccati_step",
    "imcckf_two_stage_step",
    "steady_state_covariance",
]

logger = logging.getLogger(__name__)

_POLISH_PASSES = 50


@dataclass(frozen=True)
class RiccatiFilterState:
    """One-step-ahead estimate carried by the Riccati-form filters.

    Attributes:
        x_pred: ``x̂_{k|k-1}``, n×1.
        p_pred: ``P_{k|k-1}``, n×n, symmetric PSD.
        k: Time index of the next measurement to consume.
        innovation: ``e_{k-1}`` from the step that produced this state.
        lam: λ used by that step.
        x_filt: ``x̂_{k-1|k-1}`` (two-stage form only).
        p_filt: ``P_{k-1|k-1}`` (two-stage form only).
    """

    x_pred: Mat
    p_pred: Mat
    k: int = 0
    innovation: Mat | None = None
    lam: float | None = None
    x_filt: Mat | None = None
    p_filt: Mat | None = None


def riccati_init(model: LtiModel, p0: Mat | None = None) -> RiccatiFilterState:
    """Seed ``x̂_{0|-1} = x̄₀`` and ``P_{0|-1} = Π₀`` (or ``p0`` if given)."""
    p = model.Pi0 if p0 is None else p0
    return RiccatiFilterState(x_pred=model.x0_mean.copy(), p_pred=np.array(p, dtype=np.float64))


def _riccati_update(
    state: RiccatiFilterState, y: Mat, model: LtiModel, lam: float
) -> RiccatiFilterState:
    F, H = model.F, model.H
    P = state.p_pred
    e = y - H @ state.x_pred
    ph = P @ H.T
    re = lam * (H @ ph) + model.R
    # K_p = F P Hᵀ R_e⁻¹, obtained from R_e K_pᵀ = H P Fᵀ.
    kp = spd_solve(re, (F @ ph).T, check=False, name="innovation covariance").T
    x_next = F @ state.x_pred + lam * (kp @ e)
    p_next = F @ P @ F.T + model.gqg - lam * (kp @ re @ kp.T)
    return RiccatiFilterState(
        x_pred=x_next, p_pred=symmetrize(p_next), k=state.k + 1, innovation=e, lam=lam
    )


def kf_step(state: RiccatiFilterState, y: Mat, model: LtiModel) -> RiccatiFilterState:
    """Advance the classical Kalman filter by one measurement.

    Raises:
        DefinitenessError: If ``R + H P Hᵀ`` is not SPD.
    """
    return _riccati_update(state, y, model, 1.0)


def imcckf_riccati_step(
    state: RiccatiFilterState, y: Mat, model: LtiModel, strategy: KernelStrategy
) -> RiccatiFilterState:
    """Advance the IMCC-KF in its one-step Riccati form.

    With λ_k from ``strategy``:

    * ``R^λ_e = λ H P Hᵀ + R``
    * ``K_p = F P Hᵀ [R^λ_e]⁻¹``
    * ``x̂_{k+1|k} = F x̂ + λ K_p e_k``
    * ``P_{k+1|k} = F P Fᵀ + G Q Gᵀ − λ K_p R^λ_e K_pᵀ``, symmetrized

    Raises:
        DefinitenessError: If ``R^λ_e`` is not SPD.
    """
    e = y - model.H @ state.x_pred
    lam = lambda_weight(e, model.r_inv, strategy)
    return _riccati_update(state, y, model, lam)


def imcckf_two_stage_step(
    state: RiccatiFilterState, y: Mat, model: LtiModel, strategy: KernelStrategy
) -> RiccatiFilterState:
    """Advance the IMCC-KF in its measurement-update / time-update form.

    The returned state holds the a posteriori pair of this step in
    ``x_filt`` / ``p_filt`` and the a priori pair for the next step in
    ``x_pred`` / ``p_pred``.

    Raises:
        DefinitenessError: If ``R^λ_e`` is not SPD.
    """
    F, H = model.F, model.H
    P = state.p_pred
    e = y - H @ state.x_pred
    residual = None if state.x_filt is None else state.x_pred - F @ state.x_filt
    lam = lambda_weight(e, model.r_inv, strategy, residual, P)

    ph = P @ H.T
    re = lam * (H @ ph) + model.R
    gain = lam * spd_solve(re, ph.T, check=False, name="innovation covariance").T
    x_filt = state.x_pred + gain @ e
    p_filt = symmetrize((np.eye(model.n) - gain @ H) @ P)

    x_next = F @ x_filt
    p_next = symmetrize(F @ p_filt @ F.T + model.gqg)
    return RiccatiFilterState(
        x_pred=x_next,
        p_pred=p_next,
        k=state.k + 1,
        innovation=e,
        lam=lam,
        x_filt=x_filt,
        p_filt=p_filt,
    )


def _noise_reachable_basis(model: LtiModel) -> Mat:
    """Orthonormal basis of the span of ``[B, F·B, …, F^{n-1}·B]``, ``B = G·Q^{1/2}``."""
    n = model.n
    root = model.G @ psd_factor(model.Q)
    if root.size == 0 or not np.any(root):
        return np.zeros((n, 0))
    blocks = [root]
    for _ in range(n - 1):
        blocks.append(model.F @ blocks[-1])
    return orth(np.hstack(blocks))


def steady_state_covariance(model: LtiModel, lam: float = 1.0, tol: float = 1e-8) -> Mat:
    """Return the stationary ``P_{k+1|k}`` of the λ-weighted Riccati recursion.

    With constant λ the recursion is the classical one with measurement
    covariance ``R/λ``, so its fixed point solves a discrete algebraic
    Riccati equation. Modes the process noise never reaches (the constant
    acceleration of the satellite model, say) carry no stationary
    uncertainty: the equation is solved on the noise-reachable subspace and
    embedded back, leaving those modes at zero.

    Args:
        model: LTI model.
        lam: Constant adjusting weight.
        tol: Relative bound on ``‖map(P) − P‖_F / (1 + ‖P‖_F)`` accepted as
            a fixed point.

    Returns:
        The stationary ``P_{k+1|k}``, symmetric PSD.

    Raises:
        ConvergenceError: If no PSD fixed point exists (an unstable mode the
            noise reaches but the sensor does not see, for instance).
        ValueError: If ``lam`` is not positive.
    """
    if not lam > 0:
        raise ValueError(f"Invalid lambda: {lam}. Must be > 0.")
    n = model.n
    basis = _noise_reachable_basis(model)
    if basis.shape[1] == 0:
        p = np.zeros((n, n))
    else:
        f_r = basis.T @ model.F @ basis
        h_r = model.H @ basis
        q_r = symmetrize(basis.T @ model.gqg @ basis)
        try:
            x = solve_discrete_are(f_r.T, h_r.T, q_r, model.R / lam)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise ConvergenceError(f"No stationary covariance for lambda={lam}: {e}") from e
        p = symmetrize(basis @ x @ basis.T)

    scale = 1.0 + float(np.linalg.norm(p))
    if n and float(np.linalg.eigvalsh(p)[0]) < -tol * scale:
        raise ConvergenceError(f"Riccati fixed point is not positive semidefinite (lambda={lam}).")
    y_zero = np.zeros((model.m, 1))
    x_zero = np.zeros((n, 1))

    def apply(p_k: Mat) -> Mat:
        state = RiccatiFilterState(x_pred=x_zero, p_pred=p_k)
        return _riccati_update(state, y_zero, model, lam).p_pred

    nxt = apply(p)
    residual = float(np.linalg.norm(nxt - p))
    if not residual <= tol * scale:
        raise ConvergenceError(
            f"Riccati fixed point residual {residual:.3e} exceeds tolerance (lambda={lam})."
        )
    # the recursion contracts around the stabilizing solution; a few passes
    # bring the residual down to round-off
    for _ in range(_POLISH_PASSES):
        if residual == 0.0:
            break
        after = apply(nxt)
        step = float(np.linalg.norm(after - nxt))
        if step >= residual:
            break
        p, nxt, residual = nxt, after, step
    logger.info(
        "Stationary covariance solved on a %d-dimensional noise-reachable subspace "
        "(residual %.2e)",
        basis.shape[1],
        residual,
    )
    return p
