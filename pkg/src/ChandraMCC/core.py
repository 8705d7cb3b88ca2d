"""Core filtering functionality for ChandraMCC.

This module ties the filter implementations to trajectories: it names the
available filters, describes how one is configured (:class:`FilterSpec`),
runs it over a whole trajectory (:func:`run_filter`) and packages the
result (:class:`FilterOutput`).
"""

from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np
from numpy.typing import NDArray

from .exceptions import (
    ConditioningError,
    ConfigurationError,
    DefinitenessError,
    FilterStepError,
    ShapeError,
)
from .filters import (
    ChandrasekharFilterState,
    KernelStrategy,
    RiccatiFilterState,
    chandrasekhar_init,
    chandrasekhar_step,
    imcckf_riccati_step,
    imcckf_two_stage_step,
    kf_step,
    riccati_init,
)
from .linalg import LowRankFactors, Mat
from .statespace import LtiModel, Trajectory

__all__ = [
    "FILTER_NAMES",
    "CHANDRASEKHAR_FILTERS",
    "FILTER_LABELS",
    "FilterSpec",
    "FilterOutput",
    "run_filter",
]

logger = logging.getLogger(__name__)

FILTER_NAMES: tuple[str, ...] = (
    "kf",
    "imcc-riccati",
    "imcc-two-stage",
    "alg1",
    "alg2",
    "alg3",
    "alg4",
)
CHANDRASEKHAR_FILTERS: frozenset[str] = frozenset({"alg1", "alg2", "alg3", "alg4"})

# Human-readable row labels for reports
FILTER_LABELS: dict[str, str] = {
    "kf": "Classical Riccati KF",
    "imcc-riccati": "Riccati IMCC-KF",
    "imcc-two-stage": "Two-stage IMCC-KF",
    "alg1": "Algorithm 1",
    "alg2": "Algorithm 2",
    "alg3": "Algorithm 3",
    "alg4": "Algorithm 4",
}

FilterState = Union[RiccatiFilterState, ChandrasekharFilterState]


@dataclass(frozen=True)
class FilterSpec:
    """A filter name plus the kernel strategy it runs with.

    Under ``"adaptive"`` the Chandrasekhar forms run with the constant
    ``λ = exp(-1/2)``, while the Riccati forms evaluate the kernel per step
    and use ``λ_k = 1`` when ``e_k = 0``.

    Attributes:
        name: One of :data:`FILTER_NAMES`.
        strategy: Kernel strategy; ignored by ``kf``.
    """

    name: str
    strategy: KernelStrategy = field(default_factory=KernelStrategy.adaptive)

    def __post_init__(self) -> None:
        if self.name not in FILTER_NAMES:
            raise ConfigurationError(
                f"Invalid filter: {self.name}. Must be one of {', '.join(FILTER_NAMES)}."
            )
        if self.is_chandrasekhar and not self.strategy.is_constant:
            raise ConfigurationError(
                f"Filter {self.name} needs a constant lambda; "
                f"kernel strategy '{self.strategy.kind}' varies over time."
            )

    @property
    def is_chandrasekhar(self) -> bool:
        """True for the four low-rank variants."""
        return self.name in CHANDRASEKHAR_FILTERS

    @property
    def lambda_label(self) -> str | float:
        """Value reported in the ``lambda`` output field."""
        if self.name == "kf":
            return 1.0
        return self.strategy.label()

    def to_json(self) -> dict[str, Any]:
        """Encode as ``{"name", "strategy", "lambda" | "sigma"}``."""
        return {"name": self.name, **self.strategy.to_json()}

    @classmethod
    def from_json(cls, obj: Any) -> FilterSpec:
        """Decode a filter entry of a config file.

        A bare string is accepted as a name with the adaptive strategy.

        Raises:
            ConfigurationError: On unknown keys, names or strategies.
        """
        if isinstance(obj, str):
            return cls(obj)
        if not isinstance(obj, dict) or "name" not in obj:
            raise ConfigurationError(f"Invalid filter entry: {obj!r}. Must name a filter.")
        unknown = set(obj) - {"name", "strategy", "lambda", "sigma"}
        if unknown:
            raise ConfigurationError(f"Unknown filter keys: {', '.join(sorted(unknown))}.")
        kind = obj.get("strategy")
        if kind is None:
            if obj.get("lambda") == "adaptive":
                kind = "adaptive"
            elif "lambda" in obj:
                kind = "constant"
            elif "sigma" in obj:
                kind = "fixed-sigma"
            else:
                kind = "adaptive"
        try:
            if kind == "constant":
                strategy = KernelStrategy.constant(float(obj.get("lambda", 1.0)))
            elif kind == "fixed-sigma":
                if "sigma" not in obj:
                    raise ConfigurationError("Strategy 'fixed-sigma' requires a 'sigma' value.")
                strategy = KernelStrategy.fixed_sigma(float(obj["sigma"]))
            else:
                strategy = KernelStrategy(kind)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"Invalid filter entry {obj!r}: {e}") from e
        return cls(str(obj["name"]), strategy)


@dataclass
class FilterOutput:
    """Everything recorded while running one filter over one trajectory.

    Record ``k`` holds ``x̂_{k|k-1}``, the innovation ``e_k`` of measurement
    ``y_k`` and the weight ``λ_k`` used with it.

    Attributes:
        filter: Filter name.
        lambda_label: Reported λ (a number, ``"adaptive"`` or ``"sigma=..."``).
        x_pred: (N+1)×n a priori estimates.
        innovations: (N+1)×m innovations.
        lambdas: N+1 adjusting weights.
        elapsed_ns: Wall-clock time of the recursion loop.
        init_ns: Wall-clock time of initialization (factorization included).
        alpha: Displacement rank for Chandrasekhar variants, else None.
        factor_history: ``(L_k, M_k)`` for ``k = 0..N`` when requested.
        covariances: ``P_{k|k-1}`` for ``k = 0..N`` (Riccati forms) when requested.
    """

    filter: str
    lambda_label: str | float
    x_pred: NDArray[np.float64]
    innovations: NDArray[np.float64]
    lambdas: NDArray[np.float64]
    elapsed_ns: int
    init_ns: int = 0
    alpha: int | None = None
    factor_history: list[LowRankFactors] | None = None
    covariances: list[Mat] | None = None

    @property
    def N(self) -> int:
        """Number of transitions covered."""
        return int(self.x_pred.shape[0] - 1)

    def to_json(self) -> dict[str, Any]:
        """Encode the reporting fields."""
        return {
            "filter": self.filter,
            "lambda": self.lambda_label,
            "alpha": self.alpha,
            "x_pred": self.x_pred.tolist(),
            "innovations": self.innovations.tolist(),
            "lambdas": self.lambdas.tolist(),
            "elapsed_ns": int(self.elapsed_ns),
            "init_ns": int(self.init_ns),
        }


def _initial_state(
    model: LtiModel, spec: FilterSpec, rel_tol: float | None
) -> tuple[FilterState, Callable[[Any, Mat], FilterState]]:
    strategy = spec.strategy
    if spec.name == "kf":
        return riccati_init(model), lambda s, y: kf_step(s, y, model)
    if spec.name == "imcc-riccati":
        return riccati_init(model), lambda s, y: imcckf_riccati_step(s, y, model, strategy)
    if spec.name == "imcc-two-stage":
        return riccati_init(model), lambda s, y: imcckf_two_stage_step(s, y, model, strategy)
    lam = strategy.constant_lambda()
    state = chandrasekhar_init(model, lam, spec.name, rel_tol)  # type: ignore[arg-type]
    return state, lambda s, y: chandrasekhar_step(s, y, model, lam)


def run_filter(
    model: LtiModel,
    trajectory: Trajectory,
    spec: FilterSpec,
    *,
    keep_factors: bool = False,
    rel_tol: float | None = None,
) -> FilterOutput:
    """Run one filter over every measurement of a trajectory.

    Args:
        model: Model the filter assumes.
        trajectory: Measurements ``y_0..y_N`` to consume.
        spec: Filter and kernel strategy.
        keep_factors: Record the factor history (Chandrasekhar variants) or
            the covariance sequence (Riccati forms).
        rel_tol: Trim tolerance for the Chandrasekhar initialization.

    Returns:
        The recorded sequences and timings.

    Raises:
        ShapeError: If the trajectory does not match the model dimensions.
        ConfigurationError: If the strategy is not admissible for the filter.
        FilterStepError: If a step fails; carries the filter name and step.
    """
    if trajectory.n != model.n or trajectory.m != model.m:
        raise ShapeError(
            f"Trajectory dimensions (n={trajectory.n}, m={trajectory.m}) do not match "
            f"model dimensions (n={model.n}, m={model.m})."
        )
    count = trajectory.N + 1
    ys = [trajectory.measurement(k) for k in range(count)]

    t0 = time.perf_counter_ns()
    try:
        state, advance = _initial_state(model, spec, rel_tol)
    except (DefinitenessError, ConditioningError) as e:
        raise FilterStepError(
            f"{spec.name} initialization failed: {e}", filter_name=spec.name, step=0
        ) from e
    init_ns = time.perf_counter_ns() - t0

    x_pred = np.empty((count, model.n))
    innovations = np.empty((count, model.m))
    lambdas = np.empty(count)
    history: list[LowRankFactors] | None = [] if keep_factors and spec.is_chandrasekhar else None
    covariances: list[Mat] | None = (
        [] if keep_factors and not spec.is_chandrasekhar else None
    )

    k = 0
    t0 = time.perf_counter_ns()
    try:
        for k in range(count):
            x_pred[k] = state.x_pred[:, 0]
            if history is not None:
                history.append(state.factors)  # type: ignore[union-attr]
            if covariances is not None:
                covariances.append(state.p_pred)  # type: ignore[union-attr]
            state = advance(state, ys[k])
            assert state.innovation is not None
            innovations[k] = state.innovation[:, 0]
            lambdas[k] = state.lam
    except (DefinitenessError, ConditioningError) as e:
        raise FilterStepError(
            f"{spec.name} failed at step {k}: {e}", filter_name=spec.name, step=k
        ) from e
    elapsed_ns = time.perf_counter_ns() - t0

    alpha = state.alpha if isinstance(state, ChandrasekharFilterState) else None
    logger.debug("%s: %d steps in %.3f ms", spec.name, count, elapsed_ns / 1e6)
    return FilterOutput(
        filter=spec.name,
        lambda_label=spec.lambda_label,
        x_pred=x_pred,
        innovations=innovations,
        lambdas=lambdas,
        elapsed_ns=elapsed_ns,
        init_ns=init_ns,
        alpha=alpha,
        factor_history=history,
        covariances=covariances,
    )
