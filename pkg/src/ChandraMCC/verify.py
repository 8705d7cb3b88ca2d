"""Equivalence and identity checks behind the ``verify`` command.

Every check runs the filters step by step on one simulated trajectory and
reduces a per-step residual to its maximum. A check passes when that
maximum is within tolerance; otherwise the first offending step is kept.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from rich.table import Table

from .exceptions import DefinitenessError
from .filters import (
    ADAPTIVE_LAMBDA,
    VARIANTS,
    ChandrasekharFilterState,
    KernelStrategy,
    RiccatiFilterState,
    chandrasekhar_init,
    chandrasekhar_step,
    imcckf_riccati_step,
    imcckf_two_stage_step,
    kf_step,
    lemma1_residual,
    riccati_init,
)
from .linalg import Mat, spd_factor
from .statespace import LtiModel, ShotNoiseSpec, Trajectory, simulate
from .utils import render_table

__all__ = [
    "DEFAULT_TOLERANCE",
    "CheckResult",
    "VerificationReport",
    "verify_model",
    "render_verification",
]

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE: float = 1e-8
# λ = 1 degeneracy and two-form agreement are checked tighter
DEGENERACY_TOLERANCE: float = 1e-12
TWO_STAGE_TOLERANCE: float = 1e-10


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check.

    Attributes:
        name: Check identifier, e.g. ``"state:alg2"``.
        max_residual: Largest per-step residual.
        tolerance: Pass threshold.
        failing_step: First step whose residual exceeded ``tolerance``.
    """

    name: str
    max_residual: float
    tolerance: float
    failing_step: int | None = None

    @property
    def passed(self) -> bool:
        """True if every step was within tolerance."""
        return self.failing_step is None

    def to_json(self) -> dict[str, Any]:
        """Encode for the JSON output format."""
        return {
            "check": self.name,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "failing_step": self.failing_step,
        }


@dataclass(frozen=True)
class VerificationReport:
    """All checks run on one model."""

    lam: float
    alpha: int
    steps: int
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        """True iff every check passed."""
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        """Checks that failed."""
        return [c for c in self.checks if not c.passed]

    def to_json(self) -> dict[str, Any]:
        """Encode for the JSON output format."""
        return {
            "lambda": self.lam,
            "alpha": self.alpha,
            "steps": self.steps,
            "passed": self.passed,
            "checks": [c.to_json() for c in self.checks],
        }


def _reduce(name: str, residuals: Sequence[float], tolerance: float) -> CheckResult:
    worst = max(residuals, default=0.0)
    failing = next((k for k, r in enumerate(residuals) if not r <= tolerance), None)
    result = CheckResult(name, float(worst), tolerance, failing)
    logger.info(
        "%s: max residual %.3e (tol %.1e) %s",
        name,
        result.max_residual,
        tolerance,
        "ok" if result.passed else f"FAILED at step {failing}",
    )
    return result


def _sequence_errors(seq: Sequence[Mat], ref: Sequence[Mat]) -> list[float]:
    # Relative to the largest reference entry over the whole sequence
    scale = max((float(np.max(np.abs(r))) for r in ref), default=0.0)
    scale = scale if scale > 0.0 else 1.0
    return [float(np.max(np.abs(a - b), initial=0.0)) / scale for a, b in zip(seq, ref)]


def _run(
    init: Any, step: Callable[[Any, Mat], Any], ys: Sequence[Mat]
) -> list[Any]:
    states = [init]
    for y in ys:
        states.append(step(states[-1], y))
    return states


def _riccati_states(
    model: LtiModel, ys: Sequence[Mat], lam: float, two_stage: bool = False
) -> list[RiccatiFilterState]:
    strategy = KernelStrategy.constant(lam)
    stepper = imcckf_two_stage_step if two_stage else imcckf_riccati_step
    return _run(riccati_init(model), lambda s, y: stepper(s, y, model, strategy), ys)


def _chandrasekhar_states(
    model: LtiModel, ys: Sequence[Mat], lam: float, variant: str, rel_tol: float | None
) -> list[ChandrasekharFilterState]:
    init = chandrasekhar_init(model, lam, variant, rel_tol)  # type: ignore[arg-type]
    return _run(init, lambda s, y: chandrasekhar_step(s, y, model, lam), ys)


def _spd_failures(states: Sequence[ChandrasekharFilterState]) -> list[float]:
    out: list[float] = []
    for s in states:
        try:
            spd_factor(s.innovation_cov, "innovation covariance")
            out.append(0.0)
        except DefinitenessError:
            out.append(1.0)
    return out


def verify_model(
    model: LtiModel,
    lam: float = ADAPTIVE_LAMBDA,
    N: int = 300,
    seed: int = 0,
    shot: ShotNoiseSpec | None = None,
    trajectory: Trajectory | None = None,
    reference_lambda: float | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
    rel_tol: float | None = None,
) -> VerificationReport:
    """Run the equivalence and identity suite on one model.

    The Riccati IMCC-KF is the oracle. Its λ is ``reference_lambda`` when
    given, which lets a mismatched comparison be injected on purpose.

    Args:
        model: Model to check.
        lam: Constant adjusting weight for the Chandrasekhar variants.
        N: Trajectory length when ``trajectory`` is not given.
        seed: Simulation seed when ``trajectory`` is not given.
        shot: Impulsive-noise protocol for the simulated trajectory.
        trajectory: Measurements to use instead of simulating.
        reference_lambda: λ for the Riccati oracle; defaults to ``lam``.
        tolerance: Relative tolerance of the equivalence checks.
        rel_tol: Trim tolerance for the Chandrasekhar initialization.

    Returns:
        The report; ``passed`` is True iff every check passed.
    """
    if trajectory is None:
        trajectory = simulate(model, N, shot, seed)
    ys = [trajectory.measurement(k) for k in range(trajectory.N + 1)]
    ref_lam = lam if reference_lambda is None else reference_lambda
    checks: list[CheckResult] = []

    # λ = 1 degeneracy of the correntropy filter
    kf = _run(riccati_init(model), lambda s, y: kf_step(s, y, model), ys)
    unit = _riccati_states(model, ys, 1.0)
    checks.append(
        _reduce(
            "degeneracy:kf",
            _sequence_errors([s.x_pred for s in unit], [s.x_pred for s in kf]),
            DEGENERACY_TOLERANCE,
        )
    )

    oracle = _riccati_states(model, ys, ref_lam)
    oracle_x = [s.x_pred for s in oracle]
    oracle_p = [s.p_pred for s in oracle]

    two_stage = _riccati_states(model, ys, lam, two_stage=True)
    checks.append(
        _reduce(
            "state:imcc-two-stage",
            _sequence_errors([s.x_pred for s in two_stage], oracle_x),
            TWO_STAGE_TOLERANCE,
        )
    )

    runs: dict[str, list[ChandrasekharFilterState]] = {}
    for variant in VARIANTS:
        states = _chandrasekhar_states(model, ys, lam, variant, rel_tol)
        runs[variant] = states
        checks.append(
            _reduce(
                f"state:{variant}",
                _sequence_errors([s.x_pred for s in states], oracle_x),
                tolerance,
            )
        )

        # Π₀ + Σ_{j≤k} L_j M_j L_jᵀ against the oracle's P_{k+1|k}
        acc = np.array(model.Pi0, dtype=np.float64, copy=True)
        rebuilt: list[Mat] = []
        for s in states[:-1]:
            acc = acc + s.factors.product()
            rebuilt.append(0.5 * (acc + acc.T))
        checks.append(
            _reduce(f"covariance:{variant}", _sequence_errors(rebuilt, oracle_p[1:]), tolerance)
        )

        lemma = [
            lemma1_residual(cur, prev, model, lam)
            / (1.0 + float(np.linalg.norm(prev.factors.product())))
            for prev, cur in zip(states[:-1], states[1:])
        ]
        checks.append(_reduce(f"lemma:{variant}", lemma, tolerance))
        checks.append(_reduce(f"innovation-spd:{variant}", _spd_failures(states), 0.0))
        alpha0 = states[0].alpha
        checks.append(
            _reduce(
                f"alpha-constant:{variant}",
                [float(abs(s.alpha - alpha0)) for s in states],
                0.0,
            )
        )

    first = runs[VARIANTS[0]]
    for variant in VARIANTS[1:]:
        checks.append(
            _reduce(
                f"agreement:{VARIANTS[0]}-{variant}",
                _sequence_errors([s.x_pred for s in runs[variant]], [s.x_pred for s in first]),
                tolerance,
            )
        )

    # propagated inverse against the directly updated innovation covariance
    eye = np.eye(model.m)
    woodbury = []
    for s3, s2 in zip(runs["alg3"], runs["alg2"]):
        assert s3.re_inv is not None and s2.re is not None
        woodbury.append(float(np.max(np.abs(s3.re_inv @ s2.re - eye), initial=0.0)))
    checks.append(_reduce("woodbury:alg3", woodbury, tolerance))

    return VerificationReport(
        lam=float(lam),
        alpha=first[0].alpha,
        steps=len(ys),
        checks=tuple(checks),
    )


def render_verification(report: VerificationReport) -> str:
    """Format a report as a text table."""
    table = Table(
        title=f"Verification (lambda={report.lam:.6g}, alpha={report.alpha}, "
        f"steps={report.steps})",
        show_header=True,
        header_style="bold cyan",
    )
    table.add_column("Check", style="bold")
    table.add_column("Max residual", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Result", justify="center")
    for c in report.checks:
        verdict = "PASS" if c.passed else f"FAIL (step {c.failing_step})"
        table.add_row(c.name, f"{c.max_residual:.3e}", f"{c.tolerance:.0e}", verdict)
    return render_table(table)
