"""Linear time-invariant state-space models and trajectory simulation.

This module defines the model every filter consumes, the shot (impulsive)
noise protocol used in the benchmark, the seeded simulator, and the JSON
persistence of models and trajectories.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray

from .exceptions import (
    ConfigurationError,
    DefinitenessError,
    SchemaError,
    ShapeError,
    SymmetryError,
)
from .linalg import (
    Mat,
    as_matrix,
    check_symmetric,
    matrix_from_json,
    matrix_to_json,
    psd_factor,
    spd_factor,
    spd_inverse,
)

__all__ = [
    "LtiModel",
    "ShotNoiseSpec",
    "Trajectory",
    "SATELLITE_PI0",
    "satellite_model",
    "make_rng",
    "simulate",
    "save_trajectory",
    "load_trajectory",
    "save_model",
    "load_model",
    "model_to_json",
    "model_from_json",
    "trajectory_summary",
]

logger = logging.getLogger(__name__)

MODEL_KEYS: tuple[str, ...] = ("F", "G", "H", "Q", "R", "x0_mean", "Pi0")

SATELLITE_PI0: Mat = np.diag([1.0, 1.0, 1.0, 1e-2])

ShotTarget = Literal["measurement", "process", "both"]
InitialState = Literal["sampled", "mean"]


def _check_psd(a: Mat, name: str) -> None:
    if a.size == 0:
        return
    eig_min = float(np.min(np.linalg.eigvalsh(a)))
    if eig_min < -1e-10 * max(1.0, float(np.linalg.norm(a))):
        raise DefinitenessError(f"Invalid {name}: not positive semidefinite (λmin={eig_min:.3e}).")


@dataclass(frozen=True)
class LtiModel:
    """Constant-coefficient model ``x_{k+1} = F x_k + G w_k``, ``y_k = H x_k + v_k``.

    Attributes:
        F: n×n transition matrix.
        G: n×q noise input matrix.
        H: m×n observation matrix.
        Q: q×q process-noise covariance (PSD).
        R: m×m measurement-noise covariance (PD).
        x0_mean: n×1 initial state mean.
        Pi0: n×n initial state covariance (PSD).
    """

    F: Mat
    G: Mat
    H: Mat
    Q: Mat
    R: Mat
    x0_mean: Mat
    Pi0: Mat

    def __post_init__(self) -> None:
        for key in MODEL_KEYS:
            object.__setattr__(self, key, as_matrix(getattr(self, key), key))
        n = self.F.shape[0]
        q = self.G.shape[1]
        m = self.H.shape[0]
        expected = {
            "F": (n, n),
            "G": (n, q),
            "H": (m, n),
            "Q": (q, q),
            "R": (m, m),
            "x0_mean": (n, 1),
            "Pi0": (n, n),
        }
        for key, shape in expected.items():
            if getattr(self, key).shape != shape:
                raise ShapeError(
                    f"Invalid model matrix {key}: expected shape {shape}, "
                    f"got {getattr(self, key).shape}."
                )
        for key in ("Q", "R", "Pi0"):
            check_symmetric(getattr(self, key), key)
        _check_psd(self.Q, "Q")
        _check_psd(self.Pi0, "Pi0")
        if m:
            spd_factor(self.R, "R")

    @property
    def n(self) -> int:
        """State dimension."""
        return int(self.F.shape[0])

    @property
    def m(self) -> int:
        """Measurement dimension."""
        return int(self.H.shape[0])

    @property
    def q(self) -> int:
        """Process-noise dimension."""
        return int(self.G.shape[1])

    @cached_property
    def gqg(self) -> Mat:
        """``G·Q·Gᵀ``, the process-noise contribution to the covariance."""
        return self.G @ self.Q @ self.G.T

    @cached_property
    def r_inv(self) -> Mat:
        """``R⁻¹``, used for the Mahalanobis innovation norm."""
        return spd_inverse(self.R, name="R")


def satellite_model(q4: float) -> LtiModel:
    """Build the four-state in-track satellite motion model.

    Args:
        q4: Variance of the only excited process-noise channel.

    Returns:
        Model with ``G = I₄``, ``H = [1, 0, 0, 0]``, ``R = 1``, zero initial
        mean and ``Pi0 = diag(1, 1, 1, 0.01)``.

    Raises:
        ValueError: If ``q4`` is not positive.
    """
    if not q4 > 0:
        raise ValueError(f"Invalid q4: {q4}. Must be positive.")
    F = np.array(
        [
            [1.0, 1.0, 0.5, 0.5],
            [0.0, 1.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.606],
        ]
    )
    return LtiModel(
        F=F,
        G=np.eye(4),
        H=np.array([[1.0, 0.0, 0.0, 0.0]]),
        Q=np.diag([0.0, 0.0, 0.0, q4]),
        R=np.array([[1.0]]),
        x0_mean=np.zeros((4, 1)),
        Pi0=SATELLITE_PI0.copy(),
    )


# --- SHOT NOISE ---


@dataclass(frozen=True)
class ShotNoiseSpec:
    """Impulsive-noise protocol.

    A fixed fraction of the time instants in ``[window_start, window_end]``
    is drawn without replacement; at each, every targeted channel receives a
    positive impulse whose magnitude is drawn uniformly from ``magnitudes``.

    Attributes:
        corrupt_fraction: Fraction of the window that is corrupted.
        window_start: First eligible time index.
        window_end: Last eligible time index; None means ``N - 1``.
        magnitudes: Admissible impulse magnitudes.
        targets: ``"measurement"`` (all of ``v_k``), ``"process"`` (channels
            of ``w_k`` with nonzero variance) or ``"both"``.
    """

    corrupt_fraction: float = 0.10
    window_start: int = 21
    window_end: int | None = None
    magnitudes: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    targets: ShotTarget = "both"

    def __post_init__(self) -> None:
        if not 0.0 <= self.corrupt_fraction <= 1.0:
            raise ConfigurationError(
                f"Invalid corrupt_fraction: {self.corrupt_fraction}. Must be in [0, 1]."
            )
        if not self.magnitudes:
            raise ConfigurationError("Invalid magnitudes: at least one value is required.")
        if self.targets not in ("measurement", "process", "both"):
            raise ConfigurationError(
                f"Invalid targets: {self.targets}. Must be 'measurement', 'process' or 'both'."
            )
        object.__setattr__(self, "magnitudes", tuple(float(v) for v in self.magnitudes))

    def window(self, N: int) -> tuple[int, int]:
        """Return the inclusive corruption window for a run of length ``N``.

        Raises:
            ConfigurationError: If the window is not inside ``[0, N - 1]``.
        """
        end = N - 1 if self.window_end is None else self.window_end
        if not 0 <= self.window_start <= end <= N - 1:
            raise ConfigurationError(
                f"Invalid shot window [{self.window_start}, {end}]: must lie in [0, {N - 1}]."
            )
        return self.window_start, end

    def corrupted_count(self, N: int) -> int:
        """Number of corrupted instants, rounding half up."""
        start, end = self.window(N)
        return int(math.floor(self.corrupt_fraction * (end - start + 1) + 0.5))

    def to_json(self) -> dict[str, Any]:
        """Encode as the ``shot`` config section."""
        return {
            "corrupt_fraction": self.corrupt_fraction,
            "window_start": self.window_start,
            "window_end": self.window_end,
            "magnitudes": list(self.magnitudes),
            "targets": self.targets,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> ShotNoiseSpec:
        """Decode the ``shot`` config section; missing keys keep defaults."""
        allowed = {"corrupt_fraction", "window_start", "window_end", "magnitudes", "targets"}
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigurationError(f"Unknown shot keys: {sorted(unknown)}.")
        kwargs = dict(obj)
        if "magnitudes" in kwargs:
            kwargs["magnitudes"] = tuple(kwargs["magnitudes"])
        return cls(**kwargs)


# --- TRAJECTORY ---


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated realization.

    Rows are time indices: ``states[k]`` is ``x_k``, ``measurements[k]`` is
    ``y_k`` for ``k = 0..N``; ``process_noise[k]`` drives ``x_{k+1}``.

    Attributes:
        states: (N+1)×n true states.
        measurements: (N+1)×m measurements.
        seed: Seed the realization was drawn with.
        process_noise: N×q realized ``w_k`` (None if not recorded).
        measurement_noise: (N+1)×m realized ``v_k`` (None if not recorded).
        corrupted: Sorted corrupted time indices.
        model: The generating model, if known.
    """

    states: NDArray[np.float64]
    measurements: NDArray[np.float64]
    seed: int
    process_noise: NDArray[np.float64] | None = None
    measurement_noise: NDArray[np.float64] | None = None
    corrupted: tuple[int, ...] = ()
    model: LtiModel | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.states.ndim != 2 or self.measurements.ndim != 2:
            raise ShapeError("Trajectory arrays must be two-dimensional.")
        if self.states.shape[0] != self.measurements.shape[0]:
            raise ShapeError(
                f"Trajectory has {self.states.shape[0]} states but "
                f"{self.measurements.shape[0]} measurements."
            )
        for arr in (self.states, self.measurements, self.process_noise, self.measurement_noise):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def N(self) -> int:
        """Number of transitions; there are ``N + 1`` time points."""
        return int(self.states.shape[0] - 1)

    @property
    def n(self) -> int:
        """State dimension."""
        return int(self.states.shape[1])

    @property
    def m(self) -> int:
        """Measurement dimension."""
        return int(self.measurements.shape[1])

    def state(self, k: int) -> Mat:
        """Return ``x_k`` as a column."""
        return self.states[k].reshape(-1, 1)

    def measurement(self, k: int) -> Mat:
        """Return ``y_k`` as a column."""
        return self.measurements[k].reshape(-1, 1)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.corrupted == other.corrupted
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.measurements, other.measurements)
            and _optional_equal(self.process_noise, other.process_noise)
            and _optional_equal(self.measurement_noise, other.measurement_noise)
        )


def _optional_equal(a: NDArray[np.float64] | None, b: NDArray[np.float64] | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return bool(np.array_equal(a, b))


def make_rng(seed: int) -> np.random.Generator:
    """Return the package's generator: numpy ``Philox`` keyed by ``seed``.

    Philox is counter-based, so streams are identical across platforms.
    """
    if seed < 0:
        raise ValueError(f"Invalid seed: {seed}. Must be non-negative.")
    return np.random.Generator(np.random.Philox(seed))


def simulate(
    model: LtiModel,
    N: int,
    shot: ShotNoiseSpec | None = None,
    seed: int = 0,
    initial_state: InitialState = "sampled",
) -> Trajectory:
    """Draw one trajectory of ``model`` over ``N`` transitions.

    Draw order is fixed (initial state, process noise, measurement noise,
    corrupted instants, impulse magnitudes) so a seed identifies the
    realization completely.

    Args:
        model: Model to simulate.
        N: Number of transitions (at least 1).
        shot: Impulsive-noise protocol, or None for Gaussian noise only.
        seed: Generator seed.
        initial_state: ``"sampled"`` draws ``x_0 ~ N(x̄₀, Π₀)``; ``"mean"`` starts
            at ``x̄₀`` while still consuming the same draws, so the noise
            realizations match the sampled case.

    Returns:
        The simulated trajectory.

    Raises:
        ValueError: If ``N < 1`` or ``initial_state`` is unknown.
        DefinitenessError: If ``R`` is singular.
        ConfigurationError: If the shot window does not fit ``[0, N - 1]``.
    """
    if N < 1:
        raise ValueError(f"Invalid N: {N}. Must be at least 1.")
    if initial_state not in ("sampled", "mean"):
        raise ValueError(
            f"Invalid initial_state: {initial_state}. Must be 'sampled' or 'mean'."
        )
    chol_r = spd_factor(model.R, "R") if model.m else np.zeros((0, 0))
    window = shot.window(N) if shot is not None else None

    rng = make_rng(seed)
    s_pi = psd_factor(model.Pi0)
    s_q = psd_factor(model.Q)

    x0 = model.x0_mean[:, 0] + s_pi @ rng.standard_normal(s_pi.shape[1])
    if initial_state == "mean":
        x0 = model.x0_mean[:, 0].copy()
    w = rng.standard_normal((N, s_q.shape[1])) @ s_q.T
    v = rng.standard_normal((N + 1, model.m)) @ chol_r.T

    corrupted: tuple[int, ...] = ()
    if shot is not None and window is not None:
        start, end = window
        count = shot.corrupted_count(N)
        instants = np.sort(rng.choice(np.arange(start, end + 1), size=count, replace=False))
        magnitudes = np.asarray(shot.magnitudes)
        if shot.targets in ("measurement", "both"):
            v[instants] += rng.choice(magnitudes, size=(count, model.m))
        if shot.targets in ("process", "both"):
            channels = np.flatnonzero(np.diag(model.Q) > 0.0)
            impulses = rng.choice(magnitudes, size=(count, channels.size))
            w[np.ix_(instants, channels)] += impulses
        corrupted = tuple(int(k) for k in instants)
        logger.debug("seed %d: %d corrupted instants", seed, count)

    states = np.empty((N + 1, model.n))
    states[0] = x0
    gw = w @ model.G.T
    for k in range(N):
        states[k + 1] = model.F @ states[k] + gw[k]
    measurements = states @ model.H.T + v

    return Trajectory(
        states=states,
        measurements=measurements,
        seed=seed,
        process_noise=w,
        measurement_noise=v,
        corrupted=corrupted,
        model=model,
    )


# --- PERSISTENCE ---


def model_to_json(model: LtiModel) -> dict[str, Any]:
    """Encode the seven model matrices."""
    return {key: matrix_to_json(getattr(model, key)) for key in MODEL_KEYS}


def model_from_json(obj: Any) -> LtiModel:
    """Decode a model written by :func:`model_to_json`.

    Raises:
        SchemaError: If a key is missing, a matrix is malformed, or the
            matrices do not form a valid model.
    """
    if not isinstance(obj, dict):
        raise SchemaError("Invalid model: expected a JSON object.")
    missing = [key for key in MODEL_KEYS if key not in obj]
    if missing:
        raise SchemaError(f"Invalid model: missing keys {missing}.")
    matrices = {key: matrix_from_json(obj[key], key) for key in MODEL_KEYS}
    try:
        return LtiModel(**matrices)
    except (ShapeError, SymmetryError, DefinitenessError) as e:
        raise SchemaError(f"Invalid model: {e}") from e


def _read_json(path: str | Path, what: str) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"Error parsing {what} file {path}: {e}") from e
    except OSError as e:
        raise SchemaError(f"Error reading {what} file {path}: {e}") from e


def _write_json(path: str | Path, data: Any, what: str) -> None:
    target = Path(path)
    try:
        if str(target.parent) not in ("", "."):
            target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=1)
            f.write("\n")
    except OSError as e:
        raise SchemaError(f"Error writing {what} file {path}: {e}") from e


def save_model(model: LtiModel, path: str | Path) -> None:
    """Write ``model`` as JSON."""
    _write_json(path, model_to_json(model), "model")


def load_model(path: str | Path) -> LtiModel:
    """Read a model JSON file."""
    return model_from_json(_read_json(path, "model"))


def save_trajectory(t: Trajectory, path: str | Path) -> None:
    """Write ``t`` as JSON at full float precision.

    Raises:
        SchemaError: On I/O failure.
    """
    data: dict[str, Any] = {
        "seed": t.seed,
        "N": t.N,
        "states": t.states.tolist(),
        "measurements": t.measurements.tolist(),
        "corrupted": list(t.corrupted),
    }
    if t.process_noise is not None:
        data["process_noise"] = t.process_noise.tolist()
    if t.measurement_noise is not None:
        data["measurement_noise"] = t.measurement_noise.tolist()
    if t.model is not None:
        data["model"] = model_to_json(t.model)
    _write_json(path, data, "trajectory")


def _rows(data: dict[str, Any], key: str, count: int, width: int | None) -> NDArray[np.float64]:
    try:
        arr = np.asarray(data[key], dtype=np.float64)
    except KeyError as e:
        raise SchemaError(f"Invalid trajectory: missing key '{key}'.") from e
    except (TypeError, ValueError) as e:
        raise SchemaError(f"Invalid trajectory: '{key}' is not a numeric table: {e}") from e
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, width or 0)
    if arr.ndim != 2 or arr.shape[0] != count or (width is not None and arr.shape[1] != width):
        raise SchemaError(
            f"Invalid trajectory: '{key}' has shape {arr.shape}, expected {count} rows"
            + (f" of width {width}." if width is not None else ".")
        )
    return arr


def load_trajectory(path: str | Path) -> Trajectory:
    """Read a trajectory JSON file.

    Raises:
        SchemaError: On I/O failure or any layout mismatch; no partial
            object is returned.
    """
    data = _read_json(path, "trajectory")
    if not isinstance(data, dict):
        raise SchemaError("Invalid trajectory: expected a JSON object.")
    try:
        N = int(data["N"])
        seed = int(data["seed"])
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"Invalid trajectory header: {e}") from e
    states = _rows(data, "states", N + 1, None)
    measurements = _rows(data, "measurements", N + 1, None)
    model = model_from_json(data["model"]) if "model" in data else None
    process_noise = (
        _rows(data, "process_noise", N, model.q if model else None)
        if "process_noise" in data
        else None
    )
    measurement_noise = (
        _rows(data, "measurement_noise", N + 1, measurements.shape[1])
        if "measurement_noise" in data
        else None
    )
    if model is not None and (states.shape[1] != model.n or measurements.shape[1] != model.m):
        raise SchemaError("Invalid trajectory: array widths do not match the embedded model.")
    return Trajectory(
        states=states,
        measurements=measurements,
        seed=seed,
        process_noise=process_noise,
        measurement_noise=measurement_noise,
        corrupted=tuple(int(k) for k in data.get("corrupted", [])),
        model=model,
    )


def trajectory_summary(t: Trajectory) -> dict[str, int]:
    """Return N, n, m and the corrupted-instant count."""
    return {"N": t.N, "n": t.n, "m": t.m, "corrupted": len(t.corrupted)}

