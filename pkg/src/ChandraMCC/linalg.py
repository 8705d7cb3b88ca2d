"""Dense matrix substrate for ChandraMCC.

Matrices are plain ``numpy`` float arrays; vectors are column matrices of
shape ``(n, 1)``. This module adds what the filters need on top of numpy:
shape-checked arithmetic, SPD solves that report the failing pivot, the
Bunch-Kaufman LDLᵀ factorization (LAPACK ``?sytrf`` through
:func:`scipy.linalg.ldl`), low-rank trimming of that factorization, a
pivoted-Cholesky square root for semidefinite sampling, and the JSON matrix
codec shared by every file format.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf, dpstrf

from .exceptions import (
    ConditioningError,
    DefinitenessError,
    SchemaError,
    ShapeError,
    SymmetryError,
)

__all__ = [
    "Mat",
    "LdlFactorization",
    "LowRankFactors",
    "as_matrix",
    "column",
    "mat_add",
    "mat_sub",
    "mat_mul",
    "mat_transpose",
    "mat_scale",
    "symmetrize",
    "check_symmetric",
    "spd_factor",
    "spd_solve",
    "spd_inverse",
    "invert_small",
    "ldlt_bunch_kaufman",
    "low_rank_trim",
    "psd_factor",
    "max_relative_error",
    "matrix_to_json",
    "matrix_from_json",
    "SYMMETRY_TOL",
]

logger = logging.getLogger(__name__)

Mat = NDArray[np.float64]

# Relative asymmetry ‖A − Aᵀ‖_F / ‖A‖_F accepted before symmetrizing.
SYMMETRY_TOL: float = 1e-8


def as_matrix(value: ArrayLike, name: str = "matrix") -> Mat:
    """Convert ``value`` into a finite 2-D float matrix.

    Scalars become 1×1 matrices and 1-D sequences become column vectors.

    Args:
        value: Anything numpy can turn into a float array.
        name: Name used in error messages.

    Returns:
        A new C-contiguous float64 array with ``ndim == 2``.

    Raises:
        ShapeError: If the input has more than two dimensions.
        ValueError: If any entry is NaN or infinite.
    """
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim > 2:
        raise ShapeError(f"Invalid {name}: expected at most 2 dimensions, got {arr.ndim}.")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"Invalid {name}: entries must be finite.")
    return np.ascontiguousarray(arr)


def column(values: ArrayLike) -> Mat:
    """Return ``values`` as an ``(n, 1)`` column matrix."""
    return np.asarray(values, dtype=np.float64).reshape(-1, 1)


# --- ARITHMETIC ---


def _require_same_shape(a: Mat, b: Mat, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"Cannot {op} matrices of shapes {a.shape} and {b.shape}.")


def mat_add(a: Mat, b: Mat) -> Mat:
    """Return ``a + b``.

    Raises:
        ShapeError: If the shapes differ.
    """
    _require_same_shape(a, b, "add")
    return a + b


def mat_sub(a: Mat, b: Mat) -> Mat:
    """Return ``a - b``.

    Raises:
        ShapeError: If the shapes differ.
    """
    _require_same_shape(a, b, "subtract")
    return a - b


def mat_mul(a: Mat, b: Mat) -> Mat:
    """Return the matrix product ``a @ b``.

    Raises:
        ShapeError: If the inner dimensions differ.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot multiply matrices of shapes {a.shape} and {b.shape}.")
    return a @ b


def mat_transpose(a: Mat) -> Mat:
    """Return a contiguous copy of ``aᵀ``."""
    return np.ascontiguousarray(a.T)


def mat_scale(a: Mat, factor: float) -> Mat:
    """Return ``factor · a``."""
    return float(factor) * a


def symmetrize(a: Mat) -> Mat:
    """Return the symmetric part ``(a + aᵀ) / 2``."""
    return 0.5 * (a + a.T)


def check_symmetric(a: Mat, name: str = "matrix", tol: float = SYMMETRY_TOL) -> None:
    """Validate that ``a`` is square and symmetric within ``tol`` relative.

    Raises:
        ShapeError: If ``a`` is not square.
        SymmetryError: If ``‖a − aᵀ‖_F > tol · ‖a‖_F``.
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"Invalid {name}: expected a square matrix, got shape {a.shape}.")
    if a.size == 0:
        return
    asym = float(np.linalg.norm(a - a.T))
    if asym > tol * float(np.linalg.norm(a)):
        raise SymmetryError(f"Invalid {name}: asymmetry {asym:.3e} exceeds tolerance.")


# --- SPD SOLVES ---


def spd_factor(a: Mat, name: str = "matrix") -> Mat:
    """Compute the lower Cholesky factor of an SPD matrix.

    Args:
        a: Symmetric positive definite matrix.
        name: Name used in error messages.

    Returns:
        Lower-triangular ``c`` with ``a = c cᵀ``.

    Raises:
        DefinitenessError: If a pivot is not positive; ``pivot`` names it.
    """
    c, info = dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise DefinitenessError(
            f"{name} is not positive definite (pivot {info - 1} failed).", pivot=info - 1
        )
    if info < 0:
        raise ValueError(f"Invalid argument {-info} passed to dpotrf.")
    return np.asarray(c)


def spd_solve(a: Mat, b: Mat, *, check: bool = True, name: str = "matrix") -> Mat:
    """Solve ``a · x = b`` for symmetric positive definite ``a``.

    Args:
        a: n×n SPD matrix.
        b: n×m right-hand side.
        check: Validate shapes and symmetry first. Inner filter loops pass
            False after validating their inputs once.
        name: Name used in error messages.

    Returns:
        The n×m solution; no explicit inverse is formed.

    Raises:
        ShapeError: If ``a`` is not square or ``b`` has the wrong row count.
        SymmetryError: If ``a`` is not symmetric within tolerance.
        DefinitenessError: If ``a`` is not positive definite.
    """
    if check:
        check_symmetric(a, name)
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ShapeError(f"Cannot solve {a.shape} system with right-hand side {b.shape}.")
    if a.shape[0] == 0:
        return np.zeros_like(b, dtype=np.float64)
    if a.shape[0] == 1:
        return b / _positive_pivot(a, name)
    c = spd_factor(a, name)
    return np.asarray(cho_solve((c, True), b, check_finite=False))


def _positive_pivot(a: Mat, name: str) -> float:
    # order-1 systems skip LAPACK; the scalar is its own Cholesky pivot
    pivot = float(a[0, 0])
    if not pivot > 0.0:
        raise DefinitenessError(f"{name} is not positive definite (pivot 0 failed).", pivot=0)
    return pivot


def spd_inverse(a: Mat, *, check: bool = True, name: str = "matrix") -> Mat:
    """Return the explicit inverse of an SPD matrix, symmetrized.

    Only the Chandrasekhar variants that propagate an inverse call this.
    """
    if a.shape[0] == 1:
        return np.array([[1.0 / _positive_pivot(a, name)]])
    inv = spd_solve(a, np.eye(a.shape[0]), check=check, name=name)
    return symmetrize(inv)


def invert_small(a: Mat, step: int | None = None, name: str = "matrix") -> Mat:
    """Invert a small symmetric (possibly indefinite) matrix.

    Used for the α×α inversions of the inverse-propagating variants.

    Raises:
        ConditioningError: If ``a`` is singular to working precision.
    """
    if a.shape[0] == 0:
        return a.copy()
    where = f" at step {step}" if step is not None else ""
    if a.shape[0] == 1:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            inv_scalar = np.float64(1.0) / a[0, 0]
        if not np.isfinite(inv_scalar):
            raise ConditioningError(f"{name} is singular{where}.", step=step)
        return np.array([[inv_scalar]])
    try:
        inv = scipy.linalg.inv(a, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise ConditioningError(f"{name} is singular{where}: {e}", step=step) from e
    if not np.all(np.isfinite(inv)):
        raise ConditioningError(f"{name} is singular{where}.", step=step)
    return symmetrize(inv)


# --- SYMMETRIC INDEFINITE FACTORIZATION ---


@dataclass(frozen=True)
class LdlFactorization:
    """Pivoted factorization ``P·A·Pᵀ = L·D·Lᵀ``.

    Attributes:
        permutation: Row order; ``P[i, permutation[i]] = 1``.
        unit_lower: Unit lower-triangular ``L``.
        block_diag: Symmetric block-diagonal ``D`` with 1×1 and 2×2 blocks.
        blocks: Start index and size of each diagonal block of ``D``.
    """

    permutation: NDArray[np.intp]
    unit_lower: Mat
    block_diag: Mat
    blocks: tuple[tuple[int, int], ...]

    @property
    def n(self) -> int:
        """Order of the factorized matrix."""
        return int(self.block_diag.shape[0])

    @property
    def permutation_matrix(self) -> Mat:
        """The permutation as an explicit matrix ``P``."""
        p = np.zeros((self.n, self.n))
        p[np.arange(self.n), self.permutation] = 1.0
        return p

    def reconstruct(self) -> Mat:
        """Return ``Pᵀ·L·D·Lᵀ·P``, i.e. the factorized matrix."""
        outer = np.zeros_like(self.unit_lower)
        outer[self.permutation] = self.unit_lower
        return outer @ self.block_diag @ outer.T

    def block_magnitudes(self) -> list[float]:
        """Spectral magnitude of each diagonal block, in block order.

        For a 2×2 block this is the larger absolute eigenvalue.
        """
        mags = []
        for start, size in self.blocks:
            blk = self.block_diag[start : start + size, start : start + size]
            if size == 1:
                mags.append(abs(float(blk[0, 0])))
            else:
                mags.append(float(np.max(np.abs(np.linalg.eigvalsh(blk)))))
        return mags


@dataclass(frozen=True)
class LowRankFactors:
    """Factors of a symmetric matrix ``L·M·Lᵀ`` of displacement rank α.

    Attributes:
        L: n×α factor.
        M: α×α symmetric middle factor.
    """

    L: Mat
    M: Mat

    def __post_init__(self) -> None:
        if self.L.ndim != 2 or self.M.shape != (self.L.shape[1], self.L.shape[1]):
            raise ShapeError(
                f"Inconsistent low-rank factors: L {self.L.shape}, M {self.M.shape}."
            )

    @property
    def alpha(self) -> int:
        """Displacement rank (width of ``L``)."""
        return int(self.L.shape[1])

    def product(self) -> Mat:
        """Return ``L·M·Lᵀ``."""
        return self.L @ self.M @ self.L.T


def _block_structure(d: Mat) -> tuple[tuple[int, int], ...]:
    blocks: list[tuple[int, int]] = []
    n = d.shape[0]
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return tuple(blocks)


def ldlt_bunch_kaufman(a: Mat, sym_tol: float = SYMMETRY_TOL) -> LdlFactorization:
    """Factor a symmetric, possibly indefinite or singular, matrix.

    The input is symmetrized first. Pivoting is LAPACK's Bunch-Kaufman
    partial pivoting (threshold ``(1 + √17) / 8``).

    Args:
        a: n×n symmetric matrix.
        sym_tol: Relative asymmetry accepted before symmetrizing.

    Returns:
        The factorization; an empty one when ``n == 0``.

    Raises:
        ShapeError: If ``a`` is not square.
        SymmetryError: If ``a`` is asymmetric beyond ``sym_tol``.
    """
    check_symmetric(a, "LDLᵀ input", tol=sym_tol)
    n = a.shape[0]
    if n == 0:
        empty = np.zeros((0, 0))
        return LdlFactorization(np.zeros(0, dtype=np.intp), empty, empty, ())

    lu, d, perm = scipy.linalg.ldl(symmetrize(a), lower=True, hermitian=True)
    unit_lower = np.ascontiguousarray(lu[perm])
    block_diag = np.ascontiguousarray(d)
    blocks = _block_structure(block_diag)
    logger.debug("LDLᵀ of order %d: %d diagonal blocks", n, len(blocks))
    return LdlFactorization(np.asarray(perm, dtype=np.intp), unit_lower, block_diag, blocks)


def low_rank_trim(
    f: LdlFactorization,
    rel_tol: float | None = None,
    reference_scale: float = 0.0,
) -> LowRankFactors:
    """Keep only the numerically nonzero blocks of an LDLᵀ factorization.

    A block is dropped when its spectral magnitude is at most
    ``rel_tol · max(largest block magnitude, reference_scale)``. 2×2 blocks
    are kept or dropped whole. The kept columns of ``Pᵀ·L`` form ``L₀`` and
    the kept blocks of ``D`` form ``M₀``.

    Args:
        f: Factorization to trim.
        rel_tol: Relative tolerance; defaults to ``n · 1e-12``.
        reference_scale: Optional absolute scale floor, so a matrix that is
            zero up to rounding relative to its inputs trims to rank 0.

    Returns:
        Low-rank factors with ``alpha`` equal to the retained dimension.

    Raises:
        ValueError: If ``rel_tol`` is negative.
    """
    n = f.n
    if rel_tol is None:
        rel_tol = n * 1e-12
    if rel_tol < 0:
        raise ValueError(f"Invalid rel_tol: {rel_tol}. Must be non-negative.")

    mags = f.block_magnitudes()
    threshold = rel_tol * max(max(mags, default=0.0), reference_scale)
    keep: list[int] = []
    for (start, size), mag in zip(f.blocks, mags):
        if mag > threshold:
            keep.extend(range(start, start + size))

    outer = np.zeros_like(f.unit_lower)
    outer[f.permutation] = f.unit_lower
    idx = np.asarray(keep, dtype=np.intp)
    L = np.ascontiguousarray(outer[:, idx]) if n else np.zeros((0, 0))
    M = symmetrize(f.block_diag[np.ix_(idx, idx)]) if n else np.zeros((0, 0))
    return LowRankFactors(L=L, M=M)


# --- SEMIDEFINITE SQUARE ROOT ---


def psd_factor(sigma: Mat, tol: float = 1e-12) -> Mat:
    """Return ``S`` (n×r) with ``S·Sᵀ = sigma`` for a PSD ``sigma``.

    Uses pivoted Cholesky (LAPACK ``dpstrf``); pivots at or below ``tol``
    end the factorization, so zero-variance channels get exactly zero rows.

    Raises:
        DefinitenessError: If ``sigma`` has a clearly negative diagonal.
    """
    check_symmetric(sigma, "covariance")
    n = sigma.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    diag = np.diag(sigma)
    if np.any(diag < -tol):
        bad = int(np.argmin(diag))
        raise DefinitenessError(f"Covariance has negative variance at index {bad}.", pivot=bad)
    if float(np.max(diag)) <= tol:
        return np.zeros((n, 0))

    c, piv, rank, info = dpstrf(symmetrize(sigma), tol=tol, lower=1)
    if info < 0:
        raise ValueError(f"Invalid argument {-info} passed to dpstrf.")
    c = np.tril(c)[:, :rank]
    s = np.zeros((n, rank))
    s[np.asarray(piv) - 1] = c
    return s


# --- COMPARISON ---


def max_relative_error(a: ArrayLike, b: ArrayLike) -> float:
    """Return ``max|a − b| / max|b|`` over all entries.

    The reference ``b`` is taken as a whole (sequence-wide scale), so
    components that stay near zero do not inflate the ratio.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"Cannot compare arrays of shapes {x.shape} and {y.shape}.")
    if x.size == 0:
        return 0.0
    diff = float(np.max(np.abs(x - y)))
    scale = float(np.max(np.abs(y)))
    if scale == 0.0:
        return diff
    return diff / scale


# --- JSON CODEC ---


def matrix_to_json(a: Mat) -> dict[str, Any]:
    """Encode a matrix as ``{"rows", "cols", "data"}`` (row-major)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return {"rows": int(arr.shape[0]), "cols": int(arr.shape[1]), "data": arr.ravel().tolist()}


def matrix_from_json(obj: Any, name: str = "matrix") -> Mat:
    """Decode a matrix written by :func:`matrix_to_json`.

    Plain nested lists are also accepted.

    Raises:
        SchemaError: If the object is malformed.
    """
    try:
        if isinstance(obj, dict):
            rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
            if not isinstance(data, Sequence) or len(data) != rows * cols:
                raise SchemaError(
                    f"Invalid {name}: expected {rows * cols} entries, got "
                    f"{len(data) if isinstance(data, Sequence) else 'none'}."
                )
            return as_matrix(np.asarray(data, dtype=np.float64).reshape(rows, cols), name)
        return as_matrix(obj, name)
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"Invalid {name}: {e}") from e
