"""Exception hierarchy for ChandraMCC.

Every error raised deliberately by the package derives from
:class:`ChandraMCCError`, and additionally from the builtin exception that
best describes it, so callers may catch either.
"""

from __future__ import annotations

__all__ = [
    "ChandraMCCError",
    "ShapeError",
    "SymmetryError",
    "DefinitenessError",
    "ConditioningError",
    "SchemaError",
    "ConfigurationError",
    "FilterStepError",
    "ConvergenceError",
]


class ChandraMCCError(Exception):
    """Base class for all package errors."""


class ShapeError(ChandraMCCError, ValueError):
    """Operands have incompatible dimensions."""


class SymmetryError(ChandraMCCError, ValueError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class DefinitenessError(ChandraMCCError, ArithmeticError):
    """A matrix required to be positive definite failed a pivot.

    Attributes:
        pivot: Zero-based index of the failing pivot, or None if unknown.
    """

    def __init__(self, message: str, pivot: int | None = None) -> None:
        super().__init__(message)
        self.pivot = pivot


class ConditioningError(ChandraMCCError, ArithmeticError):
    """A small matrix that must be inverted is numerically singular.

    Attributes:
        step: Time index at which the inversion failed.
    """

    def __init__(self, message: str, step: int | None = None) -> None:
        super().__init__(message)
        self.step = step


class SchemaError(ChandraMCCError, ValueError):
    """A JSON document does not match the expected layout."""


class ConfigurationError(ChandraMCCError, ValueError):
    """Invalid configuration value, override or option combination."""


class FilterStepError(ChandraMCCError, RuntimeError):
    """A filter recursion failed; carries where it happened.

    Attributes:
        filter_name: Name of the failing filter.
        step: Time index of the failing step.
        run: Monte-Carlo run index, if the failure happened inside a batch.
    """

    def __init__(
        self,
        message: str,
        filter_name: str,
        step: int,
        run: int | None = None,
    ) -> None:
        super().__init__(message)
        self.filter_name = filter_name
        self.step = step
        self.run = run

    def __reduce__(self) -> tuple[type[FilterStepError], tuple[str, str, int, int | None]]:
        # keeps the context when raised inside a worker process
        return (self.__class__, (str(self), self.filter_name, self.step, self.run))

    def with_run(self, run: int) -> FilterStepError:
        """Return a copy of this error annotated with a run index."""
        err = FilterStepError(
            f"run {run}: {self}", filter_name=self.filter_name, step=self.step, run=run
        )
        err.__cause__ = self.__cause__
        return err


class ConvergenceError(ChandraMCCError, RuntimeError):
    """An iterative procedure did not converge."""
