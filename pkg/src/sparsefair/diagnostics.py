from __future__ import annotations

from typing import Any


class InvalidInputError(ValueError):
    """Input data violates a contract (non-finite values, missing columns, unknown labels, ...)."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None) -> None:
        super().__init__(message)
        self.row = row
        self.column = column


class NegativeInputError(InvalidInputError):
    """A vector handed to a sparsity measure has a negative component."""

    def __init__(self, index: int | None = None, value: float | None = None, message: str | None = None) -> None:
        super().__init__(
            message
            or f'Negative component {value!r} at index {index}. Sparsity measures need non-negative inputs, '
            'use the exp transform for metrics that can be negative.'
        )
        self.index = index
        self.value = value


class InvalidParamsError(ValueError):
    """Parameters outside their admissible range."""


class ConditionCellEmptyError(ValueError):
    """A (group, true class) cell used by equalized odds has no samples."""

    def __init__(self, group: Any, label: Any) -> None:
        super().__init__(f'Group {group!r} has no samples with y_true={label!r}.')
        self.group = group
        self.label = label


class UndefinedCellError(ValueError):
    """A per-group performance metric is undefined for the data of that group."""

    def __init__(self, message: str, group: Any = None, label: Any = None) -> None:
        super().__init__(message)
        self.group = group
        self.label = label


class DegenerateFitError(ValueError):
    """The least-squares fit has no unique solution."""


class DataWarning(UserWarning):
    """Base class of the non-fatal data conditions collected into reports."""


class ZeroVectorWarning(DataWarning):
    """A sparsity measure received the all-zero vector and returned 0."""


class DegenerateBinsWarning(DataWarning):
    """Quantile binning merged duplicated edges into fewer bins than requested."""


class SmallGroupWarning(DataWarning):
    """A sensitive group is smaller than the configured minimum size."""


class MissingValueWarning(DataWarning):
    """Rows with missing sensitive attributes were rejected."""


class ExcludedRowsWarning(DataWarning):
    """Rows were left out of a partition."""


class DroppedCellWarning(DataWarning):
    """A group was dropped because one of its metric cells is undefined."""
