"""
Dense matrix and singular spectrum value types.
"""

from typing import Any

import numpy as np
from pydantic import Field, field_serializer, field_validator

from opnorm_lab.models.base import ArrayModel
from opnorm_lab.utils.errors import InputValidationError


def finite_matrix(value: Any) -> np.ndarray:
    """
    Convert to a read-only float64 2-D array, rejecting empty or non-finite input.

    Raises:
        InputValidationError: If the input is not a non-empty finite matrix.
    """
    array = np.array(value, dtype=np.float64, copy=True)
    if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] < 1:
        raise InputValidationError(f"expected a non-empty 2-D matrix, got shape {array.shape}")
    if not np.isfinite(array).all():
        raise InputValidationError("matrix contains non-finite entries")
    array.setflags(write=False)
    return array


def spectrum_array(value: Any) -> np.ndarray:
    array = np.array(value, dtype=np.float64, copy=True).ravel()
    if array.size and (array.min() < 0 or np.any(np.diff(array) > 0)):
        raise InputValidationError("singular values must be non-negative and non-increasing")
    array.setflags(write=False)
    return array


class DenseMatrix(ArrayModel):
    """Real N x T matrix; immutable after construction."""

    entries: Any = Field(..., description="Row-major 2-D float64 array of shape (rows, cols)")

    @field_validator("entries", mode="before")
    @classmethod
    def _check_entries(cls, value: Any) -> np.ndarray:
        return finite_matrix(value)

    @field_serializer("entries")
    def _serialize_entries(self, entries: np.ndarray) -> list:
        return entries.tolist()

    @classmethod
    def from_array(cls, array: Any) -> "DenseMatrix":
        """
        Wrap a copy of an array-like.

        Raises:
            InputValidationError: If the array is empty, not 2-D or not finite.
        """
        return cls.model_construct(entries=finite_matrix(array))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "DenseMatrix":
        return cls.from_array(np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "DenseMatrix":
        return cls.from_array(np.eye(n))

    @property
    def rows(self) -> int:
        return int(self.entries.shape[0])

    @property
    def cols(self) -> int:
        return int(self.entries.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    def as_array(self) -> np.ndarray:
        """Read-only view of the entries."""
        return self.entries

    def scaled(self, factor: float) -> "DenseMatrix":
        return DenseMatrix.from_array(self.entries * factor)

    def __add__(self, other: "DenseMatrix") -> "DenseMatrix":
        return DenseMatrix.from_array(self.entries + other.entries)

    def __sub__(self, other: "DenseMatrix") -> "DenseMatrix":
        return DenseMatrix.from_array(self.entries - other.entries)


class SingularSpectrum(ArrayModel):
    """Singular values s_1 >= s_2 >= ... >= s_min(N,T) >= 0."""

    values: Any = Field(..., description="Non-increasing non-negative singular values")

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value: Any) -> np.ndarray:
        return spectrum_array(value)

    @field_serializer("values")
    def _serialize_values(self, values: np.ndarray) -> list:
        return values.tolist()

    @classmethod
    def from_array(cls, values: Any) -> "SingularSpectrum":
        return cls.model_construct(values=spectrum_array(values))

    def __len__(self) -> int:
        return int(self.values.size)

    def __getitem__(self, index: int) -> float:
        return float(self.values[index])

    def top_sum(self, r: int) -> float:
        return float(self.values[:r].sum())
