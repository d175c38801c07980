"""
Shared pydantic base classes.
"""

from pydantic import BaseModel, ConfigDict


class StrictModel(BaseModel):
    """Configuration document: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class ArrayModel(BaseModel):
    """Immutable value object that carries NumPy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
