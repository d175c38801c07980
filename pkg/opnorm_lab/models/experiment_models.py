"""
Experiment configuration documents and results.

Configs are strict (unknown keys rejected) and versioned by
`schema_version`. The experiment-specific payload is a union discriminated
by `kind`, which defaults to the experiment name.
"""

import hashlib
import json
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, Field, NonNegativeInt, PositiveInt, model_validator

from opnorm_lab.models.base import StrictModel
from opnorm_lab.models.factor_models import REFERENCE_BETAS, REFERENCE_RANKS, ThresholdVariant
from opnorm_lab.models.moment_models import EstimatorConfig, MomentModelConfig
from opnorm_lab.models.process_models import MAFilterSpec, SubGaussianSpec
from opnorm_lab.utils.config import config

ExperimentName = Literal["table1", "bound_scaling", "moment_consistency", "tail_check"]

DEFAULT_TAIL_U = (0.5, 1.0, 1.5, 2.0)


def _trig_innovations() -> SubGaussianSpec:
    return SubGaussianSpec(family="trig_process")


class Table1Config(StrictModel):
    """Maximal-rank Monte Carlo on the reference factor design."""

    kind: Literal["table1"] = "table1"
    variants: List[ThresholdVariant] = Field(default_factory=lambda: ["psi1", "psi2", "psi3"], min_length=1)
    k_max: PositiveInt = Field(default=config.K_MAX, description="Factors partialled out for sigma-hat")
    sigma: float = Field(default=1.0, ge=0.0, description="Noise scale; 0 is the noiseless override")
    rank_map: List[Tuple[float, NonNegativeInt]] = Field(
        default_factory=lambda: list(zip(REFERENCE_BETAS, REFERENCE_RANKS)), min_length=1
    )


class _ProcessConfig(StrictModel):
    innovations: SubGaussianSpec = Field(default_factory=_trig_innovations)
    grid: List[float] = Field(default_factory=lambda: list(REFERENCE_BETAS), min_length=1)
    filter: Optional[MAFilterSpec] = Field(default=None, description="Optional MA filter")
    burn_in: Optional[NonNegativeInt] = Field(default=None, description="Presample width; defaults to L")
    calibration_reps: int = Field(default=50, ge=20, description="Independent reps used to calibrate C")


class BoundScalingConfig(_ProcessConfig):
    """Observed sup-norm against the uniform bound across sizes."""

    kind: Literal["bound_scaling"] = "bound_scaling"
    coverage: float = Field(default=0.95, gt=0.0, lt=1.0, description="Quantile used for the conservative C")


class MomentConsistencyConfig(StrictModel):
    """Moment estimator error and noise term across sizes."""

    kind: Literal["moment_consistency"] = "moment_consistency"
    model: MomentModelConfig = Field(default_factory=MomentModelConfig)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)


class TailCheckConfig(_ProcessConfig):
    """Exceedance frequencies of the tail bound."""

    kind: Literal["tail_check"] = "tail_check"
    u_values: List[float] = Field(default_factory=lambda: list(DEFAULT_TAIL_U), min_length=1)
    calibration_reps: int = Field(default=200, ge=20, description="Independent reps used to calibrate C")


SubConfig = Annotated[
    Union[Table1Config, BoundScalingConfig, MomentConsistencyConfig, TailCheckConfig],
    Field(discriminator="kind"),
]


class ExperimentConfig(StrictModel):
    """A Monte Carlo experiment."""

    schema_version: Literal[1] = 1
    experiment: ExperimentName = Field(..., description="Experiment to run")
    dims_list: List[Tuple[PositiveInt, PositiveInt]] = Field(..., min_length=1, description="(N, T) sizes")
    reps: PositiveInt = Field(default=config.DEFAULT_REPS, description="Replications per size")
    base_seed: int = Field(default=0, ge=0, lt=2**64, description="64-bit base seed")
    sub_config: SubConfig

    @model_validator(mode="before")
    @classmethod
    def _default_kind(cls, data: Any) -> Any:
        if isinstance(data, dict) and "experiment" in data:
            data = dict(data)
            sub = data.get("sub_config")
            if sub is None:
                data["sub_config"] = {"kind": data["experiment"]}
            elif isinstance(sub, dict) and "kind" not in sub:
                data["sub_config"] = {**sub, "kind": data["experiment"]}
        return data

    @model_validator(mode="after")
    def _check_kind(self) -> "ExperimentConfig":
        if self.sub_config.kind != self.experiment:
            raise ValueError(f"sub_config kind {self.sub_config.kind!r} does not match {self.experiment!r}")
        return self

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (defaults included)."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class CellSummary(BaseModel):
    """Aggregate of one (size, series) cell."""

    N: int
    T: int
    series: str = Field(..., description="Threshold variant, objective or other series label")
    n: int = Field(..., description="Number of estimates aggregated")
    truth: Optional[float] = Field(default=None, description="True value, when defined")
    mean: float
    bias: Optional[float] = None
    rmse: Optional[float] = None
    variance: Optional[float] = None
    extra: Dict[str, float] = Field(default_factory=dict, description="Experiment-specific columns")


class ExperimentResult(BaseModel):
    """Raw replications plus per-cell aggregates."""

    experiment: ExperimentName
    config_hash: str
    reps: int
    per_rep: List[Dict[str, Any]] = Field(..., description="One record per replication, size and series")
    cells: List[CellSummary]
    summary: Dict[str, Any] = Field(default_factory=dict, description="Experiment-level values")
    runtime: float = Field(..., ge=0.0, description="Wall-clock seconds")

    def cells_frame(self) -> pd.DataFrame:
        """Cells as a flat table (extra columns expanded)."""
        rows = []
        for cell in self.cells:
            row = cell.model_dump(exclude={"extra"})
            row.update(cell.extra)
            rows.append(row)
        return pd.DataFrame(rows)

    def per_rep_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.per_rep)
