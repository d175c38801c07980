"""
Command-line configuration models.

Each subcommand that is not a Monte Carlo experiment reads its options from
one strict document, given either as flags or as a JSON file via --config.
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import Field, NonNegativeInt, PositiveFloat, PositiveInt

from opnorm_lab.models.base import StrictModel
from opnorm_lab.models.factor_models import REFERENCE_BETAS, ThresholdVariant
from opnorm_lab.models.moment_models import EstimatorConfig, MomentModelConfig
from opnorm_lab.models.process_models import FamilyName
from opnorm_lab.utils.config import config

CommandName = Literal["simulate", "chaining", "rank", "moment", "table1", "bound", "tail"]
OutputFormat = Literal["csv", "json", "text"]

EXPERIMENT_COMMANDS = {"table1": "table1", "bound": "bound_scaling", "tail": "tail_check"}


class CliConfig(StrictModel):
    """One parsed command line."""

    command: CommandName
    config_path: Optional[str] = Field(default=None, description="JSON options document")
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64, description="Seed override")
    out: Optional[str] = Field(default=None, description="Output file; stdout when omitted")
    format: Optional[OutputFormat] = Field(default=None, description="Output format; per-command default")
    threads: Optional[PositiveInt] = Field(default=None, description="Worker threads")
    plot_data: Optional[str] = Field(default=None, description="Long-format (x, y, series) CSV path")
    log_level: Optional[str] = Field(default=None, description="Logging level override")
    options: Dict[str, Any] = Field(default_factory=dict, description="Subcommand flags")


class SimulateOptions(StrictModel):
    schema_version: Literal[1] = 1
    family: FamilyName = "trig_process"
    N: PositiveInt = 100
    T: PositiveInt = 100
    grid: List[float] = Field(default_factory=lambda: list(REFERENCE_BETAS), min_length=1)
    scale: PositiveFloat = 1.0
    trig_sigma: PositiveFloat = 1.0
    ma_rho: Optional[float] = Field(default=None, description="Geometric MA filter coefficient")
    ma_lags: NonNegativeInt = Field(default=0, description="MA truncation L")
    export_dir: Optional[str] = Field(default=None, description="Write per-beta CSVs plus manifest here")
    seed: int = Field(default=0, ge=0, lt=2**64)


class ChainingOptions(StrictModel):
    schema_version: Literal[1] = 1
    points: Optional[str] = Field(default=None, description="Point-cloud CSV (Euclidean metric)")
    distances: Optional[str] = Field(default=None, description="Distance-matrix CSV")
    sphere_n: Optional[PositiveInt] = Field(default=None, description="Sample this many sphere points")
    sphere_d: PositiveInt = Field(default=3, description="Ambient dimension of the sampled sphere")
    alpha: float = Field(default=2.0, ge=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)


class RankOptions(StrictModel):
    schema_version: Literal[1] = 1
    manifest: Optional[str] = Field(default=None, description="Grid manifest of external matrices")
    N: PositiveInt = 100
    T: PositiveInt = 100
    sigma: float = Field(default=1.0, ge=0.0)
    variant: ThresholdVariant = "psi2"
    k_max: PositiveInt = config.K_MAX
    explicit: Optional[PositiveFloat] = None
    seed: int = Field(default=0, ge=0, lt=2**64)


class MomentOptions(StrictModel):
    schema_version: Literal[1] = 1
    model: MomentModelConfig = Field(default_factory=MomentModelConfig)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    N: PositiveInt = 100
    T: PositiveInt = 100
    seed: int = Field(default=0, ge=0, lt=2**64)
