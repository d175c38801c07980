"""
Moment models and estimator configuration.

A moment model maps (data, beta) to one or more N x T moment matrices
eps_l(beta). Models are registered by name so JSON configs can pick them.
"""

import math
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, List, Literal, NamedTuple, Optional, Tuple, Type

import numpy as np
from pydantic import Field, PositiveFloat, PositiveInt

from opnorm_lab.models.base import StrictModel
from opnorm_lab.utils.errors import ConfigError
from opnorm_lab.utils.rng import SEGMENT_IN_SAMPLE, STREAM_MOMENT_DATA, keyed_rows

ObjectiveName = Literal["opnorm", "conventional", "top_r", "weighted"]

WEIGHT_SUM_TOL = 1e-9


class EstimatorConfig(StrictModel):
    """Objective used by the grid-search estimator."""

    objective: ObjectiveName = Field(default="opnorm", description="Objective function")
    r_nt: Optional[PositiveInt] = Field(default=None, description="R_NT for the top_r objective")
    weights: Optional[List[PositiveFloat]] = Field(
        default=None, description="omega_l for the weighted objective; must sum to 1"
    )
    refine: bool = Field(default=False, description="Bounded scalar refinement around the grid argmin")
    plateau_tol: float = Field(
        default=0.05,
        ge=0.0,
        description="Relative width of the near-minimum run whose center is reported for operator-norm "
        "objectives; 0 gives the plain grid minimizer",
    )

    def check(self) -> None:
        """
        Raises:
            ConfigError: top_r without r_nt, or weighted without weights summing to 1.
        """
        if self.objective == "top_r" and self.r_nt is None:
            raise ConfigError("objective top_r requires r_nt", field="r_nt")
        if self.objective == "weighted":
            if not self.weights:
                raise ConfigError("objective weighted requires weights", field="weights")
            if abs(math.fsum(self.weights) - 1.0) > WEIGHT_SUM_TOL:
                raise ConfigError(f"weights must sum to 1, got {math.fsum(self.weights)}", field="weights")


class MomentModelConfig(StrictModel):
    """Registry name plus parameters of a moment model."""

    name: str = Field(default="location", description="Registered moment model")
    beta0: float = Field(default=0.5, description="True parameter")
    grid: Optional[List[float]] = Field(default=None, description="Explicit candidate betas")
    grid_lo: float = Field(default=0.0, description="Lower end of B when grid is not given")
    grid_hi: float = Field(default=1.0, description="Upper end of B when grid is not given")
    grid_step: PositiveFloat = Field(default=0.01, description="Grid spacing when grid is not given")
    noise_sd: float = Field(default=1.0, ge=0.0, description="Noise standard deviation")

    def betas(self) -> np.ndarray:
        """Sorted, de-duplicated candidate grid."""
        if self.grid is not None:
            values = np.asarray(self.grid, dtype=np.float64)
        else:
            if self.grid_hi < self.grid_lo:
                raise ConfigError("grid_hi must not be below grid_lo", field="grid_hi")
            count = int(math.floor((self.grid_hi - self.grid_lo) / self.grid_step + 1e-9)) + 1
            values = np.round(self.grid_lo + self.grid_step * np.arange(count), 12)
        if values.size == 0 or not np.isfinite(values).all():
            raise ConfigError("grid must be a non-empty set of finite values", field="grid")
        return np.unique(values)


class MomentModel(ABC):
    """
    Moment function eps(beta) with its data generator.

    Subclasses set `name` and implement `moments` and `data_gen`; they may
    provide `expected_moments` when E eps(beta) is known in closed form.
    """

    name: ClassVar[str]
    # centered moments eps(beta) - E eps(beta) are the same at every beta
    beta_free_noise: ClassVar[bool] = False

    def __init__(self, cfg: MomentModelConfig):
        self.cfg = cfg
        self.beta0 = cfg.beta0
        self.grid = cfg.betas()

    @abstractmethod
    def moments(self, data: Any, beta: float) -> List[np.ndarray]:
        """The L moment matrices at beta."""

    @abstractmethod
    def data_gen(self, N: int, T: int, seed: int) -> Any:
        """One data set of size (N, T)."""

    def expected_moments(self, beta: float, dims: Tuple[int, int]) -> Optional[List[np.ndarray]]:
        return None

    def moment_fn(self, data: Any, beta: float) -> np.ndarray:
        return self.moments(data, beta)[0]

    @property
    def bounds(self) -> Tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])


_MODEL_REGISTRY: Dict[str, Type[MomentModel]] = {}


def register_moment_model(cls: Type[MomentModel]) -> Type[MomentModel]:
    """Class decorator adding a model to the registry under `cls.name`."""
    if cls.name in _MODEL_REGISTRY:
        raise ConfigError(f"moment model {cls.name!r} is already registered", field="name")
    _MODEL_REGISTRY[cls.name] = cls
    return cls


def get_moment_model(cfg: MomentModelConfig) -> MomentModel:
    """
    Instantiate the registered model named in cfg.

    Raises:
        ConfigError: Unknown model name.
    """
    try:
        model_cls = _MODEL_REGISTRY[cfg.name]
    except KeyError:
        known = ", ".join(sorted(_MODEL_REGISTRY))
        raise ConfigError(f"unknown moment model {cfg.name!r} (known: {known})", field="name") from None
    return model_cls(cfg)


def registered_models() -> List[str]:
    return sorted(_MODEL_REGISTRY)


def _location_data(model: MomentModel, N: int, T: int, seed: int) -> np.ndarray:
    noise = keyed_rows(seed, STREAM_MOMENT_DATA, SEGMENT_IN_SAMPLE, N, T)
    return model.beta0 + model.cfg.noise_sd * noise


@register_moment_model
class LocationModel(MomentModel):
    """eps_it(beta) = y_it - beta with y_it = beta0 + iid N(0, noise_sd**2)."""

    name = "location"
    beta_free_noise = True

    def moments(self, data: np.ndarray, beta: float) -> List[np.ndarray]:
        return [data - beta]

    def data_gen(self, N: int, T: int, seed: int) -> np.ndarray:
        return _location_data(self, N, T, seed)

    def expected_moments(self, beta: float, dims: Tuple[int, int]) -> List[np.ndarray]:
        return [np.full(dims, self.beta0 - beta)]


@register_moment_model
class LocationMomentsModel(MomentModel):
    """
    Two stacked moments, y - beta and (y - beta)**2 - noise_sd**2.

    The second moment's centered part depends on beta, so the noise term is
    evaluated on the whole grid.
    """

    name = "location_moments"

    def moments(self, data: np.ndarray, beta: float) -> List[np.ndarray]:
        centered = data - beta
        return [centered, centered**2 - self.cfg.noise_sd**2]

    def data_gen(self, N: int, T: int, seed: int) -> np.ndarray:
        return _location_data(self, N, T, seed)

    def expected_moments(self, beta: float, dims: Tuple[int, int]) -> List[np.ndarray]:
        shift = self.beta0 - beta
        return [np.full(dims, shift), np.full(dims, shift**2)]


class MomentEstimate(NamedTuple):
    beta_hat: float
    objective_at_min: float
    profile: List[Tuple[float, float]]
