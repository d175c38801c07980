"""
Functional factor model specification and rank-estimator result types.
"""

from typing import List, Literal, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, NonNegativeInt, PositiveFloat, PositiveInt, model_validator

from opnorm_lab.models.base import StrictModel
from opnorm_lab.models.process_models import ParamGrid
from opnorm_lab.utils.config import config

ThresholdVariant = Literal["psi1", "psi2", "psi3"]

# Grid {0, 0.1, ..., 1} and the rank path used in the reference Monte Carlo design.
REFERENCE_BETAS = tuple(round(0.1 * i, 10) for i in range(11))
REFERENCE_RANKS = (4, 4, 1, 4, 3, 1, 2, 3, 4, 4, 1)


class FactorModelSpec(StrictModel):
    """Y(beta) = lambda f' restricted to the first R(beta) factors, plus noise U(beta)."""

    N: PositiveInt = Field(..., description="Cross-section size")
    T: PositiveInt = Field(..., description="Time dimension")
    rank_map: List[Tuple[float, NonNegativeInt]] = Field(
        ..., min_length=1, description="(beta, R(beta)) for every grid point"
    )
    sigma: float = Field(
        default=1.0, ge=0.0, description="Noise scale; entries have variance sigma**2/4, 0 is noiseless"
    )
    seed: int = Field(default=0, ge=0, lt=2**64, description="64-bit seed")

    @model_validator(mode="after")
    def _check_betas(self) -> "FactorModelSpec":
        betas = [b for b, _ in self.rank_map]
        if len(set(betas)) != len(betas):
            raise ValueError("rank_map has duplicate beta values")
        return self

    @property
    def max_rank(self) -> int:
        """R = max over the grid of R(beta)."""
        return max(r for _, r in self.rank_map)

    @property
    def ranks(self) -> List[int]:
        return [r for _, r in self.rank_map]

    def grid(self) -> ParamGrid:
        return ParamGrid.line([b for b, _ in self.rank_map])

    @classmethod
    def reference_design(cls, N: int, T: int, sigma: float = 1.0, seed: int = 0) -> "FactorModelSpec":
        """Eleven-point grid on [0, 1] with true maximal rank 4."""
        return cls(N=N, T=T, rank_map=list(zip(REFERENCE_BETAS, REFERENCE_RANKS)), sigma=sigma, seed=seed)


class ThresholdConfig(StrictModel):
    """Choice of the threshold psi_NT."""

    variant: ThresholdVariant = Field(default="psi2", description="Threshold formula")
    k_max: PositiveInt = Field(default=config.K_MAX, description="Factors partialled out for sigma-hat")
    explicit_value: Optional[PositiveFloat] = Field(
        default=None, description="Fixed threshold overriding the formula"
    )


class RankEstimate(BaseModel):
    """Maximal-rank estimate with the spectrum it was read from."""

    r_hat: NonNegativeInt = Field(..., description="Number of sup-singular values at or above the threshold")
    sup_singulars: List[float] = Field(..., description="sup_beta s_l(Y(beta)/sqrt(NT)), non-increasing")
    threshold_used: float = Field(..., ge=0.0, description="psi_NT actually applied")
    sigma_hat: float = Field(..., ge=0.0, description="Residual-variance scale estimate")
    variant: Optional[ThresholdVariant] = Field(default=None, description="Formula used, None if explicit")


class SupSpectrum(NamedTuple):
    values: np.ndarray  # sup over beta of s_l(Y/sqrt(NT)), l = 1..min(N,T)
    argmax: np.ndarray  # grid index attaining each sup
    residual_variances: Optional[np.ndarray]  # per-beta (1/NT) sum_{l > k_max} s_l**2
