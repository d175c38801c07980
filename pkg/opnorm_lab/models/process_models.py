"""
Process models: sub-Gaussian innovation specs, MA filters, parameter grids
and lazily evaluated parameter-indexed matrix families.
"""

import threading
from typing import Callable, Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import Field, PositiveFloat, PrivateAttr, field_validator, model_validator
from scipy.spatial.distance import cdist

from opnorm_lab.models.base import StrictModel
from opnorm_lab.models.matrix_models import DenseMatrix
from opnorm_lab.utils.errors import ArgumentError, ConfigError

FamilyName = Literal["gaussian", "rademacher", "uniform_bounded", "trig_process"]
MetricName = Literal["euclidean", "manhattan", "chebyshev"]

_SCIPY_METRIC = {"euclidean": "euclidean", "manhattan": "cityblock", "chebyshev": "chebyshev"}


class SubGaussianSpec(StrictModel):
    """Distribution of the innovations epsilon_it(beta)."""

    family: FamilyName = Field(..., description="Innovation family")
    scale: PositiveFloat = Field(
        default=1.0,
        description="Entry scale; gaussian/rademacher/uniform_bounded have variance scale**2",
    )
    trig_sigma: PositiveFloat = Field(
        default=1.0,
        description="sigma of the trigonometric process (sigma/2)(xi1 cos b + xi2 sin b)",
    )


class MAFilterSpec(StrictModel):
    """Truncated MA(infinity) filter x_it = sum_tau psi_i,tau eps_i,t-tau."""

    coeffs: List[List[float]] = Field(
        ...,
        description="Per-unit coefficient rows psi_i0..psi_iL; a single row is shared by all units",
    )
    theta_bound: Optional[List[float]] = Field(
        default=None, description="Envelope theta_tau >= |psi_i,tau|; defaults to max_i |psi_i,tau|"
    )
    tail_mass: float = Field(default=0.0, ge=0.0, description="Ignored mass sum_{tau>L} theta_tau")

    @model_validator(mode="after")
    def _check_envelope(self) -> "MAFilterSpec":
        widths = {len(row) for row in self.coeffs}
        if not self.coeffs or len(widths) != 1 or 0 in widths:
            raise ValueError("coeffs must be non-empty rows of equal length")
        psi = np.asarray(self.coeffs, dtype=np.float64)
        if not np.isfinite(psi).all():
            raise ValueError("coeffs must be finite")
        if self.theta_bound is None:
            self.theta_bound = np.abs(psi).max(axis=0).tolist()
        theta = np.asarray(self.theta_bound, dtype=np.float64)
        if theta.shape != (psi.shape[1],) or np.any(theta <= 0):
            raise ValueError("theta_bound needs one positive value per lag")
        if np.any(np.abs(psi) > theta[None, :] + 1e-12):
            raise ValueError("|psi_i,tau| exceeds theta_tau")
        return self

    @property
    def truncation(self) -> int:
        return len(self.coeffs[0]) - 1

    @property
    def theta_sum(self) -> float:
        return float(np.sum(self.theta_bound))

    def coefficient_matrix(self, n_rows: int) -> np.ndarray:
        """Coefficients as an (n_rows, L+1) array."""
        psi = np.asarray(self.coeffs, dtype=np.float64)
        if psi.shape[0] == 1:
            return np.repeat(psi, n_rows, axis=0)
        if psi.shape[0] != n_rows:
            raise ArgumentError(f"filter has {psi.shape[0]} coefficient rows for {n_rows} units")
        return psi

    @classmethod
    def geometric(cls, rho: float, truncation: int) -> "MAFilterSpec":
        """psi_tau = rho**tau for tau <= L, shared by all units."""
        if not 0 <= abs(rho) < 1:
            raise ArgumentError(f"|rho| must be < 1, got {rho}")
        row = [rho**tau for tau in range(truncation + 1)]
        theta = [max(abs(c), 1e-300) for c in row]
        tail = abs(rho) ** (truncation + 1) / (1 - abs(rho))
        return cls(coeffs=[row], theta_bound=theta, tail_mass=tail)


class ParamGrid(StrictModel):
    """Finite parameter set B with metric d_B."""

    points: List[List[float]] = Field(..., min_length=1, description="Grid points (coordinates)")
    metric: MetricName = Field(default="euclidean", description="Distance d_B on coordinates")
    labels: Optional[List[str]] = Field(default=None, description="Point labels")

    _dist: Optional[np.ndarray] = PrivateAttr(default=None)

    @field_validator("points", mode="before")
    @classmethod
    def _promote_scalars(cls, value):
        return [[float(p)] if np.isscalar(p) else list(p) for p in value]

    @model_validator(mode="after")
    def _check_points(self) -> "ParamGrid":
        dims = {len(p) for p in self.points}
        if len(dims) != 1 or 0 in dims:
            raise ValueError("grid points must share one positive dimension")
        if not np.isfinite(np.asarray(self.points)).all():
            raise ValueError("grid coordinates must be finite")
        if self.labels is None:
            self.labels = [",".join(f"{c:g}" for c in p) for p in self.points]
        elif len(self.labels) != len(self.points):
            raise ValueError("labels must match points")
        return self

    @classmethod
    def line(cls, values, metric: MetricName = "euclidean") -> "ParamGrid":
        """Grid of scalar parameter values."""
        return cls(points=[[float(v)] for v in values], metric=metric)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return len(self.points[0])

    def coords(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)

    def scalar(self, index: int) -> float:
        """Scalar coordinate of point `index` (one-dimensional grids only)."""
        if self.dim != 1:
            raise ConfigError("this operation needs a one-dimensional grid", field="grid.points")
        return float(self.points[index][0])

    def scalars(self) -> np.ndarray:
        if self.dim != 1:
            raise ConfigError("this operation needs a one-dimensional grid", field="grid.points")
        return self.coords()[:, 0]

    def distance_matrix(self) -> np.ndarray:
        if self._dist is None:
            coords = self.coords()
            dist = cdist(coords, coords, metric=_SCIPY_METRIC[self.metric])
            np.fill_diagonal(dist, 0.0)
            dist.setflags(write=False)
            self._dist = dist
        return self._dist

    def distance(self, i: int, j: int) -> float:
        return float(self.distance_matrix()[i, j])

    @property
    def diameter(self) -> float:
        return float(self.distance_matrix().max())


# (grid index, presample columns) -> array of shape (N, presample + T)
FieldFn = Callable[[int, int], np.ndarray]


class ParamMatrixFamily:
    """
    Lazily evaluated map beta -> X(beta) over a finite grid.

    All evaluations share one set of primitive draws, so matrices at different
    grid points are coupled. The field function may also return pre-sample
    columns (times 1-P..0) when the family supports lags.
    """

    def __init__(
        self,
        grid: ParamGrid,
        dims: Tuple[int, int],
        field: FieldFn,
        *,
        max_presample: Optional[int] = 0,
        regenerate: Optional[Callable[[int], "ParamMatrixFamily"]] = None,
        label: str = "family",
    ):
        """
        Initialize the family.

        Args:
            grid (ParamGrid): Parameter grid.
            dims (Tuple[int, int]): (N, T).
            field (FieldFn): Evaluation function.
            max_presample (int, optional): Largest supported presample width;
                None means unlimited.
            regenerate (Callable, optional): Builds the same family under another seed.
            label (str): Name used in logs and manifests.
        """
        n_rows, n_cols = dims
        if n_rows < 1 or n_cols < 1:
            raise ArgumentError(f"dims must be positive, got {dims}")
        if len(grid) < 1:
            raise ArgumentError("grid must be non-empty")
        self.grid = grid
        self.dims = (int(n_rows), int(n_cols))
        self.max_presample = max_presample
        self.label = label
        self._field = field
        self._regenerate = regenerate
        self._cache: Dict[int, DenseMatrix] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def n_rows(self) -> int:
        return self.dims[0]

    @property
    def n_cols(self) -> int:
        return self.dims[1]

    def _check_index(self, index: int) -> int:
        if not 0 <= index < len(self.grid):
            raise ArgumentError(f"grid index {index} out of range [0, {len(self.grid)})")
        return int(index)

    def supports_presample(self, width: int) -> bool:
        return self.max_presample is None or width <= self.max_presample

    def evaluate_extended(self, index: int, presample: int) -> np.ndarray:
        """
        Matrix with `presample` extra leading columns for times 1-presample..0.

        Raises:
            ArgumentError: If the family cannot supply that many lags.
        """
        index = self._check_index(index)
        if presample < 0 or not self.supports_presample(presample):
            raise ArgumentError(f"{self.label} cannot supply {presample} presample columns")
        out = self._field(index, presample)
        if out.shape != (self.n_rows, self.n_cols + presample):
            raise ArgumentError(f"field returned shape {out.shape}")
        return out

    def evaluate(self, index: int) -> DenseMatrix:
        """X(beta) at grid point `index`; cached."""
        index = self._check_index(index)
        cached = self._cache.get(index)
        if cached is not None:
            return cached
        matrix = DenseMatrix.from_array(self._field(index, 0))
        with self._lock:
            self._cache.setdefault(index, matrix)
        return matrix

    def matrices(self) -> Iterator[DenseMatrix]:
        for index in range(len(self.grid)):
            yield self.evaluate(index)

    @property
    def can_regenerate(self) -> bool:
        return self._regenerate is not None

    def regenerate(self, seed: int) -> "ParamMatrixFamily":
        """Same construction under a different seed."""
        if self._regenerate is None:
            raise ArgumentError(f"{self.label} was not built by a generator and cannot be reseeded")
        return self._regenerate(seed)

    def scaled(self, factor: float) -> "ParamMatrixFamily":
        """Family with every matrix multiplied by `factor`."""
        field = self._field
        regen = self._regenerate
        return ParamMatrixFamily(
            self.grid,
            self.dims,
            lambda index, presample: factor * field(index, presample),
            max_presample=self.max_presample,
            regenerate=(lambda seed: regen(seed).scaled(factor)) if regen else None,
            label=f"{factor:g}*{self.label}",
        )

    @classmethod
    def from_matrices(cls, grid: ParamGrid, matrices, label: str = "external") -> "ParamMatrixFamily":
        """Family backed by fixed matrices (one per grid point)."""
        arrays = [DenseMatrix.from_array(m).as_array() for m in matrices]
        if len(arrays) != len(grid):
            raise ArgumentError(f"{len(arrays)} matrices for {len(grid)} grid points")
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ArgumentError(f"matrices have differing shapes {sorted(shapes)}")
        return cls(grid, arrays[0].shape, lambda index, presample: arrays[index], label=label)
