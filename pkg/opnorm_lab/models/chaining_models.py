"""
Metric-space and chaining result types.
"""

from typing import Any, List, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import Field, field_serializer
from scipy.spatial.distance import cdist

from opnorm_lab.models.base import ArrayModel
from opnorm_lab.utils.errors import InputValidationError, InvariantError
from opnorm_lab.utils.io import PathLike, read_numeric_csv
from opnorm_lab.utils.rng import STREAM_SAMPLING, keyed_generator

TRIANGLE_TOL = 1e-9
# Spaces up to this size get every triple checked; larger ones are sampled.
FULL_TRIANGLE_CHECK = 64
SAMPLED_TRIPLES = 10_000


def _check_distances(dist: np.ndarray) -> None:
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape != (n, n) or n < 1:
        raise InputValidationError(f"distance matrix must be square and non-empty, got {dist.shape}")
    if not np.isfinite(dist).all() or dist.min() < 0:
        raise InputValidationError("distances must be finite and non-negative")
    if not np.array_equal(dist, dist.T):
        raise InputValidationError("distance matrix must be symmetric")
    if np.any(np.diag(dist) != 0):
        raise InputValidationError("distance matrix must have a zero diagonal")
    if n <= FULL_TRIANGLE_CHECK:
        for k in range(n):
            if np.any(dist > dist[:, k : k + 1] + dist[k : k + 1, :] + TRIANGLE_TOL):
                raise InputValidationError("triangle inequality violated")
    else:
        gen = keyed_generator(n, STREAM_SAMPLING)
        i, j, k = gen.integers(0, n, size=(3, SAMPLED_TRIPLES))
        if np.any(dist[i, j] > dist[i, k] + dist[k, j] + TRIANGLE_TOL):
            raise InputValidationError("triangle inequality violated on sampled triples")


class FiniteMetricSpace(ArrayModel):
    """Finite point set with a full distance matrix."""

    dist: Any = Field(..., description="Symmetric (n, n) distance matrix with zero diagonal")
    labels: List[str] = Field(default_factory=list, description="Point identifiers")
    sampled: bool = Field(default=False, description="True for finite samples of continuous spaces")

    @field_serializer("dist")
    def _serialize_dist(self, dist: np.ndarray) -> list:
        return dist.tolist()

    @classmethod
    def from_distance_matrix(cls, dist: Any, labels: Optional[Sequence[str]] = None,
                             sampled: bool = False) -> "FiniteMetricSpace":
        """
        Validate and wrap a distance matrix.

        Raises:
            InputValidationError: Asymmetric, non-zero diagonal, negative or
                triangle-violating input.
        """
        array = np.array(dist, dtype=np.float64, copy=True)
        _check_distances(array)
        array.setflags(write=False)
        names = list(labels) if labels is not None else [str(i) for i in range(array.shape[0])]
        if len(names) != array.shape[0]:
            raise InputValidationError("labels must match the number of points")
        return cls.model_construct(dist=array, labels=names, sampled=sampled)

    @classmethod
    def from_points(cls, points: Any, labels: Optional[Sequence[str]] = None,
                    sampled: bool = False) -> "FiniteMetricSpace":
        """Euclidean metric on the rows of `points`."""
        coords = np.asarray(points, dtype=np.float64)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] < 1 or not np.isfinite(coords).all():
            raise InputValidationError("points must be a finite non-empty (n, d) array")
        dist = cdist(coords, coords)
        dist = np.maximum(dist, dist.T)
        np.fill_diagonal(dist, 0.0)
        return cls.from_distance_matrix(dist, labels=labels, sampled=sampled)

    @classmethod
    def from_csv_points(cls, path: PathLike) -> "FiniteMetricSpace":
        """Euclidean space on the rows of a point-cloud CSV."""
        return cls.from_points(read_numeric_csv(path))

    @classmethod
    def from_csv_distances(cls, path: PathLike) -> "FiniteMetricSpace":
        return cls.from_distance_matrix(read_numeric_csv(path))

    @property
    def n(self) -> int:
        return int(self.dist.shape[0])

    def __len__(self) -> int:
        return self.n

    @property
    def diameter(self) -> float:
        return float(self.dist.max())


class AdmissibleSequence(ArrayModel):
    """Nested index sets T_0 c T_1 c ... with |T_0| = 1 and |T_k| <= 2**(2**k)."""

    subsets: List[Any] = Field(..., description="Index arrays, one per level")

    @field_serializer("subsets")
    def _serialize_subsets(self, subsets: List[np.ndarray]) -> list:
        return [s.tolist() for s in subsets]

    @classmethod
    def from_subsets(cls, subsets: Sequence[Any]) -> "AdmissibleSequence":
        """
        Wrap and check index sets.

        Raises:
            InvariantError: If cardinalities or nesting are violated.
        """
        arrays = [np.unique(np.asarray(s, dtype=np.int64)) for s in subsets]
        for k, subset in enumerate(arrays):
            if subset.size > level_capacity(k):
                raise InvariantError(f"|T_{k}| = {subset.size} exceeds {level_capacity(k)}")
            if k and not np.isin(arrays[k - 1], subset).all():
                raise InvariantError(f"T_{k - 1} is not contained in T_{k}")
        return cls.model_construct(subsets=arrays)

    def __len__(self) -> int:
        return len(self.subsets)

    def sizes(self) -> List[int]:
        return [int(s.size) for s in self.subsets]


class ChainingEstimate(ArrayModel):
    """Upper estimate of gamma_alpha together with its certificate."""

    gamma_upper: float = Field(..., ge=0, description="sup_t sum_k 2**(k/alpha) d(t, T_k)")
    sequence: AdmissibleSequence = Field(..., description="Sequence attaining gamma_upper")
    ek_radii: List[float] = Field(..., description="Entropy radii e_0 >= e_1 >= ...")
    dudley: Optional[float] = Field(default=None, description="Dudley entropy integral")
    alpha: float = Field(default=2.0, ge=1.0, description="Functional order")
    exhaustive: bool = Field(default=False, description="gamma_upper is the exact minimum")
    space: Optional[FiniteMetricSpace] = Field(default=None, exclude=True)
    # per-point distance profile d(t, T_k), shape (n, levels); used by products
    profile: Optional[Any] = Field(default=None, exclude=True)

    def summary(self) -> dict:
        """JSON-friendly summary."""
        return {
            "gamma_upper": self.gamma_upper,
            "dudley": self.dudley,
            "ek_radii": list(self.ek_radii),
            "alpha": self.alpha,
            "exhaustive": self.exhaustive,
            "sequence_sizes": self.sequence.sizes(),
            "sampled_space": bool(self.space.sampled) if self.space is not None else False,
        }


class TailBound(NamedTuple):
    threshold: float
    probability_floor: float


class CalibrationResult(NamedTuple):
    c_hat: float
    sd: float
    ratios: List[float]
    k_hat: float
    gamma: float
    diameter: float


def level_capacity(k: int) -> int:
    """N_0 = 1 and N_k = 2**(2**k)."""
    if k == 0:
        return 1
    if k >= 7:
        # 2**128 exceeds any index set we can hold
        return 1 << 128
    return 2 ** (2**k)
