"""
Sub-Gaussian innovation families, MA filtering and empirical Orlicz norms.

Randomness is coupled across the parameter grid: the primitive draws for
unit i at time t are keyed by (seed, component, segment, i) and reused at
every beta; only the deterministic map from draws to entries depends on beta.
"""

import logging
import math
import threading
from pathlib import Path
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.optimize import bisect
from scipy.special import logsumexp

from opnorm_lab.models.process_models import MAFilterSpec, ParamGrid, ParamMatrixFamily, SubGaussianSpec
from opnorm_lab.services.matcore import operator_norm
from opnorm_lab.utils.errors import ArgumentError, ConfigError, InputValidationError
from opnorm_lab.utils.io import PathLike, write_manifest, write_matrix_csv
from opnorm_lab.utils.rng import (
    SEGMENT_IN_SAMPLE,
    SEGMENT_PRESAMPLE,
    STREAM_PRIMARY,
    STREAM_SECONDARY,
    keyed_rows,
    split_seed,
)

logger = logging.getLogger(__name__)

MIN_ORLICZ_SAMPLES = 100
ORLICZ_XTOL = 1e-6

# family -> (draw kind, number of primitive components)
_PRIMITIVES: Dict[str, Tuple[str, int]] = {
    "gaussian": ("normal", 1),
    "rademacher": ("rademacher", 1),
    "uniform_bounded": ("uniform", 1),
    "trig_process": ("normal", 2),
}
_COMPONENT_STREAMS = (STREAM_PRIMARY, STREAM_SECONDARY)


class SupNorm(NamedTuple):
    value: float
    index: int
    point: Tuple[float, ...]


class IncrementPoint(NamedTuple):
    pair: Tuple[int, int]
    distance: float
    orlicz: float


class _PrimitiveDraws:
    """Per-(i, t) primitive draws shared by every grid point."""

    def __init__(self, seed: int, dims: Tuple[int, int], kind: str, components: int):
        self.seed = seed
        self.dims = dims
        self.kind = kind
        self.components = components
        self._in_sample = None
        self._presample = None
        self._lock = threading.Lock()

    def _draw(self, segment: int, width: int) -> List[np.ndarray]:
        n_rows = self.dims[0]
        return [
            keyed_rows(self.seed, _COMPONENT_STREAMS[c], segment, n_rows, width, draw=self.kind)
            for c in range(self.components)
        ]

    def window(self, presample: int) -> List[np.ndarray]:
        """Draws for times 1-presample..T, one array per component."""
        with self._lock:
            if self._in_sample is None:
                self._in_sample = self._draw(SEGMENT_IN_SAMPLE, self.dims[1])
            if presample == 0:
                return self._in_sample
            if self._presample is None or self._presample[0].shape[1] < presample:
                self._presample = self._draw(SEGMENT_PRESAMPLE, presample)
            # presample draw j belongs to time -j, so reverse into time order
            return [
                np.concatenate([pre[:, :presample][:, ::-1], cur], axis=1)
                for pre, cur in zip(self._presample, self._in_sample)
            ]


def gen_innovations(
    spec: SubGaussianSpec, dims: Tuple[int, int], grid: ParamGrid, seed: int
) -> ParamMatrixFamily:
    """
    Generate the innovation family epsilon_it(beta) over a grid.

    Args:
        spec (SubGaussianSpec): Distribution family and scale.
        dims (Tuple[int, int]): (N, T).
        grid (ParamGrid): Parameter grid.
        seed (int): 64-bit seed.

    Returns:
        ParamMatrixFamily: Family supporting arbitrary presample widths.

    Raises:
        ConfigError: Unknown family, or trig_process on a multi-dimensional grid.
    """
    if spec.family not in _PRIMITIVES:
        raise ConfigError(f"unknown innovation family: {spec.family}", field="family")
    kind, components = _PRIMITIVES[spec.family]
    draws = _PrimitiveDraws(seed, dims, kind, components)

    if spec.family == "trig_process":
        betas = grid.scalars()
        amplitude = spec.scale * spec.trig_sigma / 2.0

        def field(index: int, presample: int) -> np.ndarray:
            xi1, xi2 = draws.window(presample)
            beta = betas[index]
            return amplitude * (xi1 * math.cos(beta) + xi2 * math.sin(beta))

    else:
        # unit variance at scale 1
        unit = math.sqrt(3.0) if spec.family == "uniform_bounded" else 1.0
        factor = spec.scale * unit

        def field(index: int, presample: int) -> np.ndarray:
            (base,) = draws.window(presample)
            return factor * base

    logger.debug("Innovations %s dims=%s grid=%d seed=%d", spec.family, dims, len(grid), seed)
    return ParamMatrixFamily(
        grid,
        dims,
        field,
        max_presample=None,
        regenerate=lambda new_seed: gen_innovations(spec, dims, grid, new_seed),
        label=spec.family,
    )


def ma_filter(innov: ParamMatrixFamily, filt: MAFilterSpec, burn_in: int) -> ParamMatrixFamily:
    """
    Apply the truncated MA filter x_it = sum_{tau<=L} psi_i,tau eps_i,t-tau.

    Args:
        innov (ParamMatrixFamily): Innovation family; must supply `burn_in` lags.
        filt (MAFilterSpec): Filter coefficients.
        burn_in (int): Presample width, at least the truncation L.

    Returns:
        ParamMatrixFamily: Filtered family on the same grid.

    Raises:
        ArgumentError: If burn_in < L or the innovations cannot supply the lags.
    """
    lags = filt.truncation
    if burn_in < lags:
        raise ArgumentError(f"burn_in ({burn_in}) must be at least the truncation L ({lags})")
    if not innov.supports_presample(burn_in):
        raise ArgumentError(f"{innov.label} cannot supply {burn_in} presample columns")
    n_rows, n_cols = innov.dims
    psi = filt.coefficient_matrix(n_rows)

    def field(index: int, presample: int) -> np.ndarray:
        extended = innov.evaluate_extended(index, presample + burn_in)
        width = presample + n_cols
        out = np.zeros((n_rows, width))
        for tau in range(lags + 1):
            start = burn_in - tau
            out += psi[:, tau : tau + 1] * extended[:, start : start + width]
        return out

    max_presample = None if innov.max_presample is None else innov.max_presample - burn_in
    regenerate = None
    if innov.can_regenerate:
        regenerate = lambda seed: ma_filter(innov.regenerate(seed), filt, burn_in)  # noqa: E731
    return ParamMatrixFamily(
        innov.grid,
        innov.dims,
        field,
        max_presample=max_presample,
        regenerate=regenerate,
        label=f"ma{lags}({innov.label})",
    )


def filter_reduction_bound(
    innov: ParamMatrixFamily, filt: MAFilterSpec, burn_in: int, index: int
) -> Tuple[float, float]:
    """
    Both sides of ||sum_tau diag(psi_tau) Xi_-tau|| <= sum_tau max_i|psi_i,tau| * max_tau ||Xi_-tau||.

    Returns:
        Tuple[float, float]: (left-hand side, right-hand side) for one realization.
    """
    filtered = ma_filter(innov, filt, burn_in)
    n_cols = innov.n_cols
    extended = innov.evaluate_extended(index, burn_in)
    lag_norms = [
        operator_norm(extended[:, burn_in - tau : burn_in - tau + n_cols])
        for tau in range(filt.truncation + 1)
    ]
    psi = filt.coefficient_matrix(innov.n_rows)
    rhs = float(np.abs(psi).max(axis=0).sum()) * max(lag_norms)
    return operator_norm(filtered.evaluate(index)), rhs


def sup_operator_norm(fam: ParamMatrixFamily) -> SupNorm:
    """
    sup over the grid of ||X(beta)||, with the first maximizing grid point.
    """
    norms = [operator_norm(m) for m in fam.matrices()]
    index = int(np.argmax(norms))
    return SupNorm(value=norms[index], index=index, point=tuple(fam.grid.points[index]))


def orlicz_norm_estimate(samples: Sequence[float], alpha: float = 2.0) -> float:
    """
    Plug-in estimate of the psi_alpha Orlicz norm.

    Smallest K (bisection to 1e-6) with mean(exp(|Y/K|**alpha)) - 1 <= 1.

    Args:
        samples (Sequence[float]): At least 100 finite draws.
        alpha (float): Orlicz order, >= 1 (2 is sub-Gaussian, 1 sub-exponential).

    Returns:
        float: The estimate; 0 if every sample is 0.

    Raises:
        ArgumentError: Fewer than 100 samples or alpha < 1.
        InputValidationError: Non-finite samples.
    """
    values = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    if values.size < MIN_ORLICZ_SAMPLES:
        raise ArgumentError(f"need at least {MIN_ORLICZ_SAMPLES} samples, got {values.size}")
    if alpha < 1:
        raise ArgumentError(f"alpha must be >= 1, got {alpha}")
    if not np.isfinite(values).all():
        raise InputValidationError("samples contain non-finite values")
    if not values.any():
        return 0.0

    log_target = math.log(values.size) + math.log(2.0)

    def excess(k: float) -> float:
        return float(logsumexp((values / k) ** alpha)) - log_target

    # Jensen gives the lower bracket, max|Y| the upper one
    log2_root = math.log(2.0) ** (1.0 / alpha)
    low = float(np.mean(values**alpha)) ** (1.0 / alpha) / log2_root
    high = float(values.max()) / log2_root
    if high - low <= ORLICZ_XTOL or excess(low) <= 0.0:
        return high if excess(low) > 0.0 else low
    if excess(high) >= 0.0:
        return high
    return float(bisect(excess, low, high, xtol=ORLICZ_XTOL))


def increment_orlicz_profile(
    fam: ParamMatrixFamily, pairs: Sequence[Tuple[int, int]], reps: int, seed: int
) -> List[IncrementPoint]:
    """
    Empirical psi_2 norms of entry increments eps(b1) - eps(b2) against d_B(b1, b2).

    Each replication regenerates the family under split_seed(seed, rep) and
    pools all N*T entry increments.

    Args:
        fam (ParamMatrixFamily): A generator-built family.
        pairs (Sequence[Tuple[int, int]]): Grid index pairs.
        reps (int): Replications, at least 100.
        seed (int): Base seed.

    Returns:
        List[IncrementPoint]: One (pair, distance, estimate) per pair.
    """
    if not pairs:
        raise ArgumentError("pairs must be non-empty")
    if reps < MIN_ORLICZ_SAMPLES:
        raise ArgumentError(f"reps must be at least {MIN_ORLICZ_SAMPLES}, got {reps}")

    samples: Dict[Tuple[int, int], List[np.ndarray]] = {tuple(p): [] for p in pairs}
    for rep in range(reps):
        family = fam.regenerate(split_seed(seed, rep))
        for i, j in samples:
            diff = family.evaluate(i).as_array() - family.evaluate(j).as_array()
            samples[(i, j)].append(diff.ravel())

    profile = []
    for (i, j), chunks in samples.items():
        estimate = orlicz_norm_estimate(np.concatenate(chunks))
        profile.append(IncrementPoint(pair=(i, j), distance=fam.grid.distance(i, j), orlicz=estimate))
        logger.debug("Increment (%d,%d): d=%.4g psi2=%.4g", i, j, profile[-1].distance, estimate)
    return profile


def family_orlicz_constant(fam: ParamMatrixFamily, seed: int = 0) -> float:
    """
    K-hat = max(K1, K2) from one realization.

    K1 is the largest entry psi_2 estimate over grid points; K2 is the largest
    increment estimate per unit distance over consecutive grid points. When
    N*T is below the sample floor, independent redraws under split_seed(seed, k)
    are pooled with the given realization until the floor is met.

    Raises:
        ArgumentError: If the family is too small and cannot be redrawn.
    """
    n_entries = fam.n_rows * fam.n_cols
    copies = max(1, math.ceil(MIN_ORLICZ_SAMPLES / n_entries))
    families = [fam]
    if copies > 1:
        if not fam.can_regenerate:
            raise ArgumentError(
                f"{fam.label} has {n_entries} entries per matrix, fewer than {MIN_ORLICZ_SAMPLES}, "
                "and cannot be redrawn for pooling"
            )
        families += [fam.regenerate(split_seed(seed, k)) for k in range(1, copies)]
        logger.debug("Pooling %d draws of %s for K-hat", copies, fam.label)

    arrays = [
        np.concatenate([f.evaluate(index).as_array().ravel() for f in families]) for index in range(len(fam))
    ]
    k1 = max(orlicz_norm_estimate(a) for a in arrays)
    k2 = 0.0
    for i in range(len(arrays) - 1):
        distance = fam.grid.distance(i, i + 1)
        if distance > 0:
            k2 = max(k2, orlicz_norm_estimate(arrays[i] - arrays[i + 1]) / distance)
    return max(k1, k2)


def export_family(fam: ParamMatrixFamily, directory: PathLike) -> Path:
    """
    Write one matrix CSV per grid point plus manifest.json.

    Returns:
        Path: The manifest path.
    """
    directory = Path(directory)
    files = []
    for index, matrix in enumerate(fam.matrices()):
        name = f"beta_{index:04d}.csv"
        write_matrix_csv(matrix.as_array(), directory / name)
        files.append(name)
    logger.info("Exported %d matrices of %s to %s", len(files), fam.label, directory)
    return write_manifest(directory, fam.grid.points, files, label=fam.label, metric=fam.grid.metric)
