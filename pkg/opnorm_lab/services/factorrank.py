"""
Functional factor model simulation and the maximal-rank estimator.

R-hat counts the singular values of the sup-over-beta spectrum of
Y(beta)/sqrt(NT) that reach the threshold psi_NT; psi_NT is scaled by the
PCA residual standard deviation after partialling out k_max factors.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, Optional

import numpy as np
from pydantic import ValidationError

from opnorm_lab.models.factor_models import (
    FactorModelSpec,
    RankEstimate,
    SupSpectrum,
    ThresholdConfig,
    ThresholdVariant,
)
from opnorm_lab.models.process_models import ParamGrid, ParamMatrixFamily, SubGaussianSpec
from opnorm_lab.services.matcore import singular_values
from opnorm_lab.services.subgauss import gen_innovations
from opnorm_lab.utils.errors import ArgumentError, ConfigError, DataError
from opnorm_lab.utils.io import PathLike, read_json, read_matrix_csv
from opnorm_lab.utils.parallel import ordered_map
from opnorm_lab.utils.rng import (
    SEGMENT_IN_SAMPLE,
    STREAM_FACTORS,
    STREAM_LOADINGS,
    STREAM_NOISE,
    keyed_rows,
    split_seed,
)

logger = logging.getLogger(__name__)

# (grid index, base loadings N x R) -> loadings at that beta
LoadingHook = Callable[[int, np.ndarray], np.ndarray]


def _check_grid(spec: FactorModelSpec, grid: ParamGrid) -> None:
    if grid.dim != 1 or len(grid) != len(spec.rank_map):
        raise ConfigError("grid must list exactly the rank_map betas", field="rank_map")
    betas = np.asarray([b for b, _ in spec.rank_map])
    if not np.allclose(grid.scalars(), betas, rtol=0.0, atol=1e-12):
        raise ConfigError("grid points do not match rank_map betas", field="rank_map")


def generate_ffm(
    spec: FactorModelSpec, grid: Optional[ParamGrid] = None, loading_hook: Optional[LoadingHook] = None
) -> ParamMatrixFamily:
    """
    Simulate Y(beta) = sum_{r <= R(beta)} lambda_r f_r' + U(beta) over the grid.

    Loadings and factors are iid N(0, 1), drawn once per seed; U is the
    trigonometric process with scale sigma (skipped when sigma == 0).

    Args:
        spec (FactorModelSpec): Model specification.
        grid (ParamGrid, optional): Grid; defaults to the rank_map betas.
        loading_hook (LoadingHook, optional): Supplies beta-dependent loadings.

    Returns:
        ParamMatrixFamily: The simulated family.

    Raises:
        ConfigError: If some R(beta) exceeds min(N, T) or the grid does not match.
    """
    grid = grid if grid is not None else spec.grid()
    _check_grid(spec, grid)
    limit = min(spec.N, spec.T)
    for beta, rank in spec.rank_map:
        if rank > limit:
            raise ConfigError(f"R({beta:g}) = {rank} exceeds min(N, T) = {limit}", field="rank_map")

    ranks = spec.ranks
    width = spec.max_rank
    loadings = keyed_rows(spec.seed, STREAM_LOADINGS, SEGMENT_IN_SAMPLE, spec.N, width)
    factors = keyed_rows(spec.seed, STREAM_FACTORS, SEGMENT_IN_SAMPLE, spec.T, width)
    noise = None
    if spec.sigma > 0:
        noise_spec = SubGaussianSpec(family="trig_process", trig_sigma=spec.sigma)
        noise = gen_innovations(noise_spec, (spec.N, spec.T), grid, split_seed(spec.seed, STREAM_NOISE))

    def field(index: int, presample: int) -> np.ndarray:
        rank = ranks[index]
        lam = loadings if loading_hook is None else np.asarray(loading_hook(index, loadings), dtype=np.float64)
        common = lam[:, :rank] @ factors[:, :rank].T
        if noise is None:
            return common
        return common + noise.evaluate(index).as_array()

    logger.debug("FFM N=%d T=%d R=%d sigma=%g seed=%d", spec.N, spec.T, width, spec.sigma, spec.seed)
    return ParamMatrixFamily(
        grid,
        (spec.N, spec.T),
        field,
        max_presample=0,
        regenerate=lambda seed: generate_ffm(spec.model_copy(update={"seed": seed}), grid, loading_hook),
        label="ffm",
    )


def _scaled_spectrum(fam: ParamMatrixFamily, index: int) -> np.ndarray:
    values = singular_values(fam.evaluate(index)).values / math.sqrt(fam.n_rows * fam.n_cols)
    # numerical rank: values below max(N, T) * eps * s_1 are zero
    tol = values[0] * max(fam.dims) * np.finfo(np.float64).eps if values.size else 0.0
    return np.where(values > tol, values, 0.0)


def sup_spectrum(fam: ParamMatrixFamily, k_max: Optional[int] = None, workers: int = 1) -> SupSpectrum:
    """
    Pointwise sup over the grid of the scaled singular values, in one pass.

    Args:
        fam (ParamMatrixFamily): Family Y(beta).
        k_max (int, optional): When given, also return per-beta residual variances.
        workers (int): Threads for the per-beta SVDs.

    Returns:
        SupSpectrum: Sup spectrum, maximizing indices and residual variances.
    """
    if k_max is not None and not 0 < k_max < min(fam.dims):
        raise ArgumentError(f"k_max must lie in [1, min(N, T)) = [1, {min(fam.dims)}), got {k_max}")
    spectra = np.stack(ordered_map(lambda index: _scaled_spectrum(fam, index), range(len(fam)), workers))
    residual = None
    if k_max is not None:
        residual = np.sum(spectra[:, k_max:] ** 2, axis=1)
    return SupSpectrum(values=spectra.max(axis=0), argmax=spectra.argmax(axis=0), residual_variances=residual)


def sigma_hat(fam: ParamMatrixFamily, k_max: int) -> float:
    """
    sigma-hat = sqrt(sup_beta (1/NT) sum_{l > k_max} s_l(Y(beta))**2).

    Raises:
        ArgumentError: If k_max >= min(N, T).
    """
    return float(math.sqrt(sup_spectrum(fam, k_max).residual_variances.max()))


def psi_threshold(N: int, T: int, sigma_hat_val: float, variant: ThresholdVariant) -> float:
    """
    Threshold psi_NT for one of the three rules.

    psi1 = sigma sqrt((N+T)/(NT) log(NT/(N+T))),
    psi2 = sigma sqrt((N+T)/(NT) log min(N,T)),
    psi3 = sigma sqrt(log min(N,T) / min(N,T)).
    """
    if N < 1 or T < 1 or sigma_hat_val < 0:
        raise ArgumentError("psi_threshold needs N, T >= 1 and sigma_hat >= 0")
    m = min(N, T)
    if variant == "psi1":
        radicand = (N + T) / (N * T) * math.log(N * T / (N + T))
    elif variant == "psi2":
        radicand = (N + T) / (N * T) * math.log(m)
    elif variant == "psi3":
        radicand = math.log(m) / m
    else:
        raise ConfigError(f"unknown threshold variant: {variant}", field="variant")
    if radicand < 0:
        raise ArgumentError(f"{variant} is undefined for N={N}, T={T}")
    return sigma_hat_val * math.sqrt(radicand)


def rank_from_spectrum(spectrum: SupSpectrum, dims, cfg: ThresholdConfig) -> RankEstimate:
    """Apply one threshold rule to a precomputed sup spectrum."""
    N, T = dims
    sigma = 0.0
    if spectrum.residual_variances is not None:
        sigma = float(math.sqrt(spectrum.residual_variances.max()))
    elif cfg.explicit_value is None:
        raise ArgumentError("the spectrum carries no residual variances for sigma-hat")
    if cfg.explicit_value is not None:
        threshold, variant = float(cfg.explicit_value), None
    else:
        threshold, variant = psi_threshold(N, T, sigma, cfg.variant), cfg.variant
    values = spectrum.values
    # ties count as exceedances; numerically zero values never do
    r_hat = int(np.count_nonzero((values >= threshold) & (values > 0)))
    return RankEstimate(
        r_hat=r_hat,
        sup_singulars=values.tolist(),
        threshold_used=threshold,
        sigma_hat=sigma,
        variant=variant,
    )


def estimate_max_rank(fam: ParamMatrixFamily, cfg: ThresholdConfig, workers: int = 1) -> RankEstimate:
    """
    Estimate the maximal rank R = max_beta R(beta).

    Args:
        fam (ParamMatrixFamily): Family Y(beta).
        cfg (ThresholdConfig): Threshold rule or explicit value.
        workers (int): Threads for the per-beta SVDs.

    Returns:
        RankEstimate: R-hat, sup spectrum, threshold and sigma-hat.
    """
    needs_sigma = cfg.explicit_value is None or cfg.k_max < min(fam.dims)
    spectrum = sup_spectrum(fam, cfg.k_max if needs_sigma else None, workers)
    estimate = rank_from_spectrum(spectrum, fam.dims, cfg)
    logger.debug("R-hat=%d (threshold %.4g, sigma-hat %.4g)", estimate.r_hat, estimate.threshold_used, estimate.sigma_hat)
    return estimate


def estimate_variants(
    fam: ParamMatrixFamily, variants: Iterable[ThresholdVariant], k_max: int, workers: int = 1
) -> Dict[str, RankEstimate]:
    """R-hat under several threshold rules from a single spectral pass."""
    spectrum = sup_spectrum(fam, k_max, workers)
    return {
        variant: rank_from_spectrum(spectrum, fam.dims, ThresholdConfig(variant=variant, k_max=k_max))
        for variant in variants
    }


def load_family_from_manifest(path: PathLike) -> ParamMatrixFamily:
    """
    Load per-beta CSV matrices listed in a grid manifest.

    Args:
        path (PathLike): manifest.json or the directory holding it.

    Returns:
        ParamMatrixFamily: Fixed-matrix family on the manifest grid.

    Raises:
        DataError: Missing files, malformed manifest or inconsistent matrices.
    """
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    manifest = read_json(manifest_path)
    try:
        entries = manifest["points"]
        grid = ParamGrid(
            points=[entry["beta"] for entry in entries],
            metric=manifest.get("metric", "euclidean"),
        )
        files = [manifest_path.parent / entry["file"] for entry in entries]
    except (KeyError, TypeError, ValidationError) as exc:
        raise DataError(f"{manifest_path}: malformed manifest ({exc})") from exc
    matrices = [read_matrix_csv(f) for f in files]
    try:
        family = ParamMatrixFamily.from_matrices(grid, matrices, label=manifest.get("label", "external"))
    except ArgumentError as exc:
        raise DataError(f"{manifest_path}: {exc}") from exc
    logger.info("Loaded %d matrices of shape %s from %s", len(family), family.dims, manifest_path)
    return family
