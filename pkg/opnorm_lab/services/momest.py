"""
Grid-search moment estimators.

The operator-norm estimator minimizes ||eps(beta)|| / sqrt(NT) over the
candidate grid. Comparators: the conventional method of moments
|mean(eps(beta))|, the top-R_NT singular-value sum, and a weighted sum of
operator norms over stacked moments.
"""

import logging
import math
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from opnorm_lab.models.moment_models import EstimatorConfig, MomentEstimate, MomentModel
from opnorm_lab.services.matcore import operator_norm, top_singular_sum
from opnorm_lab.utils.errors import ArgumentError, ConfigError, DataError
from opnorm_lab.utils.parallel import ordered_map
from opnorm_lab.utils.rng import split_seed

logger = logging.getLogger(__name__)

MIN_DIAGNOSTIC_REPS = 20
GRID_TOL = 1e-12
INEQUALITY_TOL = 1e-8


def _objective(moments: List[np.ndarray], cfg: EstimatorConfig) -> float:
    first = moments[0]
    root_nt = math.sqrt(first.size)
    if cfg.objective == "opnorm":
        return operator_norm(first) / root_nt
    if cfg.objective == "conventional":
        return abs(float(np.mean(first)))
    if cfg.objective == "top_r":
        return top_singular_sum(first, cfg.r_nt) / root_nt
    if len(cfg.weights) != len(moments):
        raise ConfigError(
            f"{len(cfg.weights)} weights for {len(moments)} stacked moments", field="weights"
        )
    return math.fsum(w * operator_norm(m) / root_nt for w, m in zip(cfg.weights, moments))


def objective_value(model: MomentModel, data: Any, beta: float, cfg: EstimatorConfig) -> float:
    """
    Objective at one beta.

    Args:
        model (MomentModel): Moment model.
        data (Any): One data set.
        beta (float): Candidate inside the grid range.
        cfg (EstimatorConfig): Objective choice.

    Returns:
        float: Non-negative objective value (NaN when the moments are not finite).

    Raises:
        ConfigError: top_r without r_nt, weighted without matching weights.
        ArgumentError: beta outside the grid range.
    """
    cfg.check()
    lo, hi = model.bounds
    if not lo - GRID_TOL <= beta <= hi + GRID_TOL:
        raise ArgumentError(f"beta={beta} outside [{lo}, {hi}]")
    moments = [np.asarray(m, dtype=np.float64) for m in model.moments(data, beta)]
    if not all(np.isfinite(m).all() for m in moments):
        return math.nan
    return _objective(moments, cfg)


def _refine(model: MomentModel, data: Any, cfg: EstimatorConfig, index: int, best: float) -> Tuple[float, float]:
    grid = model.grid
    lo = grid[max(index - 1, 0)]
    hi = grid[min(index + 1, grid.size - 1)]
    if hi <= lo:
        return float(grid[index]), best
    result = minimize_scalar(
        lambda b: objective_value(model, data, b, cfg), bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-8},
    )
    if result.success and np.isfinite(result.fun) and result.fun < best:
        return float(result.x), float(result.fun)
    return float(grid[index]), best


def _plateau_center(grid: np.ndarray, values: Sequence[float], index: int, tol: float) -> int:
    """
    Index of the grid point nearest the middle of the contiguous run around
    `index` where the objective stays within (1 + tol) of its minimum.
    """
    ceiling = values[index] * (1.0 + tol)
    lo = hi = index
    while lo > 0 and values[lo - 1] <= ceiling:
        lo -= 1
    while hi < len(values) - 1 and values[hi + 1] <= ceiling:
        hi += 1
    middle = 0.5 * (grid[lo] + grid[hi])
    return lo + int(np.argmin(np.abs(grid[lo : hi + 1] - middle)))


def estimate(model: MomentModel, data: Any, cfg: EstimatorConfig, workers: int = 1) -> MomentEstimate:
    """
    Grid minimizer of the objective, with the full profile.

    Ties go to the smallest beta. The operator-norm objectives are flat where
    the signal sits below the noise spectrum edge, so unless refinement is
    requested they report the center of the run of grid points within
    plateau_tol of the minimum; the conventional objective keeps the argmin.

    Raises:
        DataError: If the objective is not finite somewhere on the grid.
    """
    cfg.check()
    grid = model.grid
    values = ordered_map(lambda b: objective_value(model, data, float(b), cfg), grid, workers)
    profile = [(float(b), float(v)) for b, v in zip(grid, values)]
    bad = [b for b, v in profile if not math.isfinite(v)]
    if bad:
        raise DataError(f"non-finite objective at beta={bad[0]:g} ({len(bad)} grid points)")
    index = int(np.argmin(values))
    if cfg.refine:
        beta_hat, best = _refine(model, data, cfg, index, float(values[index]))
        return MomentEstimate(beta_hat=beta_hat, objective_at_min=best, profile=profile)
    if cfg.objective != "conventional" and cfg.plateau_tol > 0:
        index = _plateau_center(grid, values, index, cfg.plateau_tol)
    beta_hat, best = float(grid[index]), float(values[index])
    return MomentEstimate(beta_hat=beta_hat, objective_at_min=best, profile=profile)


def noise_term(model: MomentModel, data: Any, cfg: Optional[EstimatorConfig] = None) -> float:
    """
    sup over the grid of ||eps(beta) - E eps(beta)|| / sqrt(NT).

    Weighted objectives use the weighted sum of centered norms.

    Raises:
        ConfigError: If the model has no closed-form E eps(beta).
    """
    cfg = cfg or EstimatorConfig()
    betas = [model.beta0] if model.beta_free_noise else model.grid
    sup = 0.0
    for beta in betas:
        moments = model.moments(data, float(beta))
        expected = model.expected_moments(float(beta), moments[0].shape)
        if expected is None:
            raise ConfigError(f"moment model {model.name!r} has no expected moments", field="name")
        centered = [m - e for m, e in zip(moments, expected)]
        root_nt = math.sqrt(centered[0].size)
        if cfg.objective == "weighted" and cfg.weights:
            value = math.fsum(w * operator_norm(c) / root_nt for w, c in zip(cfg.weights, centered))
        else:
            value = operator_norm(centered[0]) / root_nt
        sup = max(sup, value)
    return sup


def moment_condition_check(model: MomentModel, dims: Tuple[int, int], seed: int) -> Tuple[float, float, bool]:
    """
    Empirical check of E eps_it(beta0) = 0: (mean, standard error, |mean| <= 3 SE).
    """
    eps = np.asarray(model.moment_fn(model.data_gen(dims[0], dims[1], seed), model.beta0))
    mean = float(eps.mean())
    se = float(eps.std(ddof=1) / math.sqrt(eps.size)) if eps.size > 1 else 0.0
    return mean, se, abs(mean) <= 3.0 * se + GRID_TOL


def identification_margin(model: MomentModel, eps: float, dims: Tuple[int, int]) -> float:
    """
    min over grid points with |beta - beta0| >= eps of ||E eps(beta)|| / sqrt(NT).

    Returns inf when no grid point is that far from beta0.
    """
    margin = math.inf
    for beta in model.grid:
        if abs(beta - model.beta0) < eps:
            continue
        expected = model.expected_moments(float(beta), dims)
        if expected is None:
            raise ConfigError(f"moment model {model.name!r} has no expected moments", field="name")
        margin = min(margin, operator_norm(expected[0]) / math.sqrt(dims[0] * dims[1]))
    return margin


def replicate(model: MomentModel, cfg: EstimatorConfig, dims: Tuple[int, int], seed: int) -> Tuple[float, float, float]:
    data = model.data_gen(dims[0], dims[1], seed)
    result = estimate(model, data, cfg)
    return result.beta_hat, abs(result.beta_hat - model.beta0), noise_term(model, data, cfg)


def consistency_diagnostic(
    model: MomentModel,
    cfg: EstimatorConfig,
    dims_list: Sequence[Tuple[int, int]],
    reps: int,
    seed: int,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Estimation error and noise term across replications and sizes.

    Replication r at size (N, T) uses split_seed(seed, N, T, r).

    Args:
        model (MomentModel): Moment model with closed-form expected moments.
        cfg (EstimatorConfig): Objective.
        dims_list (Sequence[Tuple[int, int]]): Sizes.
        reps (int): Replications per size, at least 20.
        seed (int): Base seed.
        workers (int): Threads across replications.

    Returns:
        pd.DataFrame: One row per size with N, T, reps, mean/sd of |beta_hat - beta0|
        and mean/sd of the noise term.
    """
    if reps < MIN_DIAGNOSTIC_REPS:
        raise ArgumentError(f"reps must be at least {MIN_DIAGNOSTIC_REPS}, got {reps}")
    cfg.check()
    rows = []
    for N, T in dims_list:
        results = ordered_map(
            lambda r: replicate(model, cfg, (N, T), split_seed(seed, N, T, r)), range(reps), workers
        )
        errors = np.array([err for _, err, _ in results])
        noise = np.array([nt for _, _, nt in results])
        rows.append({
            "N": N,
            "T": T,
            "reps": reps,
            "mean_abs_error": float(errors.mean()),
            "sd_abs_error": float(errors.std(ddof=1)),
            "mean_noise_term": float(noise.mean()),
            "sd_noise_term": float(noise.std(ddof=1)),
        })
        logger.info("Moment diagnostic N=%d T=%d: mean|err|=%.4g noise=%.4g", N, T, rows[-1]["mean_abs_error"],
                    rows[-1]["mean_noise_term"])
    return pd.DataFrame(rows)


def top_r_noise_check(model: MomentModel, data_reps: Sequence[Any], r_schedule: Sequence[int]) -> pd.DataFrame:
    """
    Check sum_{r <= R_NT} s_r(eps(beta0) - E eps(beta0)) <= R_NT ||eps(beta0) - E eps(beta0)||.

    Returns:
        pd.DataFrame: Columns rep, N, T, r_nt, top_sum, bound, rate (R_NT / sqrt(min(N,T))), holds.
    """
    rows = []
    for rep, data in enumerate(data_reps):
        eps = np.asarray(model.moment_fn(data, model.beta0), dtype=np.float64)
        expected = model.expected_moments(model.beta0, eps.shape)
        if expected is None:
            raise ConfigError(f"moment model {model.name!r} has no expected moments", field="name")
        centered = eps - expected[0]
        N, T = centered.shape
        root_nt = math.sqrt(N * T)
        norm = operator_norm(centered) / root_nt
        for r_nt in r_schedule:
            if not 1 <= r_nt < min(N, T):
                raise ArgumentError(f"R_NT={r_nt} must lie in [1, min(N, T))")
            top = top_singular_sum(centered, r_nt) / root_nt
            holds = top <= r_nt * norm + INEQUALITY_TOL
            if not holds:
                logger.warning("Top-R inequality failed: rep=%d R_NT=%d %.6g > %.6g", rep, r_nt, top, r_nt * norm)
            rows.append({
                "rep": rep,
                "N": N,
                "T": T,
                "r_nt": r_nt,
                "top_sum": top,
                "bound": r_nt * norm,
                "rate": r_nt / math.sqrt(min(N, T)),
                "holds": bool(holds),
            })
    return pd.DataFrame(rows)
