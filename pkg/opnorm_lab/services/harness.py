"""
Harness service module for opnorm-lab.

Contains the Monte Carlo experiment runner: replication seeding, ordered
parallel execution, bias/RMSE aggregation and the individual experiments
(rank-estimator table, bound scaling, moment consistency, tail check).
"""

import logging
import math
import time
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from opnorm_lab.models.experiment_models import (
    BoundScalingConfig,
    CellSummary,
    ExperimentConfig,
    ExperimentResult,
    MomentConsistencyConfig,
    Table1Config,
    TailCheckConfig,
)
from opnorm_lab.models.factor_models import FactorModelSpec
from opnorm_lab.models.moment_models import get_moment_model
from opnorm_lab.models.process_models import ParamGrid, ParamMatrixFamily
from opnorm_lab.services.chaining import calibrate_C, gamma_upper, grid_space, tail_bound_value, theorem_bound
from opnorm_lab.services.factorrank import estimate_variants, generate_ffm
from opnorm_lab.services.momest import replicate
from opnorm_lab.services.subgauss import gen_innovations, ma_filter, sup_operator_norm
from opnorm_lab.utils.config import config
from opnorm_lab.utils.errors import ArgumentError, ConfigError, ReplicationError
from opnorm_lab.utils.parallel import ordered_map
from opnorm_lab.utils.rng import STREAM_CALIBRATION, split_seed

logger = logging.getLogger(__name__)

MIN_SCALING_POINTS = 4
TABLE1_SIZES = (25, 50, 100)

Record = Dict[str, Any]


def summarize(estimates: Sequence[float], truth: Optional[float]) -> Dict[str, Optional[float]]:
    """
    Mean, bias, RMSE and (population) variance of a set of estimates.

    rmse**2 == bias**2 + variance up to rounding.
    """
    values = np.asarray(estimates, dtype=np.float64)
    mean = float(values.mean())
    variance = float(values.var())
    if truth is None:
        return {"mean": mean, "bias": None, "rmse": None, "variance": variance}
    return {
        "mean": mean,
        "bias": mean - truth,
        "rmse": float(math.sqrt(np.mean((values - truth) ** 2))),
        "variance": variance,
    }


def _replicate(cfg: ExperimentConfig, dims: Tuple[int, int], one: Callable[[Tuple[int, int], int, int], List[Record]],
               workers: int) -> List[Record]:
    def guarded(rep: int) -> List[Record]:
        seed = split_seed(cfg.base_seed, rep)
        try:
            records = one(dims, rep, seed)
        except ConfigError:
            raise
        except Exception as exc:
            logger.error("Replication %d (N=%d, T=%d) failed with seed %d: %s", rep, dims[0], dims[1], seed, exc)
            raise ReplicationError(seed, exc) from exc
        return [{"N": dims[0], "T": dims[1], "rep": rep, "seed": seed, **record} for record in records]

    chunks = ordered_map(guarded, range(cfg.reps), workers)
    return [record for chunk in chunks for record in chunk]


def _cells(per_rep: List[Record], truth: Optional[float], value_key: str = "estimate") -> List[CellSummary]:
    frame = pd.DataFrame(per_rep)
    cells = []
    for (N, T, series), group in frame.groupby(["N", "T", "series"], sort=False):
        stats_ = summarize(group[value_key].to_numpy(), truth)
        cells.append(CellSummary(N=int(N), T=int(T), series=str(series), n=len(group), truth=truth, **stats_))
    return cells


def _process_family(sub, grid: ParamGrid, dims: Tuple[int, int], seed: int) -> ParamMatrixFamily:
    family = gen_innovations(sub.innovations, dims, grid, seed)
    if sub.filter is not None:
        burn_in = sub.burn_in if sub.burn_in is not None else sub.filter.truncation
        family = ma_filter(family, sub.filter, burn_in)
    return family


def _run_table1(cfg: ExperimentConfig, sub: Table1Config, workers: int) -> Tuple[List[Record], List[CellSummary], Dict]:
    truth = max(r for _, r in sub.rank_map)
    per_rep: List[Record] = []
    for dims in cfg.dims_list:
        def one(dims_: Tuple[int, int], rep: int, seed: int) -> List[Record]:
            spec = FactorModelSpec(N=dims_[0], T=dims_[1], rank_map=sub.rank_map, sigma=sub.sigma, seed=seed)
            estimates = estimate_variants(generate_ffm(spec), sub.variants, sub.k_max)
            return [
                {"series": variant, "estimate": est.r_hat, "threshold": est.threshold_used, "sigma_hat": est.sigma_hat}
                for variant, est in estimates.items()
            ]

        per_rep.extend(_replicate(cfg, dims, one, workers))
    return per_rep, _cells(per_rep, float(truth)), {"truth": truth, "k_max": sub.k_max}


def _calibrate(sub, grid: ParamGrid, dims: Tuple[int, int], base_seed: int, workers: int):
    seed = split_seed(base_seed, STREAM_CALIBRATION, dims[0], dims[1])
    return calibrate_C(lambda g, s: _process_family(sub, g, dims, s), grid, sub.calibration_reps, seed, workers)


def _run_bound_scaling(cfg: ExperimentConfig, sub: BoundScalingConfig, workers: int):
    if len(cfg.dims_list) < MIN_SCALING_POINTS:
        raise ArgumentError(f"bound_scaling needs at least {MIN_SCALING_POINTS} sizes, got {len(cfg.dims_list)}")
    grid = ParamGrid.line(sub.grid)
    calibrations = {dims: _calibrate(sub, grid, dims, cfg.base_seed, workers) for dims in cfg.dims_list}
    # conservative constant: largest per-size quantile of the calibration ratios
    c_cover = max(float(np.quantile(c.ratios, sub.coverage)) for c in calibrations.values())
    gamma = next(iter(calibrations.values())).gamma

    per_rep: List[Record] = []
    cells = []
    for dims in cfg.dims_list:
        def one(dims_: Tuple[int, int], rep: int, seed: int) -> List[Record]:
            return [{"series": "sup_norm", "estimate": sup_operator_norm(_process_family(sub, grid, dims_, seed)).value}]

        records = _replicate(cfg, dims, one, workers)
        per_rep.extend(records)
        sups = np.array([r["estimate"] for r in records])
        calibration = calibrations[dims]
        bound = theorem_bound(dims[0], dims[1], calibration.k_hat, gamma, c_cover)
        classical = sub.innovations.scale * (math.sqrt(dims[0]) + math.sqrt(dims[1]))
        cell = CellSummary(N=dims[0], T=dims[1], series="sup_norm", n=len(sups), **summarize(sups, None))
        cell.extra.update({
            "max_dim": float(max(dims)),
            "theorem_bound": bound,
            "ratio": cell.mean / bound,
            "share_below_bound": float(np.mean(sups <= bound)),
            "c_hat": calibration.c_hat,
            "c_hat_sd": calibration.sd,
            "k_hat": calibration.k_hat,
            "classical_ratio": cell.mean / classical,
        })
        cells.append(cell)

    x = np.log([c.extra["max_dim"] for c in cells])
    y = np.log([c.mean for c in cells])
    fit = stats.linregress(x, y)
    half_width = float(stats.t.ppf(0.975, len(cells) - 2) * fit.stderr)
    summary = {
        "slope": float(fit.slope),
        "slope_stderr": float(fit.stderr),
        "slope_ci_low": float(fit.slope) - half_width,
        "slope_ci_high": float(fit.slope) + half_width,
        "c_calibrated": c_cover,
        "gamma2": gamma,
        "diameter": grid.diameter,
    }
    logger.info("Bound scaling slope %.4f (95%% CI %.4f..%.4f), C=%.4f", fit.slope, summary["slope_ci_low"],
                summary["slope_ci_high"], c_cover)
    return per_rep, cells, summary


def _run_moment_consistency(cfg: ExperimentConfig, sub: MomentConsistencyConfig, workers: int):
    sub.estimator.check()
    model = get_moment_model(sub.model)
    per_rep: List[Record] = []
    cells = []
    for dims in cfg.dims_list:
        def one(dims_: Tuple[int, int], rep: int, seed: int) -> List[Record]:
            beta_hat, error, noise = replicate(model, sub.estimator, dims_, seed)
            return [{"series": sub.estimator.objective, "estimate": beta_hat, "abs_error": error, "noise_term": noise}]

        records = _replicate(cfg, dims, one, workers)
        per_rep.extend(records)
        (cell,) = _cells(records, model.beta0)
        cell.extra.update({
            "mean_abs_error": float(np.mean([r["abs_error"] for r in records])),
            "mean_noise_term": float(np.mean([r["noise_term"] for r in records])),
        })
        cells.append(cell)
    return per_rep, cells, {"beta0": model.beta0, "model": model.name, "grid_size": int(model.grid.size)}


def _run_tail_check(cfg: ExperimentConfig, sub: TailCheckConfig, workers: int):
    grid = ParamGrid.line(sub.grid)
    gamma = gamma_upper(grid_space(grid)).gamma_upper
    per_rep: List[Record] = []
    cells = []
    for dims in cfg.dims_list:
        calibration = _calibrate(sub, grid, dims, cfg.base_seed, workers)

        def one(dims_: Tuple[int, int], rep: int, seed: int) -> List[Record]:
            return [{"series": "sup_norm", "estimate": sup_operator_norm(_process_family(sub, grid, dims_, seed)).value}]

        records = _replicate(cfg, dims, one, workers)
        per_rep.extend(records)
        sups = np.array([r["estimate"] for r in records])
        for u in sub.u_values:
            tail = tail_bound_value(dims[0], dims[1], gamma, grid.diameter, calibration.k_hat, calibration.c_hat, u)
            frequency = float(np.mean(sups > tail.threshold))
            bound = 2.0 * math.exp(-u * u)
            p = min(bound, 1.0)
            se = math.sqrt(p * (1.0 - p) / len(sups))
            cell = CellSummary(N=dims[0], T=dims[1], series=f"u={u:g}", n=len(sups), mean=frequency)
            cell.extra.update({
                "u": float(u),
                "threshold": tail.threshold,
                "bound": bound,
                "binomial_se": se,
                "within_bound": float(frequency <= bound + 2.0 * se),
                "c_hat": calibration.c_hat,
            })
            cells.append(cell)
    return per_rep, cells, {"gamma2": gamma, "diameter": grid.diameter}


_RUNNERS = {
    "table1": _run_table1,
    "bound_scaling": _run_bound_scaling,
    "moment_consistency": _run_moment_consistency,
    "tail_check": _run_tail_check,
}


def run(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """
    Run an experiment.

    Replication j uses seed split_seed(base_seed, j); results do not depend on
    the number of worker threads.

    Args:
        cfg (ExperimentConfig): Experiment configuration.
        workers (int, optional): Worker threads; capped by OPNORM_LAB_THREADS.

    Returns:
        ExperimentResult: Per-replication records and per-cell aggregates.

    Raises:
        ReplicationError: If any replication fails (carries the seed).
    """
    workers = config.worker_count(workers)
    started = time.perf_counter()
    logger.info("Running %s: dims=%s reps=%d seed=%d workers=%d", cfg.experiment, cfg.dims_list,
                cfg.reps, cfg.base_seed, workers)
    per_rep, cells, summary = _RUNNERS[cfg.experiment](cfg, cfg.sub_config, workers)
    runtime = time.perf_counter() - started
    logger.info("Finished %s in %.2fs", cfg.experiment, runtime)
    return ExperimentResult(
        experiment=cfg.experiment,
        config_hash=cfg.config_hash(),
        reps=cfg.reps,
        per_rep=per_rep,
        cells=cells,
        summary=summary,
        runtime=runtime,
    )


def table1_frame(result: ExperimentResult) -> pd.DataFrame:
    """
    Lay out rank-estimator cells as rows (N, Bias|RMSE) and columns variant x T.
    """
    frame = result.cells_frame()
    variants = list(dict.fromkeys(frame["series"]))
    t_values = sorted(frame["T"].unique())
    rows = []
    for N in sorted(frame["N"].unique()):
        for label, column in (("Bias", "bias"), ("RMSE", "rmse")):
            row: Record = {"N": int(N), "stat": label}
            for variant in variants:
                for T in t_values:
                    match = frame[(frame["N"] == N) & (frame["T"] == T) & (frame["series"] == variant)]
                    row[f"{variant}_T{int(T)}"] = float(match[column].iloc[0]) if len(match) else math.nan
            rows.append(row)
    return pd.DataFrame(rows)


def format_table1(frame: pd.DataFrame) -> str:
    """Aligned text rendering with one decimal place."""
    return frame.to_string(index=False, float_format=lambda v: f"{v:.1f}") + "\n"


def table1(reps: int, base_seed: int, workers: Optional[int] = None, sigma: float = 1.0,
           k_max: Optional[int] = None, sizes: Sequence[int] = TABLE1_SIZES) -> Tuple[ExperimentResult, pd.DataFrame]:
    """
    Rank-estimator Monte Carlo over all (N, T) in sizes x sizes and the three thresholds.

    Returns:
        Tuple[ExperimentResult, pd.DataFrame]: Raw result and the table layout.
    """
    sub = Table1Config(sigma=sigma, k_max=k_max or config.K_MAX)
    cfg = ExperimentConfig(
        experiment="table1",
        dims_list=[(N, T) for N in sizes for T in sizes],
        reps=reps,
        base_seed=base_seed,
        sub_config=sub,
    )
    result = run(cfg, workers)
    return result, table1_frame(result)


def _expect(cfg: ExperimentConfig, name: str) -> None:
    if cfg.experiment != name:
        raise ConfigError(f"expected a {name!r} experiment, got {cfg.experiment!r}", field="experiment")


def bound_scaling(cfg: ExperimentConfig, workers: Optional[int] = None) -> Tuple[ExperimentResult, pd.DataFrame]:
    """
    Observed mean sup-norm against the uniform bound, one row per size.

    The log-log slope and its 95% interval are in result.summary.

    Returns:
        Tuple[ExperimentResult, pd.DataFrame]: Raw result and columns
            N, T, mean_sup, theorem_bound, ratio, share_below_bound.

    Raises:
        ConfigError: If cfg is not a bound_scaling experiment.
        ArgumentError: If fewer than four sizes are given.
    """
    _expect(cfg, "bound_scaling")
    result = run(cfg, workers)
    frame = pd.DataFrame([
        {"N": c.N, "T": c.T, "mean_sup": c.mean, "theorem_bound": c.extra["theorem_bound"],
         "ratio": c.extra["ratio"], "share_below_bound": c.extra["share_below_bound"]}
        for c in result.cells
    ])
    return result, frame


def tail_check(cfg: ExperimentConfig, workers: Optional[int] = None) -> Tuple[ExperimentResult, pd.DataFrame]:
    """
    Exceedance frequency of the tail threshold against 2 exp(-u^2), one row per (size, u).

    Returns:
        Tuple[ExperimentResult, pd.DataFrame]: Raw result and columns
            N, T, u, frequency, bound, binomial_se, within_bound.
    """
    _expect(cfg, "tail_check")
    if cfg.reps < 500:
        logger.warning("tail_check with %d reps; at least 500 are needed for a meaningful comparison", cfg.reps)
    result = run(cfg, workers)
    frame = pd.DataFrame([
        {"N": c.N, "T": c.T, "u": c.extra["u"], "frequency": c.mean, "bound": c.extra["bound"],
         "binomial_se": c.extra["binomial_se"], "within_bound": bool(c.extra["within_bound"])}
        for c in result.cells
    ])
    return result, frame


def plot_data(result: ExperimentResult) -> pd.DataFrame:
    """
    Long-format (x, y, series) table for external plotting.
    """
    rows = []
    for cell in result.cells:
        size = f"N={cell.N},T={cell.T}"
        if result.experiment == "table1":
            rows.append({"x": cell.T, "y": cell.bias, "series": f"bias:{cell.series}:N={cell.N}"})
            rows.append({"x": cell.T, "y": cell.rmse, "series": f"rmse:{cell.series}:N={cell.N}"})
        elif result.experiment == "bound_scaling":
            rows.append({"x": cell.extra["max_dim"], "y": cell.mean, "series": "observed_mean_sup"})
            rows.append({"x": cell.extra["max_dim"], "y": cell.extra["theorem_bound"], "series": "theorem_bound"})
        elif result.experiment == "moment_consistency":
            x = min(cell.N, cell.T)
            rows.append({"x": x, "y": cell.extra["mean_abs_error"], "series": f"mean_abs_error:{cell.series}"})
            rows.append({"x": x, "y": cell.extra["mean_noise_term"], "series": "noise_term"})
        else:
            rows.append({"x": cell.extra["u"], "y": cell.mean, "series": f"frequency:{size}"})
            rows.append({"x": cell.extra["u"], "y": cell.extra["bound"], "series": f"bound:{size}"})
    return pd.DataFrame(rows, columns=["x", "y", "series"])
