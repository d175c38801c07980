"""
Command-line entry point for opnorm-lab.

Subcommands wire configuration documents to the services and serialize
their results. Exit status: 0 on success, 2 on configuration errors and 1 on
runtime failures.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, ValidationError

from opnorm_lab import __version__
from opnorm_lab.models.chaining_models import FiniteMetricSpace
from opnorm_lab.models.cli_models import (
    EXPERIMENT_COMMANDS,
    ChainingOptions,
    CliConfig,
    MomentOptions,
    RankOptions,
    SimulateOptions,
)
from opnorm_lab.models.experiment_models import ExperimentConfig
from opnorm_lab.models.factor_models import FactorModelSpec, ThresholdConfig
from opnorm_lab.models.moment_models import get_moment_model
from opnorm_lab.models.process_models import MAFilterSpec, ParamGrid, SubGaussianSpec
from opnorm_lab.services.chaining import gamma_upper, sample_sphere, space_from_csv
from opnorm_lab.services.factorrank import estimate_max_rank, generate_ffm, load_family_from_manifest
from opnorm_lab.services.harness import bound_scaling, format_table1, plot_data, run, table1_frame, tail_check
from opnorm_lab.services.matcore import operator_norm
from opnorm_lab.services.momest import estimate, noise_term
from opnorm_lab.services.subgauss import export_family, gen_innovations, ma_filter
from opnorm_lab.utils.config import config
from opnorm_lab.utils.errors import ConfigError, DataError, InputValidationError, OpnormLabError, ReplicationError
from opnorm_lab.utils.io import frame_to_csv_text, read_json, write_frame_csv
from opnorm_lab.utils.logger import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

COMMON_KEYS = {"command", "config", "seed", "out", "format", "threads", "plot_data", "log_level"}
DEFAULT_FORMAT = {"chaining": "json", "rank": "json"}


class Output(NamedTuple):
    frame: pd.DataFrame
    payload: Dict[str, Any]
    text: str
    plot: Optional[pd.DataFrame] = None


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from exc


def _int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from exc


def _dims_list(value: str) -> List[Tuple[int, int]]:
    try:
        pairs = [tuple(int(x) for x in item.lower().split("x")) for item in value.split(",") if item.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected sizes like 50x50,100x100, got {value!r}") from exc
    if not pairs or any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"expected sizes like 50x50,100x100, got {value!r}")
    return pairs


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser with one subparser per command."""
    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(
        prog="opnorm-lab",
        description="Uniform operator-norm bounds, chaining functionals and the estimators built on them.",
        formatter_class=formatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON options or experiment document")
    common.add_argument("--seed", type=int, default=None, help="Seed override")
    common.add_argument("--out", default=None, help="Output file (stdout when omitted)")
    common.add_argument("--format", choices=["csv", "json", "text"], default=None,
                        help="Output format (json for chaining/rank, csv otherwise)")
    common.add_argument("--threads", type=int, default=None, help="Worker threads, capped by OPNORM_LAB_THREADS")
    common.add_argument("--plot-data", default=None, help="Write long-format (x, y, series) CSV here")
    common.add_argument("--log-level", default=None, help="Logging level (defaults to LOG_LEVEL)")

    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text, formatter_class=formatter)

    simulate = command("simulate", "Simulate a sub-Gaussian matrix family and report per-beta operator norms")
    simulate.add_argument("--family", choices=["gaussian", "rademacher", "uniform_bounded", "trig_process"],
                          default="trig_process", help="Innovation family")
    simulate.add_argument("--N", type=int, default=100, help="Rows")
    simulate.add_argument("--T", type=int, default=100, help="Columns")
    simulate.add_argument("--grid", type=_float_list, default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
                          help="Comma-separated beta grid")
    simulate.add_argument("--scale", type=float, default=1.0, help="Entry scale")
    simulate.add_argument("--trig-sigma", type=float, default=1.0, help="sigma of the trigonometric process")
    simulate.add_argument("--ma-rho", type=float, default=None, help="Geometric MA coefficient rho")
    simulate.add_argument("--ma-lags", type=int, default=0, help="MA truncation L")
    simulate.add_argument("--export-dir", default=None, help="Write per-beta matrices and manifest.json here")

    chaining = command("chaining", "Chaining functionals of a finite metric space")
    chaining.add_argument("--points", default=None, help="Point-cloud CSV (Euclidean metric)")
    chaining.add_argument("--distances", default=None, help="Distance-matrix CSV")
    chaining.add_argument("--sphere-n", type=int, default=None, help="Sample this many points on a sphere instead")
    chaining.add_argument("--sphere-d", type=int, default=3, help="Ambient dimension of the sampled sphere")
    chaining.add_argument("--alpha", type=float, default=2.0, help="Functional order alpha")

    rank = command("rank", "Maximal-rank estimate for external or simulated functional factor data")
    rank.add_argument("--manifest", default=None, help="Grid manifest of per-beta CSV matrices")
    rank.add_argument("--N", type=int, default=100, help="Rows of the simulated design")
    rank.add_argument("--T", type=int, default=100, help="Columns of the simulated design")
    rank.add_argument("--sigma", type=float, default=1.0, help="Noise scale of the simulated design")
    rank.add_argument("--variant", choices=["psi1", "psi2", "psi3"], default="psi2", help="Threshold rule")
    rank.add_argument("--k-max", type=int, default=config.K_MAX, help="Factors partialled out for sigma-hat")
    rank.add_argument("--explicit", type=float, default=None, help="Fixed threshold overriding the rule")

    moment = command("moment", "Grid-search moment estimate, or a consistency experiment with --dims")
    moment.add_argument("--model", default="location", help="Registered moment model")
    moment.add_argument("--beta0", type=float, default=0.5, help="True parameter")
    moment.add_argument("--grid-step", type=float, default=0.01, help="Grid spacing on [0, 1]")
    moment.add_argument("--noise-sd", type=float, default=1.0, help="Noise standard deviation")
    moment.add_argument("--objective", choices=["opnorm", "conventional", "top_r", "weighted"], default="opnorm",
                        help="Objective function")
    moment.add_argument("--r-nt", type=int, default=None, help="R_NT for the top_r objective")
    moment.add_argument("--weights", type=_float_list, default=None, help="Comma-separated weights (weighted)")
    moment.add_argument("--refine", action="store_true", help="Refine the grid argmin")
    moment.add_argument("--plateau-tol", type=float, default=None,
                        help="Relative width of the near-minimum run whose center is reported (0: plain argmin)")
    moment.add_argument("--N", type=int, default=100, help="Rows")
    moment.add_argument("--T", type=int, default=100, help="Columns")
    moment.add_argument("--dims", type=_dims_list, default=None, help="Run the consistency experiment on these sizes")
    moment.add_argument("--reps", type=int, default=config.DEFAULT_REPS, help="Replications per size (with --dims)")

    table1 = command("table1", "Rank-estimator bias/RMSE table over N, T in sizes x sizes")
    table1.add_argument("--reps", type=int, default=config.DEFAULT_REPS, help="Replications per cell")
    table1.add_argument("--sizes", type=_int_list, default="25,50,100", help="Comma-separated N = T values")
    table1.add_argument("--sigma", type=float, default=1.0, help="Noise scale (0 for noiseless)")
    table1.add_argument("--k-max", type=int, default=config.K_MAX, help="Factors partialled out for sigma-hat")

    for name, help_text, dims in (
        ("bound", "Observed sup-norm against the uniform bound across sizes", "50x50,100x100,200x200,400x400"),
        ("tail", "Exceedance frequencies of the tail bound", "100x100"),
    ):
        experiment = command(name, help_text)
        experiment.add_argument("--reps", type=int, default=config.DEFAULT_REPS, help="Fresh replications per size")
        experiment.add_argument("--dims", type=_dims_list, default=dims, help="Comma-separated NxT sizes")
        experiment.add_argument("--family", choices=["gaussian", "rademacher", "uniform_bounded", "trig_process"],
                                default="trig_process", help="Innovation family")
        experiment.add_argument("--grid", type=_float_list, default="0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
                                help="Comma-separated beta grid")
        experiment.add_argument("--calibration-reps", type=int, default=200 if name == "tail" else 50,
                                help="Independent replications used to calibrate C")
        if name == "tail":
            experiment.add_argument("--u", type=_float_list, default="0.5,1,1.5,2", help="Deviation levels u")

    return parser


def cli_config_from_args(args: argparse.Namespace) -> CliConfig:
    values = vars(args)
    return CliConfig(
        command=values["command"],
        config_path=values.get("config"),
        seed=values.get("seed"),
        out=values.get("out"),
        format=values.get("format"),
        threads=values.get("threads"),
        plot_data=values.get("plot_data"),
        log_level=values.get("log_level"),
        options={k: v for k, v in values.items() if k not in COMMON_KEYS},
    )


def _load_document(cfg: CliConfig) -> Optional[Dict[str, Any]]:
    if cfg.config_path is None:
        return None
    path = Path(cfg.config_path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}", field="config")
    try:
        document = read_json(path)
    except DataError as exc:
        raise ConfigError(str(exc), field="config") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: expected a JSON object", field="config")
    return document


def _options(cfg: CliConfig, model: type, flags: Dict[str, Any]) -> BaseModel:
    document = _load_document(cfg)
    if document is None:
        document = {k: v for k, v in flags.items() if v is not None}
    options = model.model_validate(document)
    if cfg.seed is not None:
        options = options.model_copy(update={"seed": cfg.seed})
    return options


def _simulate(cfg: CliConfig, workers: int) -> Output:
    flags = {k: cfg.options.get(k) for k in ("family", "N", "T", "grid", "scale", "trig_sigma", "ma_rho",
                                              "ma_lags", "export_dir")}
    opts = _options(cfg, SimulateOptions, flags)
    grid = ParamGrid.line(opts.grid)
    spec = SubGaussianSpec(family=opts.family, scale=opts.scale, trig_sigma=opts.trig_sigma)
    family = gen_innovations(spec, (opts.N, opts.T), grid, opts.seed)
    if opts.ma_rho is not None:
        family = ma_filter(family, MAFilterSpec.geometric(opts.ma_rho, opts.ma_lags), opts.ma_lags)
    norms = [operator_norm(m) for m in family.matrices()]
    frame = pd.DataFrame({"beta": grid.scalars(), "operator_norm": norms})
    if opts.export_dir:
        export_family(family, opts.export_dir)
    payload = {"family": family.label, "N": opts.N, "T": opts.T, "seed": opts.seed,
               "sup_operator_norm": max(norms), "per_beta": frame.to_dict(orient="records")}
    return Output(frame, payload, frame.to_string(index=False) + "\n")


def _chaining(cfg: CliConfig, workers: int) -> Output:
    flags = {k: cfg.options.get(k) for k in ("points", "distances", "sphere_n", "sphere_d", "alpha")}
    opts = _options(cfg, ChainingOptions, flags)
    if opts.sphere_n is not None:
        if opts.points or opts.distances:
            raise ConfigError("give either a CSV or sphere_n, not both", field="sphere_n")
        space: FiniteMetricSpace = sample_sphere(opts.sphere_n, opts.sphere_d, opts.seed)
    else:
        try:
            space = space_from_csv(opts.points, opts.distances)
        except (DataError, InputValidationError) as exc:
            raise ConfigError(str(exc), field="points" if opts.points else "distances") from exc
    result = gamma_upper(space, opts.alpha)
    payload = {**result.summary(), "n": space.n, "diameter": space.diameter}
    frame = pd.DataFrame({
        "k": range(len(result.ek_radii)),
        "ek_radius": result.ek_radii,
        "sequence_size": result.sequence.sizes(),
    })
    text = "\n".join(f"{key}: {payload[key]}" for key in sorted(payload)) + "\n"
    return Output(frame, payload, text)


def _rank(cfg: CliConfig, workers: int) -> Output:
    flags = {k: cfg.options.get(k) for k in ("manifest", "N", "T", "sigma", "variant", "k_max", "explicit")}
    opts = _options(cfg, RankOptions, flags)
    if opts.manifest:
        family = load_family_from_manifest(opts.manifest)
    else:
        family = generate_ffm(FactorModelSpec.reference_design(opts.N, opts.T, opts.sigma, opts.seed))
    threshold = ThresholdConfig(variant=opts.variant, k_max=opts.k_max, explicit_value=opts.explicit)
    result = estimate_max_rank(family, threshold, workers)
    frame = pd.DataFrame({
        "l": range(1, len(result.sup_singulars) + 1),
        "sup_singular": result.sup_singulars,
        "exceeds": [s >= result.threshold_used and s > 0 for s in result.sup_singulars],
    })
    text = (f"r_hat: {result.r_hat}\nthreshold: {result.threshold_used:.6g}\n"
            f"sigma_hat: {result.sigma_hat:.6g}\n")
    return Output(frame, result.model_dump(mode="json"), text)


def _experiment_output(result) -> Output:
    frame = result.cells_frame()
    return Output(frame, result.model_dump(mode="json"), frame.to_string(index=False) + "\n", plot_data(result))


def _experiment_config(cfg: CliConfig, document: Optional[Dict[str, Any]], built: Dict[str, Any],
                       name: str) -> ExperimentConfig:
    experiment = ExperimentConfig.model_validate(document if document is not None else built)
    if experiment.experiment != name:
        raise ConfigError(f"expected experiment {name!r}, got {experiment.experiment!r}", field="experiment")
    if cfg.seed is not None:
        experiment = experiment.model_copy(update={"base_seed": cfg.seed})
    return experiment


def _moment(cfg: CliConfig, workers: int) -> Output:
    document = _load_document(cfg)
    o = cfg.options
    model_doc = {"name": o.get("model"), "beta0": o.get("beta0"), "grid_step": o.get("grid_step"),
                 "noise_sd": o.get("noise_sd")}
    estimator_doc = {"objective": o.get("objective"), "r_nt": o.get("r_nt"), "weights": o.get("weights"),
                     "refine": o.get("refine"), "plateau_tol": o.get("plateau_tol")}
    model_doc = {k: v for k, v in model_doc.items() if v is not None}
    estimator_doc = {k: v for k, v in estimator_doc.items() if v is not None}

    if (document is not None and "experiment" in document) or (document is None and o.get("dims")):
        built = {"experiment": "moment_consistency", "dims_list": o.get("dims"), "reps": o.get("reps"),
                 "sub_config": {"model": model_doc, "estimator": estimator_doc}}
        experiment = _experiment_config(cfg, document, built, "moment_consistency")
        return _experiment_output(run(experiment, workers))

    if document is None:
        document = {"model": model_doc, "estimator": estimator_doc, "N": o.get("N"), "T": o.get("T")}
        document = {k: v for k, v in document.items() if v is not None}
    opts = MomentOptions.model_validate(document)
    if cfg.seed is not None:
        opts = opts.model_copy(update={"seed": cfg.seed})
    model = get_moment_model(opts.model)
    data = model.data_gen(opts.N, opts.T, opts.seed)
    result = estimate(model, data, opts.estimator, workers)
    payload: Dict[str, Any] = {
        "beta_hat": result.beta_hat,
        "objective_at_min": result.objective_at_min,
        "objective": opts.estimator.objective,
        "profile": [list(p) for p in result.profile],
    }
    if model.expected_moments(model.beta0, (opts.N, opts.T)) is not None:
        payload["noise_term"] = noise_term(model, data, opts.estimator)
    frame = pd.DataFrame(result.profile, columns=["beta", "objective"])
    text = f"beta_hat: {result.beta_hat:.6g}\nobjective_at_min: {result.objective_at_min:.6g}\n"
    return Output(frame, payload, text)


def _table1(cfg: CliConfig, workers: int) -> Output:
    o = cfg.options
    sizes = o.get("sizes") or [25, 50, 100]
    built = {
        "experiment": "table1",
        "dims_list": [(n, t) for n in sizes for t in sizes],
        "reps": o.get("reps"),
        "sub_config": {"sigma": o.get("sigma"), "k_max": o.get("k_max")},
    }
    built["sub_config"] = {k: v for k, v in built["sub_config"].items() if v is not None}
    experiment = _experiment_config(cfg, _load_document(cfg), built, "table1")
    result = run(experiment, workers)
    frame = table1_frame(result)
    return Output(frame, result.model_dump(mode="json"), format_table1(frame), plot_data(result))


def _process_experiment(cfg: CliConfig, workers: int) -> Output:
    o = cfg.options
    name = EXPERIMENT_COMMANDS[cfg.command]
    sub: Dict[str, Any] = {
        "innovations": {"family": o.get("family") or "trig_process"},
        "grid": o.get("grid"),
        "calibration_reps": o.get("calibration_reps"),
    }
    if name == "tail_check":
        sub["u_values"] = o.get("u")
    built = {
        "experiment": name,
        "dims_list": o.get("dims"),
        "reps": o.get("reps"),
        "sub_config": {k: v for k, v in sub.items() if v is not None},
    }
    experiment = _experiment_config(cfg, _load_document(cfg), built, name)
    result, frame = (bound_scaling if name == "bound_scaling" else tail_check)(experiment, workers)
    return Output(frame, result.model_dump(mode="json"), frame.to_string(index=False) + "\n", plot_data(result))


_HANDLERS: Dict[str, Callable[[CliConfig, int], Output]] = {
    "simulate": _simulate,
    "chaining": _chaining,
    "rank": _rank,
    "moment": _moment,
    "table1": _table1,
    "bound": _process_experiment,
    "tail": _process_experiment,
}


def _render(output: Output, fmt: str) -> str:
    if fmt == "csv":
        return frame_to_csv_text(output.frame)
    if fmt == "json":
        return json.dumps(output.payload, indent=2, sort_keys=True) + "\n"
    return output.text


def _write(output: Output, cfg: CliConfig) -> None:
    fmt = cfg.format or DEFAULT_FORMAT.get(cfg.command, "csv")
    rendered = _render(output, fmt)
    if cfg.out:
        path = Path(cfg.out)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(rendered)
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc.strerror}", field="out") from exc
        logger.info("Wrote %s output to %s", fmt, path)
    else:
        sys.stdout.write(rendered)
    if cfg.plot_data:
        if output.plot is None:
            logger.warning("%s produces no plot data; --plot-data ignored", cfg.command)
        else:
            write_frame_csv(output.plot, cfg.plot_data)


def _field_path(exc: ValidationError) -> str:
    error = exc.errors()[0]
    return ".".join(str(part) for part in error["loc"]) or "<root>"


def dispatch(cfg: CliConfig) -> int:
    """
    Run one command.

    Args:
        cfg (CliConfig): Parsed command line.

    Returns:
        int: 0 on success, 2 on configuration errors, 1 on runtime failures.
    """
    try:
        if cfg.log_level is not None and not isinstance(logging.getLevelName(cfg.log_level.upper()), int):
            raise ConfigError(f"unknown log level {cfg.log_level!r}", field="log_level")
        setup_logging(cfg.log_level)
        if not config.validate_config():
            raise ConfigError("invalid environment configuration", field="environment")
        workers = config.worker_count(cfg.threads)
        _write(_HANDLERS[cfg.command](cfg, workers), cfg)
        return EXIT_OK
    except ValidationError as exc:
        error = exc.errors()[0]
        print(f"❌ config error in field '{_field_path(exc)}': {error['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        field = f" (field '{exc.field}')" if exc.field else ""
        print(f"❌ {exc}{field}", file=sys.stderr)
        return EXIT_CONFIG
    except ReplicationError as exc:
        print(f"❌ {exc} (seed {exc.seed})", file=sys.stderr)
        return EXIT_RUNTIME
    except OpnormLabError as exc:
        print(f"❌ {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments and dispatch."""
    args = build_parser().parse_args(argv)
    return dispatch(cli_config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
