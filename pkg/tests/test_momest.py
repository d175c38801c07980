import math
from typing import List

import numpy as np
import pytest
from pydantic import ValidationError

from opnorm_lab.models.moment_models import (
    EstimatorConfig,
    LocationModel,
    MomentModel,
    MomentModelConfig,
    get_moment_model,
    register_moment_model,
    registered_models,
)
from opnorm_lab.services.matcore import operator_norm, top_singular_sum
from opnorm_lab.services.momest import (
    consistency_diagnostic,
    estimate,
    identification_margin,
    moment_condition_check,
    noise_term,
    objective_value,
    top_r_noise_check,
)
from opnorm_lab.utils.errors import ArgumentError, ConfigError, DataError

OPNORM = EstimatorConfig()
CONVENTIONAL = EstimatorConfig(objective="conventional")


class ConstantModel(MomentModel):
    """Moments that do not depend on beta."""

    name = "constant_test"

    def moments(self, data: np.ndarray, beta: float) -> List[np.ndarray]:
        return [np.asarray(data, dtype=np.float64)]

    def data_gen(self, N: int, T: int, seed: int) -> np.ndarray:
        return np.ones((N, T))


class ScaledLocationModel(LocationModel):
    """Location moments multiplied by a constant."""

    name = "scaled_location_test"
    factor = 3.0

    def moments(self, data: np.ndarray, beta: float) -> List[np.ndarray]:
        return [self.factor * (data - beta)]


class FloorModel(MomentModel):
    """Rank-one moments max(|beta - 0.4|, 0.15) * 1 1', flat on [0.3, 0.5] of a 0.1 grid."""

    name = "floor_test"

    def moments(self, data: np.ndarray, beta: float) -> List[np.ndarray]:
        return [max(abs(beta - 0.4), 0.15) * np.asarray(data, dtype=np.float64)]

    def data_gen(self, N: int, T: int, seed: int) -> np.ndarray:
        return np.ones((N, T))


def location(**kwargs) -> MomentModel:
    return get_moment_model(MomentModelConfig(**kwargs))


def test_registry():
    assert {"location", "location_moments"} <= set(registered_models())
    with pytest.raises(ConfigError) as info:
        location(name="no_such_model")
    assert info.value.field == "name"
    with pytest.raises(ConfigError):
        register_moment_model(LocationModel)


def test_grid_construction():
    model = location(grid_step=0.25)
    assert model.grid.tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert model.bounds == (0.0, 1.0)
    explicit = location(grid=[0.9, 0.1, 0.5, 0.1])
    assert explicit.grid.tolist() == [0.1, 0.5, 0.9]
    with pytest.raises(ConfigError):
        location(grid_lo=1.0, grid_hi=0.0)
    with pytest.raises(ValidationError):
        MomentModelConfig(grid_step=0.0)


def test_estimator_config_checks():
    with pytest.raises(ConfigError) as info:
        EstimatorConfig(objective="top_r").check()
    assert info.value.field == "r_nt"
    with pytest.raises(ConfigError) as info:
        EstimatorConfig(objective="weighted", weights=[0.5, 0.4]).check()
    assert info.value.field == "weights"
    with pytest.raises(ConfigError):
        EstimatorConfig(objective="weighted").check()
    with pytest.raises(ValidationError):
        EstimatorConfig(objective="gmm")
    EstimatorConfig(objective="weighted", weights=[0.25, 0.75]).check()


def test_objectives_vanish_at_exact_moments():
    model = location(noise_sd=0.0, name="location_moments")
    data = model.data_gen(20, 30, seed=1)
    assert np.all(data == 0.5)
    for cfg in (OPNORM, CONVENTIONAL, EstimatorConfig(objective="top_r", r_nt=2),
                EstimatorConfig(objective="weighted", weights=[0.5, 0.5])):
        assert objective_value(model, data, 0.5, cfg) == 0.0


def test_rank_one_moment_objective():
    model = location(noise_sd=0.0)
    data = model.data_gen(10, 40, seed=0)
    for beta in (0.0, 0.2, 0.9):
        assert objective_value(model, data, beta, OPNORM) == pytest.approx(abs(0.5 - beta), rel=1e-12)
        assert objective_value(model, data, beta, CONVENTIONAL) == pytest.approx(abs(0.5 - beta), rel=1e-12)


def test_expected_moment_norm_equals_distance():
    model = location()
    for beta in model.grid[::10]:
        (expected,) = model.expected_moments(float(beta), (15, 25))
        assert operator_norm(expected) / math.sqrt(15 * 25) == pytest.approx(abs(0.5 - beta), abs=1e-12)
    assert identification_margin(model, 0.195, (15, 25)) == pytest.approx(0.2, abs=1e-9)
    assert identification_margin(model, 2.0, (15, 25)) == math.inf


def test_noiseless_estimates_hit_the_truth():
    model = location(noise_sd=0.0)
    data = model.data_gen(25, 25, seed=2)
    for cfg in (OPNORM, CONVENTIONAL):
        result = estimate(model, data, cfg)
        assert result.beta_hat == 0.5
        assert result.objective_at_min == 0.0
        values = [v for _, v in result.profile]
        assert np.allclose(values, np.abs(model.grid - 0.5), atol=1e-12)


def test_conventional_estimate_is_nearest_grid_point_to_the_mean():
    model = location()
    for seed in range(5):
        data = model.data_gen(30, 30, seed)
        nearest = model.grid[np.argmin(np.abs(model.grid - data.mean()))]
        assert estimate(model, data, CONVENTIONAL).beta_hat == pytest.approx(nearest)


def test_profile_is_convex_in_beta():
    model = location()
    data = model.data_gen(40, 40, seed=3)
    values = np.array([v for _, v in estimate(model, data, OPNORM).profile])
    assert np.all(np.diff(values, 2) >= -1e-10)


def test_ties_go_to_the_smallest_beta():
    model = ConstantModel(MomentModelConfig(grid=[0.3, 0.1, 0.2]))
    result = estimate(model, model.data_gen(4, 4, 0), EstimatorConfig(plateau_tol=0.0))
    assert result.beta_hat == 0.1
    assert result.objective_at_min == pytest.approx(1.0)
    assert estimate(model, model.data_gen(4, 4, 0), OPNORM).beta_hat == 0.2


def test_flat_minimum_reports_its_center():
    model = FloorModel(MomentModelConfig(grid_step=0.1))
    data = model.data_gen(6, 8, 0)
    assert estimate(model, data, EstimatorConfig(plateau_tol=0.0)).beta_hat == 0.3
    centered = estimate(model, data, OPNORM)
    assert centered.beta_hat == 0.4
    assert centered.objective_at_min == pytest.approx(0.15)
    # the conventional objective keeps the plain argmin
    assert estimate(model, data, CONVENTIONAL).beta_hat == 0.3
    with pytest.raises(ValidationError):
        EstimatorConfig(plateau_tol=-0.1)


def test_plateau_center_tracks_the_sample_mean():
    model = location()
    errors = []
    for seed in range(10):
        data = model.data_gen(100, 100, seed)
        errors.append(abs(estimate(model, data, OPNORM).beta_hat - 0.5))
    assert float(np.mean(errors)) <= 0.03


def test_scaling_the_moments_scales_the_objective():
    base = location()
    scaled = ScaledLocationModel(MomentModelConfig())
    data = base.data_gen(30, 20, seed=4)
    base_result = estimate(base, data, OPNORM)
    scaled_result = estimate(scaled, data, OPNORM)
    assert scaled_result.beta_hat == base_result.beta_hat
    for (_, v_base), (_, v_scaled) in zip(base_result.profile, scaled_result.profile):
        assert v_scaled == pytest.approx(3.0 * v_base, rel=1e-12)


def test_non_finite_data_is_rejected():
    model = location()
    data = model.data_gen(5, 5, seed=0)
    data[2, 2] = np.nan
    assert math.isnan(objective_value(model, data, 0.5, OPNORM))
    with pytest.raises(DataError):
        estimate(model, data, OPNORM)


def test_beta_outside_the_grid_range():
    model = location()
    with pytest.raises(ArgumentError):
        objective_value(model, model.data_gen(5, 5, 0), 1.5, OPNORM)


def test_refinement_never_worsens_the_grid_minimum():
    model = location(grid_step=0.1)
    data = model.data_gen(30, 30, seed=6)
    coarse = estimate(model, data, CONVENTIONAL)
    refined = estimate(model, data, EstimatorConfig(objective="conventional", refine=True))
    assert refined.objective_at_min <= coarse.objective_at_min
    assert refined.beta_hat == pytest.approx(data.mean(), abs=1e-6)


def test_noise_term_bounds_the_moment_at_the_truth():
    model = location()
    for seed in range(5):
        data = model.data_gen(40, 30, seed)
        root = math.sqrt(40 * 30)
        truth_norm = operator_norm(model.moment_fn(data, model.beta0)) / root
        assert truth_norm <= noise_term(model, data) + 1e-8
        assert noise_term(model, data) == pytest.approx(operator_norm(data - 0.5) / root, rel=1e-12)


def test_noise_term_for_stacked_moments():
    model = location(name="location_moments", grid_step=0.1)
    data = model.data_gen(20, 20, seed=1)
    weighted = EstimatorConfig(objective="weighted", weights=[0.5, 0.5])
    assert noise_term(model, data, weighted) > 0.0
    assert noise_term(model, data) >= operator_norm(data - 0.5) / 20.0 - 1e-12


def test_noise_term_needs_expected_moments():
    model = ConstantModel(MomentModelConfig(grid=[0.0, 1.0]))
    with pytest.raises(ConfigError):
        noise_term(model, model.data_gen(3, 3, 0))


def test_moment_condition_check():
    mean, se, ok = moment_condition_check(location(), (50, 50), seed=0)
    assert se > 0.0
    assert abs(mean) <= 4.0 * se
    assert isinstance(ok, bool)
    mean, se, ok = moment_condition_check(location(noise_sd=0.0), (10, 10), seed=0)
    assert mean == 0.0 and ok


def test_top_r_noise_check():
    model = location()
    data = [model.data_gen(40, 50, seed) for seed in range(3)]
    frame = top_r_noise_check(model, data, [1, 2, 5])
    assert len(frame) == 9
    assert frame["holds"].all()
    first = frame[frame["r_nt"] == 1]
    assert np.allclose(first["top_sum"], first["bound"], rtol=1e-12)
    assert np.allclose(frame["rate"], frame["r_nt"] / math.sqrt(40))
    with pytest.raises(ArgumentError):
        top_r_noise_check(model, data[:1], [40])


def test_top_r_noise_sum_is_small_at_scale():
    model = location()
    data = model.data_gen(400, 400, seed=0)
    frame = top_r_noise_check(model, [data], [4])
    assert float(frame["top_sum"].iloc[0]) <= 0.5
    assert top_singular_sum(data - 0.5, 4) / 400.0 == pytest.approx(float(frame["top_sum"].iloc[0]), rel=1e-8)


def test_consistency_diagnostic():
    model = location()
    with pytest.raises(ArgumentError):
        consistency_diagnostic(model, OPNORM, [(20, 20)], reps=19, seed=0)
    frame = consistency_diagnostic(model, OPNORM, [(25, 25), (50, 50), (100, 100)], reps=20, seed=0, workers=2)
    assert list(frame.columns) == ["N", "T", "reps", "mean_abs_error", "sd_abs_error", "mean_noise_term",
                                   "sd_noise_term"]
    noise = frame["mean_noise_term"].to_numpy()
    assert np.all(np.diff(noise) < 0)
    ratios = noise[:-1] / noise[1:]
    assert np.all((ratios > 1.3) & (ratios < 1.5))
    assert frame["mean_abs_error"].iloc[-1] <= 0.15


def test_consistency_diagnostic_is_deterministic():
    model = location(grid_step=0.05)
    first = consistency_diagnostic(model, OPNORM, [(20, 20)], reps=20, seed=4, workers=1)
    second = consistency_diagnostic(model, OPNORM, [(20, 20)], reps=20, seed=4, workers=3)
    assert first.equals(second)


@pytest.mark.slow
def test_operator_norm_estimator_is_consistent():
    model = location()
    frame = consistency_diagnostic(model, OPNORM, [(50, 50), (100, 100), (200, 200)], reps=100, seed=1)
    errors = frame["mean_abs_error"].to_numpy()
    assert errors[-1] <= 0.02
    assert errors[-1] <= errors[0]
    conventional = consistency_diagnostic(model, CONVENTIONAL, [(200, 200)], reps=100, seed=1)
    assert float(conventional["mean_abs_error"].iloc[0]) <= 0.01
