import math

import numpy as np
import pytest

from opnorm_lab.models.process_models import MAFilterSpec, ParamGrid, ParamMatrixFamily, SubGaussianSpec
from opnorm_lab.services.factorrank import load_family_from_manifest
from opnorm_lab.services.matcore import operator_norm
from opnorm_lab.services.subgauss import (
    export_family,
    family_orlicz_constant,
    filter_reduction_bound,
    gen_innovations,
    increment_orlicz_profile,
    ma_filter,
    orlicz_norm_estimate,
    sup_operator_norm,
)
from opnorm_lab.utils.errors import ArgumentError, ConfigError, InputValidationError


def test_generation_is_deterministic(reference_grid, trig_spec):
    first = gen_innovations(trig_spec, (15, 12), reference_grid, seed=7)
    second = gen_innovations(trig_spec, (15, 12), reference_grid, seed=7)
    other = gen_innovations(trig_spec, (15, 12), reference_grid, seed=8)
    for index in range(len(reference_grid)):
        assert np.array_equal(first.evaluate(index).as_array(), second.evaluate(index).as_array())
    assert not np.array_equal(first.evaluate(3).as_array(), other.evaluate(3).as_array())


def test_trig_process_matches_closed_form(reference_grid, trig_spec):
    family = gen_innovations(trig_spec, (10, 8), reference_grid, seed=3)
    at_zero = family.evaluate(0).as_array()
    at_one = family.evaluate(10).as_array()
    # columns of the two primitive draws recovered from beta = 0 and beta = 1
    xi1 = 2.0 * at_zero
    xi2 = (2.0 * at_one - xi1 * math.cos(1.0)) / math.sin(1.0)
    for index, beta in enumerate(reference_grid.scalars()):
        expected = 0.5 * (xi1 * math.cos(beta) + xi2 * math.sin(beta))
        assert np.allclose(family.evaluate(index).as_array(), expected, atol=1e-12)


def test_trig_process_entry_variance(reference_grid):
    spec = SubGaussianSpec(family="trig_process", trig_sigma=2.0)
    family = gen_innovations(spec, (200, 200), reference_grid, seed=11)
    for index in (0, 5, 10):
        variance = family.evaluate(index).as_array().var()
        assert variance == pytest.approx(1.0, rel=0.05)


def test_trig_process_needs_scalar_grid(trig_spec):
    grid = ParamGrid(points=[[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(ConfigError):
        gen_innovations(trig_spec, (3, 3), grid, seed=0)


@pytest.mark.parametrize("family_name", ["gaussian", "rademacher", "uniform_bounded"])
def test_beta_free_families_share_draws(reference_grid, family_name):
    family = gen_innovations(SubGaussianSpec(family=family_name), (20, 30), reference_grid, seed=5)
    base = family.evaluate(0).as_array()
    assert np.array_equal(base, family.evaluate(7).as_array())
    assert base.var() == pytest.approx(1.0, rel=0.15)


def test_bounded_families_stay_bounded(reference_grid):
    rademacher = gen_innovations(SubGaussianSpec(family="rademacher", scale=2.0), (20, 20), reference_grid, 1)
    assert set(np.unique(rademacher.evaluate(0).as_array())) <= {-2.0, 2.0}
    uniform = gen_innovations(SubGaussianSpec(family="uniform_bounded"), (20, 20), reference_grid, 1)
    assert np.abs(uniform.evaluate(0).as_array()).max() <= math.sqrt(3.0)


def test_presample_columns_extend_the_sample(reference_grid, trig_spec):
    family = gen_innovations(trig_spec, (6, 9), reference_grid, seed=2)
    short = family.evaluate_extended(4, 3)
    wide = family.evaluate_extended(4, 5)
    assert short.shape == (6, 12)
    assert np.array_equal(short[:, 3:], family.evaluate(4).as_array())
    assert np.array_equal(wide[:, 2:], short)


def test_ma_filter_applies_the_lag_polynomial(reference_grid):
    innov = gen_innovations(SubGaussianSpec(family="gaussian"), (5, 10), reference_grid, seed=4)
    filt = MAFilterSpec(coeffs=[[1.0, 0.5]])
    filtered = ma_filter(innov, filt, burn_in=1).evaluate(2).as_array()
    extended = innov.evaluate_extended(2, 1)
    assert np.allclose(filtered, extended[:, 1:] + 0.5 * extended[:, :-1], atol=1e-14)


def test_ma_filter_identity_and_burn_in():
    grid = ParamGrid.line([0.0, 1.0])
    innov = gen_innovations(SubGaussianSpec(family="gaussian"), (4, 6), grid, seed=0)
    identity = ma_filter(innov, MAFilterSpec(coeffs=[[1.0]]), burn_in=0)
    assert np.array_equal(identity.evaluate(1).as_array(), innov.evaluate(1).as_array())
    with pytest.raises(ArgumentError):
        ma_filter(innov, MAFilterSpec.geometric(0.5, 3), burn_in=2)


def test_geometric_filter_envelope():
    filt = MAFilterSpec.geometric(0.5, 4)
    assert filt.truncation == 4
    assert filt.theta_sum == pytest.approx(sum(0.5**t for t in range(5)))
    assert filt.tail_mass == pytest.approx(0.5**5 / 0.5)
    with pytest.raises(ArgumentError):
        MAFilterSpec.geometric(1.0, 2)


def test_geometric_filter_stationary_variance():
    grid = ParamGrid.line([0.0])
    innov = gen_innovations(SubGaussianSpec(family="gaussian"), (400, 500), grid, seed=12)
    filtered = ma_filter(innov, MAFilterSpec.geometric(0.5, 20), burn_in=20)
    # sum of rho**(2 tau) for tau <= 20
    expected = (1.0 - 0.5**42) / (1.0 - 0.25)
    assert float(np.var(filtered.evaluate(0).as_array())) == pytest.approx(expected, abs=0.02)


def test_filter_reduction_bound_holds(reference_grid, trig_spec):
    filt = MAFilterSpec.geometric(0.6, 5)
    for seed in range(10):
        innov = gen_innovations(trig_spec, (25, 30), reference_grid, seed)
        for index in (0, 4, 9):
            lhs, rhs = filter_reduction_bound(innov, filt, 5, index)
            assert lhs <= rhs + 1e-9


def test_sup_operator_norm_picks_the_largest(reference_grid, trig_spec):
    family = gen_innovations(trig_spec, (12, 12), reference_grid, seed=9)
    result = sup_operator_norm(family)
    norms = [operator_norm(m) for m in family.matrices()]
    assert result.value == max(norms)
    assert result.index == int(np.argmax(norms))
    assert result.point == (reference_grid.scalars()[result.index],)


def test_orlicz_norm_of_gaussian_and_rademacher(rng):
    gaussian = rng.standard_normal(200_000)
    assert orlicz_norm_estimate(gaussian) == pytest.approx(math.sqrt(8.0 / 3.0), rel=0.03)
    signs = np.where(rng.random(1000) < 0.5, -1.0, 1.0)
    assert orlicz_norm_estimate(signs) == pytest.approx(1.0 / math.sqrt(math.log(2.0)), rel=1e-5)


def test_orlicz_norm_edge_cases():
    assert orlicz_norm_estimate(np.zeros(100)) == 0.0
    with pytest.raises(ArgumentError):
        orlicz_norm_estimate(np.ones(99))
    with pytest.raises(ArgumentError):
        orlicz_norm_estimate(np.ones(100), alpha=0.5)
    samples = np.ones(100)
    samples[3] = np.nan
    with pytest.raises(InputValidationError):
        orlicz_norm_estimate(samples)


def test_orlicz_norm_is_scale_equivariant(rng):
    samples = rng.standard_normal(5000)
    assert orlicz_norm_estimate(3.0 * samples) == pytest.approx(3.0 * orlicz_norm_estimate(samples), rel=1e-5)


def test_increment_profile_is_lipschitz_in_distance(reference_grid, trig_spec):
    family = gen_innovations(trig_spec, (10, 10), reference_grid, seed=0)
    profile = increment_orlicz_profile(family, [(0, 5), (2, 10)], reps=100, seed=21)
    for point in profile:
        assert point.distance == pytest.approx(abs(point.pair[0] - point.pair[1]) / 10.0)
        # increments are N(0, sin(d/2)**2); psi_2 norm sqrt(8/3) * sin(d/2)
        expected = math.sqrt(8.0 / 3.0) * math.sin(point.distance / 2.0)
        assert point.orlicz == pytest.approx(expected, rel=0.06)


def test_increment_profile_needs_reps(reference_grid, trig_spec):
    family = gen_innovations(trig_spec, (5, 5), reference_grid, seed=0)
    with pytest.raises(ArgumentError):
        increment_orlicz_profile(family, [(0, 1)], reps=50, seed=0)
    with pytest.raises(ArgumentError):
        increment_orlicz_profile(family, [], reps=100, seed=0)


def test_family_orlicz_constant_for_trig_process(reference_grid, trig_spec):
    family = gen_innovations(trig_spec, (60, 60), reference_grid, seed=13)
    k_hat = family_orlicz_constant(family)
    # entries are N(0, 1/4): psi_2 norm sqrt(8/3) / 2
    assert k_hat == pytest.approx(math.sqrt(8.0 / 3.0) / 2.0, rel=0.1)


@pytest.mark.parametrize("family_name", ["gaussian", "rademacher", "uniform_bounded", "trig_process"])
def test_mean_absolute_value_within_orlicz_bound(reference_grid, family_name):
    family = gen_innovations(SubGaussianSpec(family=family_name), (30, 40), reference_grid, seed=5)
    for index in (0, 5, 10):
        samples = family.evaluate(index).as_array()
        bound = orlicz_norm_estimate(samples) * math.sqrt(math.pi) * 1.05
        assert float(np.abs(samples).mean()) <= bound
    increments = family.evaluate(0).as_array() - family.evaluate(10).as_array()
    if np.any(increments):
        assert float(np.abs(increments).mean()) <= orlicz_norm_estimate(increments) * math.sqrt(math.pi) * 1.05


def test_family_orlicz_constant_pools_small_families():
    grid = ParamGrid.line([0.0, 0.5, 1.0])
    family = gen_innovations(SubGaussianSpec(family="gaussian"), (8, 8), grid, seed=1)
    k_hat = family_orlicz_constant(family, seed=3)
    assert k_hat == family_orlicz_constant(family, seed=3)
    # 2 pooled draws of 64 standard normal entries
    assert 0.8 < k_hat < 3.0
    external = ParamMatrixFamily.from_matrices(grid, [family.evaluate(i).as_array() for i in range(3)])
    with pytest.raises(ArgumentError):
        family_orlicz_constant(external)


def test_export_and_reload_family(tmp_path, reference_grid, trig_spec):
    family = gen_innovations(trig_spec, (4, 6), reference_grid, seed=1)
    manifest = export_family(family, tmp_path)
    assert manifest.name == "manifest.json"
    assert len(list(tmp_path.glob("beta_*.csv"))) == len(reference_grid)
    loaded = load_family_from_manifest(tmp_path)
    assert loaded.dims == (4, 6)
    assert np.allclose(loaded.grid.scalars(), reference_grid.scalars())
    for index in range(len(reference_grid)):
        assert np.array_equal(loaded.evaluate(index).as_array(), family.evaluate(index).as_array())
