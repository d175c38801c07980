import numpy as np
import pytest

from opnorm_lab.models.matrix_models import DenseMatrix, SingularSpectrum
from opnorm_lab.services.matcore import (
    DENSE_SVD_LIMIT,
    ky_fan_gap,
    operator_norm,
    singular_values,
    top_singular_sum,
)
from opnorm_lab.utils.errors import ArgumentError, InputValidationError


def _eigen_singular_values(a: np.ndarray) -> np.ndarray:
    gram = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    return np.sqrt(np.clip(np.linalg.eigvalsh(gram)[::-1], 0.0, None))


def test_operator_norm_of_small_matrix():
    assert operator_norm(np.array([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(5.464985704219043, rel=1e-12)


def test_zero_matrix_has_zero_norm_and_spectrum():
    zero = DenseMatrix.zeros(3, 5)
    assert operator_norm(zero) == 0.0
    assert np.all(singular_values(zero).values == 0.0)
    assert top_singular_sum(zero, 2) == 0.0


@pytest.mark.parametrize("shape", [(1, 1), (1, 7), (7, 1), (5, 5), (20, 35), (64, 48)])
def test_singular_values_match_eigenvalues(rng, shape):
    for _ in range(20):
        a = rng.standard_normal(shape)
        values = singular_values(a).values
        oracle = _eigen_singular_values(a)
        assert values.shape == (min(shape),)
        assert np.all(np.diff(values) <= 0)
        assert np.allclose(values, oracle, rtol=0.0, atol=1e-8 * max(values[0], 1.0))
        assert operator_norm(a) == pytest.approx(values[0], rel=1e-12)


def test_top_singular_sum_range(rng):
    a = rng.standard_normal((6, 4))
    with pytest.raises(ArgumentError):
        top_singular_sum(a, 0)
    with pytest.raises(ArgumentError):
        top_singular_sum(a, 5)
    assert top_singular_sum(a, 4) == pytest.approx(singular_values(a).values.sum(), rel=1e-12)


def test_top_singular_sum_uses_lanczos_on_large_matrices(rng):
    a = rng.standard_normal((DENSE_SVD_LIMIT + 80, DENSE_SVD_LIMIT + 8))
    dense = singular_values(a).values
    assert top_singular_sum(a, 3) == pytest.approx(dense[:3].sum(), rel=1e-8)
    assert operator_norm(a) == pytest.approx(dense[0], rel=1e-8)


def test_ky_fan_inequality_holds(rng):
    for _ in range(100):
        shape = tuple(rng.integers(1, 30, size=2))
        a = rng.standard_normal(shape) * rng.uniform(0.1, 10.0)
        b = rng.standard_normal(shape) * rng.uniform(0.01, 2.0)
        assert ky_fan_gap(a, b) <= 1e-10


def test_operator_norm_dominates_bilinear_forms(rng):
    a = rng.standard_normal((12, 9))
    u = rng.standard_normal((10_000, 12))
    v = rng.standard_normal((10_000, 9))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    forms = np.einsum("ki,ij,kj->k", u, a, v)
    assert float(np.abs(forms).max()) <= operator_norm(a) + 1e-8


def test_operator_norm_is_subadditive_and_submultiplicative(rng):
    for _ in range(200):
        n, t = (int(x) for x in rng.integers(1, 25, size=2))
        a = rng.standard_normal((n, t)) * rng.uniform(0.1, 5.0)
        b = rng.standard_normal((n, t)) * rng.uniform(0.1, 5.0)
        d = np.diag(rng.uniform(-2.0, 2.0, size=n))
        assert operator_norm(a + b) <= operator_norm(a) + operator_norm(b) + 1e-8
        assert operator_norm(d @ a) <= operator_norm(d) * operator_norm(a) + 1e-8


def test_ky_fan_gap_shape_mismatch():
    with pytest.raises(ArgumentError):
        ky_fan_gap(np.zeros((2, 3)), np.zeros((3, 2)))


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_entries_are_rejected(bad):
    a = np.ones((3, 3))
    a[1, 2] = bad
    with pytest.raises(InputValidationError):
        operator_norm(a)
    with pytest.raises(InputValidationError):
        DenseMatrix.from_array(a)


def test_dense_matrix_is_read_only():
    m = DenseMatrix.from_array(np.arange(6.0).reshape(2, 3))
    with pytest.raises(ValueError):
        m.as_array()[0, 0] = 1.0
    assert m.shape == (2, 3)
    assert np.array_equal((m + m).as_array(), m.scaled(2.0).as_array())
    assert np.array_equal((m - m).as_array(), np.zeros((2, 3)))


def test_singular_spectrum_helpers():
    spectrum = SingularSpectrum.from_array([3.0, 2.0, 0.5])
    assert len(spectrum) == 3
    assert spectrum[1] == 2.0
    assert spectrum.top_sum(2) == 5.0
    with pytest.raises(InputValidationError):
        SingularSpectrum.from_array([1.0, 2.0])
