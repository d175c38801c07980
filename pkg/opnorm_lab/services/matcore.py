"""
Spectral primitives on dense real matrices.

Full spectra come from a dense SVD (LAPACK via scipy.linalg.svdvals). When
only the top few singular values of a large matrix are needed, an implicitly
restarted Lanczos bidiagonalization (scipy.sparse.linalg.svds) is used.
"""

import logging
from typing import Any, Union

import numpy as np
from scipy.linalg import svdvals
from scipy.sparse.linalg import svds

from opnorm_lab.models.matrix_models import DenseMatrix, SingularSpectrum
from opnorm_lab.utils.errors import ArgumentError

logger = logging.getLogger(__name__)

# Above this size top-r requests switch from a full SVD to Lanczos.
DENSE_SVD_LIMIT = 512

MatrixLike = Union[DenseMatrix, np.ndarray]


def as_dense(m: Any) -> DenseMatrix:
    """
    Coerce an array-like to a validated DenseMatrix.

    Raises:
        InputValidationError: If the input has non-finite entries.
    """
    if isinstance(m, DenseMatrix):
        return m
    return DenseMatrix.from_array(m)


def _top_values(a: np.ndarray, r: int) -> np.ndarray:
    if min(a.shape) <= DENSE_SVD_LIMIT or r >= min(a.shape) - 1:
        return svdvals(a, check_finite=False)[:r]
    logger.debug("Lanczos top-%d singular values for %s matrix", r, a.shape)
    values = svds(a, k=r, return_singular_vectors=False, tol=0, random_state=0)
    return np.sort(values)[::-1]


def operator_norm(m: MatrixLike) -> float:
    """
    Largest singular value ||m|| = sqrt(lambda_1(m'm)).

    Args:
        m (DenseMatrix | np.ndarray): Input matrix.

    Returns:
        float: The operator (spectral) norm.
    """
    a = as_dense(m).as_array()
    if not a.any():
        return 0.0
    return float(_top_values(a, 1)[0])


def singular_values(m: MatrixLike) -> SingularSpectrum:
    """
    Full singular spectrum in non-increasing order.

    Args:
        m (DenseMatrix | np.ndarray): Input matrix.

    Returns:
        SingularSpectrum: min(N, T) singular values.
    """
    a = as_dense(m).as_array()
    values = svdvals(a, check_finite=False)
    # LAPACK output is sorted; clip guards against -0.0
    return SingularSpectrum.from_array(np.clip(values, 0.0, None))


def top_singular_sum(m: MatrixLike, r: int) -> float:
    """
    Sum of the r largest singular values.

    Args:
        m (DenseMatrix | np.ndarray): Input matrix.
        r (int): Number of singular values, 1 <= r <= min(N, T).

    Returns:
        float: s_1 + ... + s_r.

    Raises:
        ArgumentError: If r is out of range.
    """
    dense = as_dense(m)
    limit = min(dense.shape)
    if not 1 <= r <= limit:
        raise ArgumentError(f"r must lie in [1, {limit}], got {r}")
    a = dense.as_array()
    if not a.any():
        return 0.0
    return float(_top_values(a, r).sum())


def ky_fan_gap(a: MatrixLike, b: MatrixLike) -> float:
    """
    Slack of the Ky Fan inequality, max_i |s_i(A+B) - s_i(A)| - ||B||.

    Non-positive up to rounding for every pair of equal-shape matrices.
    """
    a_dense, b_dense = as_dense(a), as_dense(b)
    if a_dense.shape != b_dense.shape:
        raise ArgumentError(f"shape mismatch: {a_dense.shape} vs {b_dense.shape}")
    shifted = singular_values(a_dense + b_dense).values
    base = singular_values(a_dense).values
    return float(np.max(np.abs(shifted - base)) - operator_norm(b_dense))
