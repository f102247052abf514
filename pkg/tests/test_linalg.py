import numpy as np
import pytest
from numpy.testing import assert_allclose

from sketchlab.utils import linalg
from sketchlab.utils.utils import InvalidArgument, InvalidInput, RngStream


def rank_r(m, n, r, seed):
    rng = RngStream(seed)
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


def test_as_matrix_rejects_vectors_and_nan():
    with pytest.raises(InvalidArgument):
        linalg.as_matrix(np.ones(3))
    with pytest.raises(InvalidInput):
        linalg.as_matrix(np.array([[1.0, np.nan]]))
    assert linalg.as_matrix([[1, 2]]).dtype == np.float64
    assert linalg.as_matrix([[1j, 2]]).dtype == np.complex128


def test_gaussian_matrix_is_reproducible():
    A = linalg.gaussian_matrix(5, 3, 11)
    B = linalg.gaussian_matrix(5, 3, RngStream(11))
    assert_allclose(A, B)
    with pytest.raises(InvalidArgument):
        linalg.gaussian_matrix(0, 3, 1)
    with pytest.raises(InvalidArgument):
        linalg.gaussian_matrix(2, 3, None)


def test_orthonormalize_drops_dependent_columns():
    M = rank_r(40, 12, 5, seed=3)
    Q = linalg.orthonormalize_columns(M)
    assert Q.shape == (40, 5)
    assert_allclose(Q.T @ Q, np.eye(5), atol=1e-12)
    assert linalg.spectral_norm(M - Q @ (Q.T @ M)) <= 1e-10 * linalg.spectral_norm(M)


def test_orthonormalize_zero_matrix_gives_empty_basis():
    Q = linalg.orthonormalize_columns(np.zeros((6, 3)))
    assert Q.shape == (6, 0)


def test_orthonormalize_complex():
    rng = RngStream(5)
    M = rng.standard_normal((20, 4)) + 1j * rng.standard_normal((20, 4))
    Q = linalg.orthonormalize_columns(M)
    assert Q.shape == (20, 4)
    assert_allclose(Q.conj().T @ Q, np.eye(4), atol=1e-12)


def test_svd_compact_rank_and_reconstruction():
    M = rank_r(30, 20, 4, seed=1)
    S, sigma, T = linalg.svd(M)
    assert sigma.size == 4
    assert np.all(np.diff(sigma) <= 0)
    assert_allclose((S * sigma) @ T.conj().T, M, atol=1e-10)


def test_numerical_rank_threshold():
    M = np.diag([3.0, 1.0, 1e-3, 1e-8])
    assert linalg.numerical_rank(M, 1e-5) == 3
    assert linalg.numerical_rank(M, 2.0) == 1
    with pytest.raises(InvalidArgument):
        linalg.numerical_rank(M, 0.0)


def test_truncate_svd_error_is_next_singular_value():
    rng = RngStream(8)
    M = rng.standard_normal((25, 15))
    sigma = linalg.singular_values(M)
    Mr, E = linalg.truncate_svd(M, 6)
    assert_allclose(linalg.spectral_norm(E), sigma[6], rtol=1e-10)
    assert linalg.numerical_rank(Mr, 1e-8 * sigma[0]) == 6
    with pytest.raises(InvalidArgument):
        linalg.truncate_svd(M, 16)


def test_pseudo_inverse_matches_scipy():
    M = rank_r(12, 9, 3, seed=4)
    assert_allclose(linalg.pseudo_inverse(M), np.linalg.pinv(M, rcond=1e-12), atol=1e-8)
    assert linalg.pseudo_inverse(np.zeros((3, 2))).shape == (2, 3)


def test_spectral_norm_power_method_agrees_with_svd():
    rng = RngStream(2)
    M = rng.standard_normal((50, 30))
    exact = linalg.spectral_norm(M)
    assert_allclose(linalg.spectral_norm(M, method="power"), exact, rtol=1e-8)
    with pytest.raises(InvalidArgument):
        linalg.spectral_norm(M, method="lanczos")


def test_frobenius_and_projection_residual():
    M = np.arange(12.0).reshape(4, 3)
    assert_allclose(linalg.frobenius_norm(M), np.sqrt(np.sum(M ** 2)))
    Q = np.eye(4)[:, :2]
    R = linalg.projection_residual(M, Q)
    assert_allclose(R[:2], 0.0)
    assert_allclose(R[2:], M[2:])
    assert_allclose(linalg.projection_residual(M, np.zeros((4, 0))), M)
