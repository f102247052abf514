from __future__ import division

from collections import namedtuple

import numpy as np
from scipy import linalg

from sketchlab.utils.utils import InvalidArgument, InvalidInput, RngStream, as_rng


DROP_TOL = 1e-12

CompactSvd = namedtuple("CompactSvd", ["S", "sigma", "T"])
CompactSvd.__doc__ = """Compact SVD M = S diag(sigma) T^H of a rank-rho matrix.

S is m x rho, T is n x rho, both with orthonormal columns; sigma is positive
and non-increasing.
"""


def as_matrix(M, check_finite=True):
    """Return ``M`` as a 2-D float64 or complex128 array.

    Real input stays real so that the cheaper real arithmetic is used downstream.
    """
    M = np.asarray(M)
    if M.ndim != 2:
        raise InvalidArgument(f"expected a 2-D matrix, got shape {M.shape}")
    if np.iscomplexobj(M):
        M = M.astype(np.complex128, copy=False)
    else:
        M = M.astype(np.float64, copy=False)
    if check_finite and not np.all(np.isfinite(M)):
        raise InvalidInput("matrix has non-finite entries")
    return M


def gaussian_matrix(m, n, rng):
    """m x n matrix of i.i.d. standard normal entries.

    :param m: Number of rows
    :type m: int
    :param n: Number of columns
    :type n: int
    :param rng: Random stream or integer seed
    :type rng: RngStream or int
    :return: Returns the sampled matrix
    :rtype: np.ndarray
    """
    if int(m) < 1 or int(n) < 1:
        raise InvalidArgument(f"Gaussian matrix needs positive dimensions, got {m}x{n}")
    rng = as_rng(rng)
    if rng is None:
        raise InvalidArgument("gaussian_matrix needs a seed or RngStream")
    return rng.standard_normal((int(m), int(n)))


def orthonormalize_columns(M, drop_tol=DROP_TOL, scale=None):
    """Orthonormal basis of the numerically significant column space of ``M``.

    Householder QR with column pivoting; a column is dropped when its residual
    norm after projection on the previously accepted columns is at most
    ``drop_tol * ||M||``. If every column is dropped the result has width 0,
    which callers treat as the empty-basis status.

    :param M: Matrix with at least one column
    :type M: np.ndarray
    :param drop_tol: Relative drop tolerance, defaults to 1e-12
    :type drop_tol: float, optional
    :param scale: Norm the tolerance is relative to, defaults to ||M||
    :type scale: float, optional
    :return: Returns U with orthonormal columns, width at most cols(M)
    :rtype: np.ndarray
    """
    M = as_matrix(M)
    if M.shape[1] == 0:
        raise InvalidArgument("cannot orthonormalize a matrix without columns")
    if drop_tol < 0:
        raise InvalidArgument(f"drop_tol must be non-negative, got {drop_tol}")
    if scale is None:
        scale = spectral_norm(M)
    if scale == 0.0 or not np.any(M):
        return np.zeros((M.shape[0], 0), dtype=M.dtype)
    Q, R, _ = linalg.qr(M, mode="economic", pivoting=True)
    residuals = np.abs(np.diag(R))
    keep = int(np.count_nonzero(residuals > drop_tol * scale))
    return Q[:, :keep]


def svd(M):
    """Compact SVD keeping singular values above eps * max(m, n) * sigma_1."""
    M = as_matrix(M)
    if M.size == 0:
        raise InvalidArgument("svd of an empty matrix")
    try:
        S, sigma, Th = linalg.svd(M, full_matrices=False, lapack_driver="gesdd")
    except linalg.LinAlgError:
        S, sigma, Th = linalg.svd(M, full_matrices=False, lapack_driver="gesvd")
    if sigma.size == 0 or sigma[0] == 0.0:
        rho = 0
    else:
        cutoff = np.finfo(np.float64).eps * max(M.shape) * sigma[0]
        rho = int(np.count_nonzero(sigma > cutoff))
    return CompactSvd(S[:, :rho], sigma[:rho], Th[:rho].conj().T)


def singular_values(M):
    M = as_matrix(M)
    if M.size == 0:
        return np.zeros(0)
    return linalg.svdvals(M)


def numerical_rank(M, xi):
    """Number of singular values of ``M`` strictly above ``xi``."""
    if not xi > 0:
        raise InvalidArgument(f"rank threshold must be positive, got {xi}")
    return int(np.count_nonzero(singular_values(M) > xi))


def truncate_svd(M, r):
    """Closest rank-r approximation Mr of M and the remainder E = M - Mr."""
    M = as_matrix(M)
    r = int(r)
    if r < 1 or r > min(M.shape):
        raise InvalidArgument(f"truncation rank {r} outside 1..{min(M.shape)}")
    S, sigma, Th = linalg.svd(M, full_matrices=False)
    Mr = (S[:, :r] * sigma[:r]) @ Th[:r]
    return Mr, M - Mr


def pseudo_inverse(M):
    """Moore-Penrose pseudo inverse T diag(1/sigma) S^H; the zero matrix maps to zeros."""
    M = as_matrix(M)
    S, sigma, T = svd(M)
    if sigma.size == 0:
        return np.zeros((M.shape[1], M.shape[0]), dtype=M.dtype)
    return (T / sigma) @ S.conj().T


def spectral_norm(M, method="svd", tol=1e-13, maxiter=20000, seed=0):
    """Largest singular value, from the SVD or from power iteration on M^H M.

    :param M: Input matrix
    :type M: np.ndarray
    :param method: ``svd`` or ``power``, defaults to ``svd``
    :type method: str, optional
    :param tol: Relative change stopping the power iteration, defaults to 1e-13
    :type tol: float, optional
    :param maxiter: Iteration cap of the power method, defaults to 20000
    :type maxiter: int, optional
    :param seed: Seed of the power method start vector, defaults to 0
    :type seed: int, optional
    :return: Returns sigma_1(M)
    :rtype: float
    """
    M = as_matrix(M)
    if M.size == 0:
        return 0.0
    if method == "svd":
        return float(linalg.svdvals(M)[0])
    if method != "power":
        raise InvalidArgument(f"unknown spectral norm method {method!r}")

    x = RngStream(seed).standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(maxiter):
        y = M @ x
        previous, estimate = estimate, float(np.linalg.norm(y))
        if estimate == 0.0:
            return 0.0
        x = M.conj().T @ y
        x /= np.linalg.norm(x)
        if abs(estimate - previous) <= tol * estimate:
            break
    return estimate


def frobenius_norm(M):
    return float(linalg.norm(as_matrix(M), "fro"))


def projection_residual(M, Q):
    """M - Q Q^H M evaluated as two tall-thin products."""
    if Q.shape[1] == 0:
        return np.array(M, copy=True)
    return M - Q @ (Q.conj().T @ M)
