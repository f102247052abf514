from __future__ import division

from collections import namedtuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from sketchlab.utils.linalg import spectral_norm
from sketchlab.utils.matrix_io import read_matrix
from sketchlab.utils.utils import InvalidArgument, RngStream, SketchlabError, as_rng, trial_seed


TAIL = 1e-10
QUADRATURE_TOL = 1e-12


class SpectrumSpec(namedtuple("SpectrumSpec", ["n", "r", "tail"])):
    """sigma_j = 1/j for j <= r, ``tail`` (1e-10) beyond."""

    def __new__(cls, n, r, tail=TAIL):
        return super(SpectrumSpec, cls).__new__(cls, int(n), int(r), float(tail))

    def singular_values(self):
        sigma = np.full(self.n, self.tail)
        sigma[:self.r] = 1.0 / np.arange(1, self.r + 1)
        return sigma


class FactorGaussianSpec(namedtuple("FactorGaussianSpec", ["m", "n", "r", "noise_norm", "normalize"])):
    def __new__(cls, m, n, r, noise_norm=0.0, normalize=False):
        return super(FactorGaussianSpec, cls).__new__(cls, int(m), int(n), int(r), float(noise_norm), bool(normalize))


def _orthogonal(n, rng):
    Q, R = linalg.qr(rng.standard_normal((n, n)))
    # sign fix so that Q is Haar distributed
    return Q * np.sign(np.diag(R))


def svd_spectrum_matrix(spec, rng):
    """
    M = S diag(sigma) T^T with S, T orthogonalized independent Gaussian matrices
    """
    if not 0 <= spec.r < spec.n:
        raise InvalidArgument(f"need 0 <= r < n, got r={spec.r}, n={spec.n}")
    rng = as_rng(rng)
    if rng is None:
        raise InvalidArgument("svd_spectrum_matrix needs a seed or RngStream")
    S = _orthogonal(spec.n, rng)
    T = _orthogonal(spec.n, rng)
    return (S * spec.singular_values()) @ T.T


def _laplacian_column(n, order):
    """m_{i,0} for every target i; the arc of source 0 spans [0, 2 pi / n]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    width = 2.0 * np.pi / n
    sources = np.exp(0.5j * width * (nodes + 1.0))
    targets = 2.0 * np.exp(2j * np.pi * np.arange(n) / n)
    kernel = np.log(np.abs(targets[:, None] - sources[None, :]))
    return 0.5 * width * kernel @ weights


def laplacian_matrix(n, order=16):
    """Discretized single-layer Laplacian between the circles C(0,2) and C(0,1).

    m_ij is the integral of log|2 w^i - y| over the j-th of n equal arcs of the
    unit circle, by Gauss-Legendre quadrature whose order is doubled until the
    entries change by at most 1e-12. Rotating both point sets by 2 pi / n maps
    (i, j) to (i+1, j+1), so m_ij = m_{i-j mod n, 0} and M is circulant. The
    result is scaled to unit spectral norm.

    :param n: Matrix order, at least 8
    :type n: int
    :param order: Initial quadrature order, defaults to 16
    :type order: int, optional
    :return: Returns the n x n matrix
    :rtype: np.ndarray
    """
    if n < 8:
        raise InvalidArgument(f"Laplacian matrix needs n >= 8, got {n}")
    column = _laplacian_column(n, order)
    while order < 1024:
        order *= 2
        refined = _laplacian_column(n, order)
        change = np.max(np.abs(refined - column))
        column = refined
        if change <= QUADRATURE_TOL:
            break
    M = linalg.circulant(column)
    return M / spectral_norm(M)


# preset -> (inner half-width, outer half-width, margin); perimeters hold 8h points
FD_PRESETS = {
    "small": (11, 20, 4),
    "medium": (26, 50, 4),
    "large": (51, 100, 4),
}


def _perimeter(center, h, side):
    """Flat grid indices of the square of half-width h, counterclockwise from the corner (-h, -h)."""
    ramp = np.arange(-h, h)
    xs = np.concatenate([ramp, np.full(2 * h, h), -ramp, np.full(2 * h, -h)])
    ys = np.concatenate([np.full(2 * h, -h), ramp, np.full(2 * h, h), -ramp])
    return (center + ys) * side + (center + xs)


def finite_difference_inverse(preset="small", inner=None, outer=None, margin=4):
    """Block of the inverse five-point Laplacian coupling two concentric square contours.

    The grid is (2 * outer + 1 + 2 * margin)^2 interior points with zero Dirichlet
    boundary. Rows follow the 8 * inner points of the inner square, columns the
    8 * outer points of the outer square, both counterclockwise from the lower
    left corner. Presets give 88 x 160, 208 x 400 and 408 x 800.
    """
    if inner is None or outer is None:
        if preset not in FD_PRESETS:
            raise InvalidArgument(f"unknown finite-difference preset {preset!r}")
        inner, outer, margin = FD_PRESETS[preset]
    if not 1 <= inner < outer or margin < 1:
        raise InvalidArgument(f"need 1 <= inner < outer and margin >= 1, got {inner}, {outer}, {margin}")

    side = 2 * outer + 1 + 2 * margin
    center = side // 2
    second = sparse.diags([-np.ones(side - 1), 2.0 * np.ones(side), -np.ones(side - 1)], [-1, 0, 1])
    eye = sparse.identity(side)
    L = (sparse.kron(eye, second) + sparse.kron(second, eye)).tocsc()

    targets = _perimeter(center, inner, side)
    sources = _perimeter(center, outer, side)
    try:
        lu = sparse_linalg.splu(L)
    except RuntimeError as exc:
        raise SketchlabError(f"finite-difference assembly is singular: {exc}")

    # L is symmetric, so G[targets, sources] = (G[:, targets])[sources]^T
    M = np.empty((targets.size, sources.size))
    for start in range(0, targets.size, 64):
        chunk = targets[start:start + 64]
        rhs = np.zeros((side * side, chunk.size))
        rhs[chunk, np.arange(chunk.size)] = 1.0
        M[start:start + chunk.size] = lu.solve(rhs)[sources].T
    return M / spectral_norm(M)


def factor_gaussian(spec, rng):
    """UV + E with Gaussian U (m x r), V (r x n) and a Gaussian E of spectral norm ``noise_norm``."""
    if not 1 <= spec.r <= min(spec.m, spec.n):
        raise InvalidArgument(f"need 1 <= r <= min(m, n), got r={spec.r}")
    if spec.noise_norm < 0:
        raise InvalidArgument("noise norm must be non-negative")
    rng = as_rng(rng)
    if rng is None:
        raise InvalidArgument("factor_gaussian needs a seed or RngStream")
    M = rng.standard_normal((spec.m, spec.r)) @ rng.standard_normal((spec.r, spec.n))
    if spec.normalize:
        M /= spectral_norm(M)
    if spec.noise_norm > 0:
        E = rng.standard_normal((spec.m, spec.n))
        M = M + E * (spec.noise_norm / spectral_norm(E))
    return M


GENERATORS = ("svd", "laplacian", "finite-difference", "factor-gaussian", "file")


def generate(kind, params, rng=None):
    """
    Input matrix of generator ``kind`` with keyword parameters ``params``
    """
    params = dict(params or {})
    if kind == "svd":
        return svd_spectrum_matrix(SpectrumSpec(params["n"], params["r"], params.get("tail", TAIL)), rng)
    if kind == "laplacian":
        return laplacian_matrix(params["n"], params.get("order", 16))
    if kind == "finite-difference":
        return finite_difference_inverse(params.get("preset", "small"), params.get("inner"),
                                         params.get("outer"), params.get("margin", 4))
    if kind == "factor-gaussian":
        return factor_gaussian(FactorGaussianSpec(params["m"], params["n"], params["r"],
                                                  params.get("noise_norm", 0.0), params.get("normalize", False)), rng)
    if kind == "file":
        return read_matrix(params["path"])
    raise InvalidArgument(f"unknown input generator {kind!r}; known: {', '.join(GENERATORS)}")


def known_tail(kind, params):
    """sigma_{r+1} when the generator fixes it, else None."""
    if kind == "svd":
        return float(params.get("tail", TAIL))
    return None


class TrialInputs(object):
    """Input matrices of an experiment, one per trial.

    With ``fresh`` every trial gets its own seed (base ^ index); otherwise one
    matrix is generated once and shared, which is what the deterministic
    generators amount to anyway.
    """

    def __init__(self, kind, params, base_seed, trials, fresh=True):
        self.kind = kind
        self.params = dict(params or {})
        self.base_seed = int(base_seed)
        self.trials = int(trials)
        self.fresh = fresh and kind in ("svd", "factor-gaussian")
        self._shared = None

    def seed(self, index):
        return trial_seed(self.base_seed, index) if self.fresh else self.base_seed

    def __getitem__(self, index):
        if index < 0 or index >= self.trials:
            raise IndexError(index)
        if self.fresh:
            return generate(self.kind, self.params, RngStream(trial_seed(self.base_seed, index)))
        if self._shared is None:
            self._shared = generate(self.kind, self.params, RngStream(self.base_seed))
        return self._shared

    def __len__(self):
        return self.trials
