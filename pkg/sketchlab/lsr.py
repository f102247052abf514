from __future__ import division

from collections import namedtuple

import numpy as np
from scipy import linalg, stats

from sketchlab import multipliers as mp
from sketchlab.utils.linalg import as_matrix, singular_values
from sketchlab.utils.utils import InvalidArgument, as_rng


class LsrProblem(namedtuple("LsrProblem", ["A", "b"])):
    """min ||A x - b|| for an m x d matrix A with m > d >= 1."""

    def __new__(cls, A, b):
        A = as_matrix(A)
        b = np.asarray(b).reshape(-1)
        m, d = A.shape
        if not m > d >= 1:
            raise InvalidArgument(f"least squares problem needs m > d >= 1, got {m} x {d}")
        if b.shape != (m,):
            raise InvalidArgument(f"right-hand side must have length {m}, got {b.shape}")
        return super(LsrProblem, cls).__new__(cls, A, b)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]


class SketchParams(namedtuple("SketchParams", ["delta", "xi", "theta"])):
    def __new__(cls, delta, xi, theta=1.0):
        return super(SketchParams, cls).__new__(cls, float(delta), float(xi), float(theta))

    def k(self, d):
        return sketch_dimension(d, self.delta, self.xi, self.theta)


LsrCertificate = namedtuple("LsrCertificate", ["residual_exact", "residual_sketched", "sketch_residual", "ratio",
                                               "rank_deficient"])


def lsr_exact(p):
    """Minimum-norm least squares solution (LAPACK gelsd, i.e. A^+ b for rank-deficient A)."""
    x, _, _, _ = linalg.lstsq(p.A, p.b, lapack_driver="gelsd")
    return x


def sketch_dimension(d, delta, xi, theta=1.0):
    """k = ceil((d + ln(1/delta) / xi^2) * theta).

    ``xi = 1`` is accepted as the boundary case. The product is rounded to 9
    decimals before the ceiling so that k = 6 exactly for d = 5, delta = 1/e.
    """
    if not 0 < delta < 1:
        raise InvalidArgument(f"failure probability must lie in (0, 1), got {delta}")
    if not 0 < xi <= 1:
        raise InvalidArgument(f"distortion must lie in (0, 1], got {xi}")
    if not theta > 0:
        raise InvalidArgument(f"theta must be positive, got {theta}")
    if int(d) < 1:
        raise InvalidArgument(f"dimension must be positive, got {d}")
    return int(np.ceil(round((int(d) + np.log(1.0 / delta) / xi ** 2) * theta, 9)))


def _sketch_rows(F, k, m, rng, rows_random):
    """Rows of the sketch: k of the m rows of a unitary multiplier, scaled to an isometry in expectation."""
    if F.n != m or F.width != m:
        raise InvalidArgument(f"structured sketch must be {m} x {m}, got {F.shape}")
    scale = F.unitary_scale()
    if scale is None:
        raise InvalidArgument(f"{F.family} multiplier is not unitary up to scaling")
    if rows_random and k < m:
        rng = as_rng(rng)
        if rng is None:
            raise InvalidArgument("random row selection needs a seed or RngStream")
        rows = np.sort(rng.permutation(m)[:k])
    else:
        rows = np.arange(k)
    return rows, np.sqrt(m / k) / scale


def apply_sketch(F, X, k, rng=None, rows_random=True):
    """F X for the k x m sketch described by ``F`` ('gaussian' or a square multiplier)."""
    X = np.asarray(X)
    m = X.shape[0]
    if not 1 <= k <= m:
        raise InvalidArgument(f"sketch size must satisfy 1 <= k <= m = {m}, got {k}")
    if isinstance(F, str):
        if F != "gaussian":
            raise InvalidArgument(f"unknown sketch kind {F!r}")
        rng = as_rng(rng)
        if rng is None:
            raise InvalidArgument("Gaussian sketch needs a seed or RngStream")
        return rng.standard_normal((k, m)) @ X / np.sqrt(k)
    rows, scale = _sketch_rows(F, k, m, rng, rows_random)
    return scale * F.matmat(X)[rows]


def lsr_sketched(p, F="gaussian", k=None, rng=None, rows_random=True):
    """Sketch-and-solve least squares: min ||F A x - F b|| instead of min ||A x - b||.

    :param p: The problem
    :type p: LsrProblem
    :param F: ``gaussian`` for (1/sqrt(k)) G_{k,m}, or an m x m unitary-up-to-scaling multiplier
    :type F: str or Multiplier
    :param k: Number of sketch rows
    :type k: int
    :param rng: Seed or stream for G or the row selection
    :type rng: RngStream or int, optional
    :param rows_random: Pick k random rows of a structured F instead of the first k
    :type rows_random: bool, optional
    :return: Returns the sketched solution and its certificate
    :rtype: (np.ndarray, LsrCertificate)
    """
    if k is None or not 1 <= k <= p.m:
        raise InvalidArgument(f"sketch size must satisfy 1 <= k <= m = {p.m}, got {k}")
    sketched = apply_sketch(F, np.column_stack([p.A, p.b]), k, rng, rows_random)
    FA, Fb = sketched[:, :-1], sketched[:, -1]
    x, _, rank, _ = linalg.lstsq(FA, Fb, lapack_driver="gelsd")
    x_exact = lsr_exact(p)
    residual_exact = float(np.linalg.norm(p.A @ x_exact - p.b))
    residual_sketched = float(np.linalg.norm(p.A @ x - p.b))
    sketch_residual = float(np.linalg.norm(FA @ x - Fb))
    ratio = residual_sketched / residual_exact if residual_exact > 0 else (1.0 if residual_sketched == 0 else np.inf)
    return x, LsrCertificate(residual_exact, residual_sketched, sketch_residual, ratio, bool(rank < p.d))


class RatioSummary(namedtuple("RatioSummary", ["samples", "mean", "quantiles"])):
    """Ratios (||F M y|| / ||M y||) of a residual-ratio experiment."""

    def fraction_within(self, xi):
        samples = np.asarray(self.samples)
        return float(np.mean((samples >= 1.0 - xi) & (samples <= 1.0 + xi)))


def _structured_sketch(kind, m, rng):
    if kind == "asph":
        depth = 3 if m % 8 == 0 else 1
        return mp.abridged_hadamard(m, depth, "ASPH", rng)
    if kind == "orthogonal":
        return mp.dense(stats.ortho_group.rvs(m, random_state=np.random.default_rng(rng.spawn_seed())))
    raise InvalidArgument(f"unknown sketch kind {kind!r}")


def residual_ratio_trial(m, d, k, F_kind="gaussian", trials=100, rng=None, dual=True):
    """Empirical distribution of ||F M y|| / ||M y|| for a k x m sketch F of unit expected gain.

    M = (A | b) with Gaussian A and b and y = (x*; -1) for the least squares
    solution x*. In the ``dual`` setting M is the Gaussian matrix and F a fixed
    structured sketch; otherwise F is Gaussian and M fixed across trials.
    """
    if not 1 <= k <= m or not 1 <= d < m:
        raise InvalidArgument(f"need 1 <= d < m and 1 <= k <= m, got m={m}, d={d}, k={k}")
    rng = as_rng(rng)
    if rng is None:
        raise InvalidArgument("residual_ratio_trial needs a seed or RngStream")
    F = "gaussian" if F_kind == "gaussian" else _structured_sketch(F_kind, m, rng)
    fixed = None if dual else rng.standard_normal((m, d + 1))
    samples = []
    for _ in range(int(trials)):
        M = rng.standard_normal((m, d + 1)) if fixed is None else fixed
        x = lsr_exact(LsrProblem(M[:, :-1], M[:, -1]))
        My = M @ np.append(x, -1.0)
        FMy = apply_sketch(F, My.reshape(-1, 1), k, rng, rows_random=not dual)
        samples.append(float(np.linalg.norm(FMy) / np.linalg.norm(My)))
    samples = np.asarray(samples)
    quantiles = dict(zip((0.05, 0.25, 0.5, 0.75, 0.95), np.quantile(samples, (0.05, 0.25, 0.5, 0.75, 0.95))))
    return RatioSummary(samples, float(samples.mean()), quantiles)


RotationTest = namedtuple("RotationTest", ["statistic", "pvalue", "sketched", "reference"])


def rotational_invariance_test(m, d, k, F, trials, rng):
    """Two-sample KS test of the singular values of F M (Gaussian M) against those of k x (d+1) Gaussians.

    F is an m x m multiplier unitary up to scaling; its first k rows are used, scaled to orthonormal rows.
    """
    rng = as_rng(rng)
    if rng is None:
        raise InvalidArgument("rotational_invariance_test needs a seed or RngStream")
    sketched, reference = [], []
    for _ in range(int(trials)):
        M = rng.standard_normal((m, d + 1))
        FM = apply_sketch(F, M, k, rows_random=False) * np.sqrt(k / m)
        sketched.extend(singular_values(FM))
        reference.extend(singular_values(rng.standard_normal((k, d + 1))))
    result = stats.ks_2samp(sketched, reference)
    return RotationTest(float(result.statistic), float(result.pvalue), np.asarray(sketched), np.asarray(reference))
