from __future__ import division

import enum
from collections import namedtuple

import numpy as np

from sketchlab import multipliers as mp
from sketchlab.utils.linalg import (
    DROP_TOL, as_matrix, gaussian_matrix, numerical_rank, orthonormalize_columns, projection_residual,
    spectral_norm)
from sketchlab.utils.utils import InvalidArgument, RngStream, SketchlabError, UndefinedExpectation, as_rng


FRIEVALDS_K = 8


class Status(enum.Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"


class ErrorEstimator(object):
    """Evaluates Delta = ||M - Q Q^H M||, exactly or by a Frievalds probe with ``k`` Gaussian columns."""

    def __init__(self, mode="exact", k=FRIEVALDS_K, seed=0):
        if mode not in ("exact", "frievalds"):
            raise InvalidArgument(f"unknown error estimator {mode!r}")
        if int(k) < 1:
            raise InvalidArgument(f"Frievalds probe width must be positive, got {k}")
        self.mode = mode
        self.k = int(k)
        self.seed = seed
        self.rng = RngStream(seed)

    def __repr__(self):
        return f"ErrorEstimator(mode={self.mode!r}, k={self.k}, seed={self.seed})"

    def estimate(self, M, Q):
        if self.mode == "exact":
            return spectral_norm(projection_residual(M, Q))
        return frievalds_error_estimate(M, Q, self.k, self.rng)


class RangeFinderResult(object):
    """Outcome of a range finder run.

    ``Q`` has orthonormal columns spanning the approximate range, ``delta`` is the
    error norm reported by the estimator, ``stage`` the 1-based recursive stage
    (1 for a single run) and ``stage_deltas`` the error after every stage.
    """

    def __init__(self, Q, delta, tau, l_used, flops, stage=1, method="single", stage_deltas=None):
        self.Q = Q
        self.delta = float(delta)
        self.tau = float(tau)
        self.status = Status.SUCCESS if self.delta <= self.tau else Status.FAILURE
        self.l_used = int(l_used)
        self.flops = flops
        self.stage = int(stage)
        self.method = method
        self.stage_deltas = list(stage_deltas) if stage_deltas is not None else [self.delta]

    def __repr__(self):
        return (f"RangeFinderResult(status={self.status.value}, delta={self.delta:.3e}, rank={self.rank}, "
                f"l_used={self.l_used}, stage={self.stage}, method={self.method!r})")

    @property
    def success(self):
        return self.status is Status.SUCCESS

    @property
    def rank(self):
        return self.Q.shape[1]

    @property
    def empty_basis(self):
        return self.rank == 0

    def approximation(self, M):
        """The rank-l approximation Q Q^H M."""
        return self.Q @ (self.Q.conj().T @ M)


BoundReport = namedtuple("BoundReport", ["expected_f", "expected_f_dual", "m", "n", "r", "l", "p", "kappa_B", "note"])


def _check_operands(M, B):
    M = as_matrix(M)
    if M.shape[1] != B.n:
        raise InvalidArgument(f"matrix with {M.shape[1]} columns cannot be sketched by a {B.shape} multiplier")
    return M


def _check_tau(tau):
    if not tau >= 0:
        raise InvalidArgument(f"tolerance must be non-negative, got {tau}")


def _subspace_iteration(M, Q, power_iterations, drop_tol):
    for _ in range(power_iterations):
        if Q.shape[1] == 0:
            break
        Z = orthonormalize_columns(M.conj().T @ Q, drop_tol)
        if Z.shape[1] == 0:
            return np.zeros((M.shape[0], 0), dtype=Q.dtype)
        Q = orthonormalize_columns(M @ Z, drop_tol)
    return Q


def range_finder_from_sketch(M, Y, tau, estimator=None, power_iterations=0, drop_tol=DROP_TOL, flops=None,
                             method="single"):
    """Range finder on an already computed sketch ``Y`` of ``M``.

    Power iterations run as subspace iteration Q <- orth(M orth(M^H Q)), which spans
    the same space as the sketch of (M M^H)^i M without squaring the condition number.
    """
    M = as_matrix(M)
    Y = as_matrix(Y)
    _check_tau(tau)
    if Y.shape[0] != M.shape[0]:
        raise InvalidArgument(f"sketch with {Y.shape[0]} rows does not match a {M.shape} matrix")
    if power_iterations < 0:
        raise InvalidArgument(f"power iterations must be non-negative, got {power_iterations}")
    estimator = estimator or ErrorEstimator()
    Q = orthonormalize_columns(Y, drop_tol)
    Q = _subspace_iteration(M, Q, power_iterations, drop_tol)
    delta = estimator.estimate(M, Q) if Q.shape[1] else spectral_norm(M)
    return RangeFinderResult(Q, delta, tau, Y.shape[1], flops if flops is not None else mp.FlopTally(),
                             method=method)


def range_finder(M, B, tau, estimator=None, power_iterations=0, drop_tol=DROP_TOL):
    """Sketch M B through the fast adjoint of B, orthonormalize and test the error.

    :param M: m x n input matrix
    :type M: np.ndarray
    :param B: n x l multiplier
    :type B: Multiplier
    :param tau: Error tolerance; Success iff delta <= tau
    :type tau: float
    :param estimator: Error estimator, defaults to exact
    :type estimator: ErrorEstimator, optional
    :param power_iterations: Number of power iterations, defaults to 0
    :type power_iterations: int, optional
    :param drop_tol: Relative column drop tolerance, defaults to 1e-12
    :type drop_tol: float, optional
    :return: Returns the result with Q, delta and status
    :rtype: RangeFinderResult
    """
    M = _check_operands(M, B)
    _check_tau(tau)
    tally = mp.FlopTally()
    Y = B.sketch(M, tally)
    return range_finder_from_sketch(M, Y, tau, estimator, power_iterations, drop_tol, tally)


def _append_block(Q, Y, drop_tol):
    """Extend the orthonormal Q by the part of Y orthogonal to it (block Gram-Schmidt, twice)."""
    scale = spectral_norm(Y)
    if Q.shape[1]:
        for _ in range(2):
            Y = Y - Q @ (Q.conj().T @ Y)
    W = orthonormalize_columns(Y, drop_tol, scale=scale)
    if Q.shape[1] and W.shape[1]:
        W = W - Q @ (Q.conj().T @ W)
        W = orthonormalize_columns(W, drop_tol)
    return np.hstack([Q, W]) if W.shape[1] else Q


def _grow(M, sketches, widths, tau, estimator, reuse_projections, verify_reuse, drop_tol, tally, method,
          power_iterations=0):
    """Shared loop of the recursive range finder: one sketch block per stage.

    Power iterations refine a copy of the stacked basis at every stage; the
    stacked basis itself keeps growing from the plain sketches.
    """
    estimator = estimator or ErrorEstimator()
    Q = np.zeros((M.shape[0], 0), dtype=M.dtype)
    collected = []
    deltas = []
    norm = spectral_norm(M)
    result = None
    l_used = 0
    for stage, (sketch, width) in enumerate(zip(sketches, widths), start=1):
        Y = sketch()
        l_used += width
        collected.append(Y)
        if reuse_projections:
            Q = _append_block(Q, Y, drop_tol)
        else:
            Q = orthonormalize_columns(np.hstack(collected), drop_tol)
        basis = _subspace_iteration(M, Q, power_iterations, drop_tol)
        delta = estimator.estimate(M, basis) if basis.shape[1] else norm
        if verify_reuse and reuse_projections:
            fresh = orthonormalize_columns(np.hstack(collected), drop_tol)
            exact = spectral_norm(projection_residual(M, Q))
            check = spectral_norm(projection_residual(M, fresh))
            if abs(exact - check) > 1e-8 * max(norm, 1.0):
                raise SketchlabError(f"projection reuse diverged at stage {stage}: {exact:.3e} vs {check:.3e}")
        deltas.append(delta)
        result = RangeFinderResult(basis, delta, tau, l_used, tally, stage, method, deltas)
        if result.success:
            break
    return result, collected


def recursive_range_finder(M, Bhat, block_sizes, tau, estimator=None, reuse_projections=True, verify_reuse=False,
                           drop_tol=DROP_TOL, power_iterations=0):
    """Range finder on the growing prefixes (B_1 | ... | B_i) of the column blocks of ``Bhat``.

    Stops at the first stage whose error is at most ``tau``. The block sizes must add
    up to the order of ``Bhat``, so the last stage sketches with the whole of it.
    """
    M = _check_operands(M, Bhat)
    _check_tau(tau)
    block_sizes = [int(b) for b in block_sizes]
    if not block_sizes or any(b < 1 for b in block_sizes) or sum(block_sizes) != Bhat.width:
        raise InvalidArgument(f"block sizes {block_sizes} must be positive and sum to {Bhat.width}")
    tally = mp.FlopTally()
    offsets = np.concatenate([[0], np.cumsum(block_sizes)])

    def stage_sketch(start, stop):
        block = mp.restrict_columns(Bhat, cols=np.arange(start, stop))
        return lambda: block.sketch(M, tally)

    sketches = [stage_sketch(offsets[i], offsets[i + 1]) for i in range(len(block_sizes))]
    result, _ = _grow(M, sketches, block_sizes, tau, estimator, reuse_projections, verify_reuse, drop_tol, tally,
                      "recursive", power_iterations)
    return result


def doubling_block_sizes(n, first=8):
    """first, first, 2 first, 4 first, ... with the last size cut so that they add up to n."""
    n, first = int(n), int(first)
    if not 1 <= first <= n:
        raise InvalidArgument(f"first block size must lie in 1..{n}, got {first}")
    sizes = [first]
    total = first
    while total < n:
        size = min(total, n - total)
        sizes.append(size)
        total += size
    return sizes


def randomized_compression(M, B, l_minus, rng=None, G=None, tally=None):
    """(M B) G for a Gaussian l x l_minus matrix G, an l_minus column sketch of M.

    An explicit ``G`` replaces the random one and may have l_minus = l.
    """
    M = _check_operands(M, B)
    l = B.width
    if G is None:
        if not 1 <= l_minus < l:
            raise InvalidArgument(f"compressed width must satisfy 1 <= l_minus < l = {l}, got {l_minus}")
        G = gaussian_matrix(l, l_minus, rng)
    else:
        G = np.asarray(G)
        if G.shape != (l, l_minus):
            raise InvalidArgument(f"compression matrix must be {l} x {l_minus}, got {G.shape}")
    return B.sketch(M, tally) @ G


def heuristic_compression(blocks, signs=None, rng=None):
    """B = sum_j c_j B_j over failed blocks with random (or given) signs c_j = +-1."""
    blocks = list(blocks)
    if not blocks:
        raise InvalidArgument("heuristic compression needs at least one block")
    if signs is None:
        rng = as_rng(rng)
        if rng is None:
            raise InvalidArgument("heuristic compression needs signs or a seed")
        signs = rng.signs(len(blocks))
    signs = np.asarray(signs, dtype=np.float64)
    if signs.shape != (len(blocks),) or np.any(np.abs(signs) != 1):
        raise InvalidArgument("need one sign +-1 per block")
    return mp.sum_of(blocks, signs)


def power_scheme(M, i):
    """M_i = (M M^H)^i M, whose singular values are sigma_j(M)^(2i+1)."""
    M = as_matrix(M)
    if int(i) < 0:
        raise InvalidArgument(f"power must be non-negative, got {i}")
    X = M
    for _ in range(int(i)):
        X = M @ (M.conj().T @ X)
    return X


def frievalds_error_estimate(M, Q, k=FRIEVALDS_K, rng=None):
    """||(M - Q Q^H M) H|| / sqrt(k) for a Gaussian n x k probe H, using tall-thin products only."""
    M = as_matrix(M)
    if int(k) < 1:
        raise InvalidArgument(f"probe width must be positive, got {k}")
    rng = as_rng(rng) if rng is not None else RngStream(0)
    H = rng.standard_normal((M.shape[1], int(k)))
    MH = M @ H
    if Q.shape[1]:
        MH = MH - Q @ (Q.conj().T @ MH)
    return spectral_norm(MH) / np.sqrt(k)


def low_rank_factors(M, Q):
    """U = Q and V = Q^H M, so that U V = Q Q^H M."""
    M = as_matrix(M)
    return Q, Q.conj().T @ M


def theoretical_error_bound(m, n, r, l, kappa_B=1.0, kind="primal"):
    """Closed-form bounds on the expected error factor.

    primal: E(f) < (1 + sqrt(n) + sqrt(l)) (e / p) sqrt(8 (n - r) r l)
    dual:   E(f_d) < e^2 sqrt(8 (n - r) l) kappa(B) r / ((m - r) p)
    with p = l - r. The dual value is nan when m <= r.
    """
    if kind not in ("primal", "dual"):
        raise InvalidArgument(f"bound kind must be primal or dual, got {kind!r}")
    p = int(l) - int(r)
    if p <= 0:
        raise UndefinedExpectation(f"expected error factor is not defined for p = l - r = {p}")
    if kind == "dual" and m <= r:
        raise InvalidArgument(f"dual bound needs m > r, got m={m}, r={r}")
    e = np.e
    primal = (1.0 + np.sqrt(n) + np.sqrt(l)) * (e / p) * np.sqrt(8.0 * (n - r) * r * l)
    dual = e ** 2 * np.sqrt(8.0 * (n - r) * l) * kappa_B * r / ((m - r) * p) if m > r else float("nan")
    note = "dual bound decreases like r / (m - r) and the error approaches sigma_{r+1}(M) as m grows"
    return BoundReport(float(primal), float(dual), m, n, r, l, p, float(kappa_B), note)


SuccessRankCheck = namedtuple("SuccessRankCheck", ["success", "rank_of_sketch", "r", "consistent", "delta"])


def success_rank_check(M, B, r, xi, tau, estimator=None):
    """Run the range finder and compare Success with numerical_rank(M B, xi ||B||) == r."""
    M = _check_operands(M, B)
    result = range_finder(M, B, tau, estimator)
    norm_B = spectral_norm(mp.densify(B))
    rank = numerical_rank(B.sketch(M), xi * norm_B) if norm_B > 0 else 0
    return SuccessRankCheck(result.success, rank, int(r), result.success == (rank == int(r)), result.delta)


def approximate(M, blocks, tau, estimator=None, rng=None, l_minus=None, power_iterations=0, drop_tol=DROP_TOL,
                max_stack=None):
    """Failure-managed low-rank approximation over a list of n x l_j multipliers.

    The blocks are first stacked stage by stage as in the recursive range finder,
    as long as the stack stays within ``max_stack`` columns. If no stage succeeds,
    a random +-1 combination of the blocks is tried (equal widths only). The last
    resort is a randomized compression of the sketch by all blocks to ``l_minus``
    columns, ``l_minus`` defaulting to the width of the first block. Power
    iterations apply to every attempt.

    ``method`` on the result names the attempt that produced it: ``single`` (first
    stage), ``recursive``, ``heuristic`` or ``compressed``. When everything fails
    the last attempt is returned.
    """
    blocks = list(blocks)
    if not blocks:
        raise InvalidArgument("approximate needs at least one multiplier block")
    M = _check_operands(M, blocks[0])
    for block in blocks[1:]:
        _check_operands(M, block)
    _check_tau(tau)
    if power_iterations < 0:
        raise InvalidArgument(f"power iterations must be non-negative, got {power_iterations}")
    widths = [b.width for b in blocks]
    if max_stack is not None and max_stack < widths[0]:
        raise InvalidArgument(f"max_stack={max_stack} is narrower than the first block ({widths[0]} columns)")
    rng = as_rng(rng) if rng is not None else RngStream(0)
    tally = mp.FlopTally()

    stages = len(blocks)
    if max_stack is not None:
        stages = int(np.searchsorted(np.cumsum(widths), max_stack, side="right"))
    sketches = [(lambda block=block: block.sketch(M, tally)) for block in blocks[:stages]]
    result, _ = _grow(M, sketches, widths[:stages], tau, estimator, True, False, drop_tol, tally, "recursive",
                      power_iterations)
    if result.stage == 1:
        result.method = "single"
    if result.success or len(blocks) == 1:
        return result

    if len(set(widths)) == 1:
        combined = heuristic_compression(blocks, rng=rng)
        result = range_finder(M, combined, tau, estimator, power_iterations, drop_tol)
        tally.merge(result.flops)
        result.flops = tally
        result.method = "heuristic"
        if result.success:
            return result

    total = sum(widths)
    l_minus = widths[0] if l_minus is None else int(l_minus)
    if 1 <= l_minus < total:
        Y = np.hstack([block.sketch(M, tally) for block in blocks]) @ gaussian_matrix(total, l_minus, rng)
        result = range_finder_from_sketch(M, Y, tau, estimator, power_iterations, drop_tol, tally, "compressed")
    return result
