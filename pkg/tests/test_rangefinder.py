import numpy as np
import pytest
from numpy.testing import assert_allclose

from sketchlab import multipliers as mp
from sketchlab import rangefinder as rf
from sketchlab.utils.datasets import SpectrumSpec, svd_spectrum_matrix
from sketchlab.utils.linalg import singular_values, spectral_norm
from sketchlab.utils.utils import InvalidArgument, RngStream, UndefinedExpectation


def spectrum_matrix(sigma, seed):
    rng = RngStream(seed)
    n = len(sigma)
    S, _ = np.linalg.qr(rng.standard_normal((n, n)))
    T, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (S * sigma) @ T.T


def selection(n, cols):
    return mp.restrict_columns(mp.dense(np.eye(n)), cols=cols)


def test_exact_rank_recovery_with_gaussian_multiplier():
    rng = RngStream(1)
    for trial in range(50):
        m, n = rng.integers(20, 129, 2)
        r = int(rng.integers(1, 17, 1)[0])
        M = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        B = mp.restrict_columns(mp.gaussian(n, rng), l=r)
        result = rf.range_finder(M, B, tau=1e-10 * spectral_norm(M))
        assert result.success, trial
        assert result.rank == r


def test_abridged_hadamard_on_svd_input():
    M = svd_spectrum_matrix(SpectrumSpec(256, 8), RngStream(2))
    B = mp.restrict_columns(mp.abridged_hadamard(256, 3), l=20)
    result = rf.range_finder(M, B, tau=1e-6)
    assert result.success
    assert 0.99e-10 <= result.delta <= 1e-6
    assert result.l_used == 20
    assert result.flops.total() > 0


def test_trivial_tolerance_and_zero_matrix():
    rng = RngStream(3)
    M = rng.standard_normal((10, 16))
    B = mp.restrict_columns(mp.gaussian(16, rng), l=2)
    assert rf.range_finder(M, B, tau=spectral_norm(M)).success
    zero = rf.range_finder(np.zeros((10, 16)), B, tau=0.0)
    assert zero.empty_basis and zero.delta == 0.0 and zero.success


def test_invalid_operands():
    B = mp.restrict_columns(mp.gaussian(16, RngStream(0)), l=2)
    with pytest.raises(InvalidArgument):
        rf.range_finder(np.ones((4, 15)), B, tau=1.0)
    with pytest.raises(InvalidArgument):
        rf.range_finder(np.ones((4, 16)), B, tau=-1.0)
    with pytest.raises(InvalidArgument):
        rf.range_finder(np.ones((4, 16)), B, tau=1.0, power_iterations=-1)


def test_power_iterations_sharpen_the_error():
    sigma = np.concatenate([1.0 / np.arange(1, 11), 0.01 / np.arange(11, 101)])
    M = spectrum_matrix(sigma, seed=4)
    B = mp.restrict_columns(mp.gaussian(100, RngStream(5)), l=10)
    plain = rf.range_finder(M, B, tau=0.0)
    powered = rf.range_finder(M, B, tau=0.0, power_iterations=3)
    assert powered.delta >= sigma[10] * (1 - 1e-10)
    assert powered.delta <= plain.delta
    assert powered.delta <= 1.5 * sigma[10]


def test_power_scheme_raises_singular_values_to_odd_powers():
    sigma = np.linspace(1.5, 0.5, 64)
    M = spectrum_matrix(sigma, seed=6)
    for i in (1, 2, 3):
        assert_allclose(singular_values(rf.power_scheme(M, i)), sigma ** (2 * i + 1), rtol=1e-8)
    assert_allclose(rf.power_scheme(M, 0), M)
    with pytest.raises(InvalidArgument):
        rf.power_scheme(M, -1)


def test_frievalds_estimate_brackets_exact_error():
    M = svd_spectrum_matrix(SpectrumSpec(128, 8, tail=1e-4), RngStream(7))
    B = mp.restrict_columns(mp.gaussian(128, RngStream(8)), l=12)
    Q = rf.range_finder(M, B, tau=0.0).Q
    exact = spectral_norm(M - Q @ (Q.T @ M))
    estimate = rf.frievalds_error_estimate(M, Q, k=8, rng=RngStream(9))
    assert exact / 4 <= estimate <= exact * (np.sqrt(128) + np.sqrt(8) + 6) / np.sqrt(8)
    via_estimator = rf.range_finder(M, B, tau=0.0, estimator=rf.ErrorEstimator("frievalds", 8, seed=9))
    assert_allclose(via_estimator.delta, estimate)


def test_recursive_range_finder_stops_at_first_success():
    M = svd_spectrum_matrix(SpectrumSpec(256, 16), RngStream(10))
    Bhat = mp.abridged_hadamard(256, 3, "ASPH", RngStream(11))
    blocks = [8, 8, 16, 32, 64, 128]
    result = rf.recursive_range_finder(M, Bhat, blocks, tau=1e-6, verify_reuse=True)
    assert result.success
    assert result.l_used in (16, 32)
    assert result.stage == len(result.stage_deltas)
    assert all(b <= a * (1 + 1e-8) for a, b in zip(result.stage_deltas, result.stage_deltas[1:]))
    refreshed = rf.recursive_range_finder(M, Bhat, blocks, tau=1e-6, reuse_projections=False)
    assert refreshed.stage == result.stage
    assert_allclose(refreshed.delta, result.delta, rtol=1e-6)


def test_recursive_range_finder_exhausts_all_blocks():
    rng = RngStream(12)
    M = rng.standard_normal((32, 32))
    result = rf.recursive_range_finder(M, mp.gaussian(32, rng), [8, 8, 16], tau=0.0)
    assert result.stage == 3 and result.l_used == 32
    assert result.delta <= 1e-10 * spectral_norm(M)
    with pytest.raises(InvalidArgument):
        rf.recursive_range_finder(M, mp.gaussian(32, rng), [8, 8], tau=0.0)


def test_heuristic_compression_rescues_two_failing_blocks():
    n = 8
    rng = RngStream(13)
    U, _ = np.linalg.qr(rng.standard_normal((12, 2)))
    M = np.zeros((12, n))
    M[:, 0] = 2.0 * U[:, 0]
    M[:, 3] = 1.0 * U[:, 1]
    blocks = [selection(n, [0, 1]), selection(n, [2, 3])]
    for block in blocks:
        assert not rf.range_finder(M, block, tau=1e-8).success
    successes = 0
    for draw in range(100):
        combined = rf.heuristic_compression(blocks, rng=RngStream(draw))
        successes += rf.range_finder(M, combined, tau=1e-8).success
    assert successes >= 90
    result = rf.approximate(M, blocks, tau=1e-8, rng=RngStream(14), max_stack=2)
    assert result.success and result.method == "heuristic" and result.l_used == 2


def test_approximate_stacks_blocks_first():
    n = 6
    rng = RngStream(15)
    U, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    M = np.zeros((10, n))
    M[:, 0], M[:, 3], M[:, 5] = 3.0 * U[:, 0], 2.0 * U[:, 1], 1.0 * U[:, 2]
    blocks = [selection(n, [0, 1]), selection(n, [2, 3]), selection(n, [4, 5])]
    recursive = rf.approximate(M, blocks, tau=1e-8, rng=RngStream(16))
    assert recursive.success and recursive.method == "recursive"
    assert recursive.stage == 3 and recursive.l_used == 6
    single = rf.approximate(M, [selection(n, [0, 3, 5])], tau=1e-8)
    assert single.method == "single" and single.success and single.stage == 1


def test_approximate_falls_back_to_randomized_compression():
    n = 6
    rng = RngStream(21)
    U, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    M = np.zeros((10, n))
    M[:, 0], M[:, 3], M[:, 5] = 3.0 * U[:, 0], 2.0 * U[:, 1], 1.0 * U[:, 2]
    blocks = [selection(n, [0, 1]), selection(n, [3, 5])]
    assert not rf.range_finder(M, blocks[0], tau=1e-8).success
    for signs in ([1, 1], [1, -1], [-1, 1], [-1, -1]):
        combined = rf.heuristic_compression(blocks, signs=signs)
        assert not rf.range_finder(M, combined, tau=1e-8).success
    result = rf.approximate(M, blocks, tau=1e-8, rng=RngStream(22), l_minus=3, max_stack=2)
    assert result.success and result.method == "compressed"
    assert result.l_used == 3 and result.rank == 3
    narrow = rf.approximate(M, blocks, tau=1e-8, rng=RngStream(22), max_stack=2)
    assert not narrow.success and narrow.method == "compressed" and narrow.l_used == 2
    with pytest.raises(InvalidArgument):
        rf.approximate(M, blocks, tau=1e-8, max_stack=1)


def test_approximate_runs_power_iterations_in_every_stage():
    sigma = np.concatenate([1.0 / np.arange(1, 11), 0.01 / np.arange(11, 101)])
    M = spectrum_matrix(sigma, seed=23)
    block = mp.restrict_columns(mp.gaussian(100, RngStream(24)), l=10)
    single = rf.approximate(M, [block], tau=0.0, power_iterations=3)
    assert_allclose(single.delta, rf.range_finder(M, block, tau=0.0, power_iterations=3).delta, rtol=1e-8)
    assert single.delta <= 1.5 * sigma[10]
    blocks = [mp.restrict_columns(mp.gaussian(100, RngStream(25 + j)), l=5) for j in range(2)]
    plain = rf.approximate(M, blocks, tau=0.0, rng=RngStream(27))
    powered = rf.approximate(M, blocks, tau=0.0, rng=RngStream(27), power_iterations=3)
    assert plain.method == powered.method == "compressed"
    assert sigma[5] * (1 - 1e-10) <= powered.delta <= plain.delta


def test_recursive_range_finder_with_power_iterations():
    M = svd_spectrum_matrix(SpectrumSpec(128, 8, tail=1e-3), RngStream(26))
    Bhat = mp.abridged_hadamard(128, 3, "ASPH", RngStream(27))
    sizes = rf.doubling_block_sizes(128)
    assert sizes == [8, 8, 16, 32, 64] and sum(sizes) == 128
    plain = rf.recursive_range_finder(M, Bhat, sizes, tau=0.0)
    powered = rf.recursive_range_finder(M, Bhat, sizes, tau=0.0, power_iterations=2)
    assert powered.stage_deltas[0] <= plain.stage_deltas[0] * (1 + 1e-8)
    assert rf.doubling_block_sizes(100, first=10) == [10, 10, 20, 40, 20]
    with pytest.raises(InvalidArgument):
        rf.doubling_block_sizes(8, first=9)


def test_error_never_beats_the_truncated_svd():
    sigma = 1.0 / np.arange(1, 65) ** 2
    M = spectrum_matrix(sigma, seed=28)
    rng = RngStream(29)
    families = [
        mp.gaussian(64, rng),
        mp.abridged_hadamard(64, 3, "ASPH", rng),
        mp.abridged_fourier(64, 3, "ASPF", rng),
        mp.sparse_f_circulant(64, 4, -1.0, rng),
        mp.inverse_bidiagonal(64, rng),
    ]
    for B in families:
        for l in (4, 8, 16):
            for power_iterations in (0, 2):
                result = rf.range_finder(M, mp.restrict_columns(B, l=l), tau=0.0, power_iterations=power_iterations)
                floor = sigma[result.rank] if result.rank < sigma.size else 0.0
                assert result.delta >= floor - 1e-10 * sigma[0], (B.family, l, power_iterations)


def test_unitary_map_leaves_the_error_unchanged():
    sigma = 1.0 / np.arange(1, 65) ** 1.5
    M = spectrum_matrix(sigma, seed=30)[:40]
    rng = RngStream(31)
    U = mp.givens_chain(64, 3, rng)
    Udense = mp.densify(U)
    assert U.unitary_scale() == pytest.approx(1.0)
    for B in (mp.restrict_columns(mp.abridged_hadamard(64, 3, "ASPH", rng), l=10),
              mp.restrict_columns(mp.sparse_f_circulant(64, 4, 1.0, rng), l=10)):
        UB = mp.product(U, B)
        assert_allclose(mp.densify(UB), Udense @ mp.densify(B), atol=1e-12)
        direct = rf.range_finder(M, B, tau=0.0)
        mapped = rf.range_finder(M @ Udense.conj().T, UB, tau=0.0)
        assert_allclose(mapped.delta, direct.delta, rtol=1e-8)
    UA = mp.product(U, mp.abridged_hadamard(64, 3, "ASPH", rng))
    dense = mp.densify(UA)
    assert_allclose(dense.conj().T @ dense, UA.unitary_scale() ** 2 * np.eye(64), atol=1e-10)


def test_randomized_compression_with_explicit_matrix():
    rng = RngStream(17)
    M = rng.standard_normal((9, 16))
    B = mp.restrict_columns(mp.gaussian(16, rng), l=5)
    G = rng.standard_normal((5, 2))
    assert_allclose(rf.randomized_compression(M, B, 2, G=G), (M @ mp.densify(B)) @ G, atol=1e-12)
    assert rf.randomized_compression(M, B, 3, rng=rng).shape == (9, 3)
    with pytest.raises(InvalidArgument):
        rf.randomized_compression(M, B, 5, rng=rng)


def test_low_rank_factors_reproduce_the_projection():
    M = svd_spectrum_matrix(SpectrumSpec(64, 4), RngStream(18))
    result = rf.range_finder(M, mp.restrict_columns(mp.gaussian(64, RngStream(19)), l=8), tau=1e-6)
    U, V = rf.low_rank_factors(M, result.Q)
    assert_allclose(U @ V, result.approximation(M), atol=1e-14)
    assert spectral_norm(M - U @ V) <= 1e-6


def test_theoretical_error_bound():
    bound = rf.theoretical_error_bound(512, 512, 16, 24)
    assert bound.p == 8 and bound.expected_f > 0 and bound.expected_f_dual > 0
    larger = rf.theoretical_error_bound(4096, 512, 16, 24)
    assert larger.expected_f_dual < bound.expected_f_dual
    with pytest.raises(UndefinedExpectation):
        rf.theoretical_error_bound(64, 64, 8, 8)
    with pytest.raises(InvalidArgument):
        rf.theoretical_error_bound(8, 64, 8, 12, kind="dual")
    assert np.isnan(rf.theoretical_error_bound(8, 64, 8, 12).expected_f_dual)


def test_success_iff_sketch_has_numerical_rank_r():
    rng = RngStream(20)
    n, r, xi = 48, 5, 1e-5
    counterexamples = 0
    for trial in range(40):
        sigma = np.sort(rng.uniform(0.1, 1.0, r))[::-1]
        U, _ = np.linalg.qr(rng.standard_normal((40, r)))
        cols = rng.permutation(n)[:r]
        M = np.zeros((40, n))
        M[:, cols] = U * sigma
        M += 1e-10 * rng.standard_normal((40, n)) / np.sqrt(40 * n)
        if trial % 2:
            B = mp.restrict_columns(mp.gaussian(n, rng), l=r + 4)
        else:
            # adversarial: a column selection that misses some of the support
            others = np.setdiff1d(np.arange(n), cols)
            picked = np.concatenate([cols[:trial % r], others[rng.permutation(others.size)[:4]]])
            B = selection(n, picked)
        check = rf.success_rank_check(M, B, r, xi, tau=xi)
        counterexamples += not check.consistent
    assert counterexamples == 0
