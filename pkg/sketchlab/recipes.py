from __future__ import division

import numpy as np

from sketchlab import multipliers as mp
from sketchlab.utils.utils import InvalidArgument, RngStream, node_seed


ASPH_SCALING = (0.25, 0.5, 1.0, 2.0, 4.0)
DEPTH = 3


def _ibd(n, main, offset, orientation, value, rng=None, permuted=True):
    """Inverse bidiagonal with constant main and k-th sub/superdiagonal, column permuted unless told otherwise."""
    B = mp.inverse_bidiagonal(n, diag_entries=np.full(n - offset, float(value)), orientation=orientation,
                              main=float(main), offset=offset)
    return mp.Product([B, mp.permutation(n, rng)]) if permuted else B


def sb(main, k, value):
    return (main, k, "lower", value)


def sp(main, k, value):
    return (main, k, "upper", value)


def aph(n, rng):
    """3-APH: three Hadamard steps followed by a random column permutation."""
    return mp.abridged_hadamard(n, DEPTH, "APH", rng, column_permutation=True)


def apf(n, rng):
    return mp.abridged_fourier(n, DEPTH, "APF", rng, column_permutation=True)


def asph(n, rng):
    """3-ASPH with i.i.d. scaling from {1/4, 1/2, 1, 2, 4}."""
    return mp.abridged_hadamard(n, DEPTH, "ASPH", rng, scaling=ASPH_SCALING, column_permutation=True)


def basic_set_1(n, rng):
    return apf(n, rng)


def basic_set_2(n, rng):
    """Real circulant Z_1(v) with ten random +-1 entries in v."""
    return mp.sparse_f_circulant(n, min(10, n), 1.0, rng, values="sign")


def basic_set_3(n, rng):
    """Sum of two inverse bidiagonal matrices, main diagonal 101 and +-1 first sub/superdiagonal,
    each scaled by diag(+-2^b) with b uniform in 0..3."""
    terms = []
    for orientation in ("lower", "upper"):
        stream = RngStream(node_seed(rng))
        exponents = stream.integers(0, 4, n)
        D = mp.Diagonal(n, entries=stream.signs(n) * 2.0 ** exponents)
        B = mp.inverse_bidiagonal(n, diag_entries=stream.signs(n - 1), orientation=orientation, main=101.0)
        terms.append(mp.Product([D, B]))
    return mp.Sum(terms)


BASIC_SETS = {1: basic_set_1, 2: basic_set_2, 3: basic_set_3}

# class -> (first term, second term, how they combine)
EIGHT_CLASSES = {
    1: (1, None, None),
    2: (2, None, None),
    3: (3, None, None),
    4: (1, 1, "product"),
    5: (2, 2, "product"),
    6: (3, 3, "product"),
    7: (1, 3, "sum"),
    8: (2, 3, "sum"),
}


def eight_class(index, n, rng):
    if index not in EIGHT_CLASSES:
        raise InvalidArgument(f"unknown class {index}, expected 1..8")
    first, second, how = EIGHT_CLASSES[index]
    B = BASIC_SETS[first](n, rng)
    if how is None:
        return B
    C = BASIC_SETS[second](n, rng)
    return mp.Product([B, C]) if how == "product" else mp.Sum([B, C])


# class -> (abridged term or None, inverse bidiagonal terms, extra permutations, permute IBDs)
ADDITIONAL_CLASSES = {
    1: ("ASPH", [sb(-1, 2, -1), sp(1, 1, 1)], 0, True),
    2: ("ASPH", [sb(1, 2, -1), sp(1, 1, -1)], 0, True),
    3: ("ASPH", [sb(1, 1, -1), sp(1, 1, -1)], 0, True),
    4: ("ASPH", [sb(1, 1, 1), sp(1, 1, -1)], 0, True),
    5: ("ASPH", [sb(1, 1, 1), sp(1, 1, -1)], 0, False),
    6: ("ASPH", [sb(-1, 2, -1), sp(1, 1, 1), sb(1, 9, 1)], 0, True),
    7: ("ASPH", [sb(1, 2, -1), sp(1, 1, -1), sp(1, 8, 1)], 0, True),
    8: ("ASPH", [sb(1, 1, -1), sp(1, 1, -1), sb(1, 4, 1)], 0, True),
    9: ("ASPH", [sb(1, 1, 1), sp(1, 1, -1), sp(-1, 3, 1)], 0, True),
    10: (None, [sb(1, 1, 1), sp(1, 1, -1), sp(-1, 3, 1)], 0, True),
    11: ("APH", [sb(1, 2, -1), sp(1, 1, -1), sp(1, 8, 1)], 0, True),
    12: ("APH", [sb(1, 1, -1), sp(1, 1, -1)], 0, True),
    13: ("ASPH", [], 1, True),
    14: ("ASPH", [], 2, True),
    15: ("ASPH", [], 3, True),
    16: ("APH", [], 3, True),
    17: ("APH", [], 2, True),
}


def additional_class(index, n, rng):
    """Multiplier of class 0 (Gaussian) to 17 of the additional-classes table."""
    if index == 0:
        return mp.gaussian(n, rng)
    if index not in ADDITIONAL_CLASSES:
        raise InvalidArgument(f"unknown class {index}, expected 0..17")
    abridged, bidiagonals, permutations, permuted = ADDITIONAL_CLASSES[index]
    terms = []
    if abridged == "ASPH":
        terms.append(asph(n, rng))
    elif abridged == "APH":
        terms.append(aph(n, rng))
    for main, offset, orientation, value in bidiagonals:
        terms.append(_ibd(n, main, offset, orientation, value, rng, permuted))
    terms.extend(mp.permutation(n, rng) for _ in range(permutations))
    return mp.sum_of(terms)


RECIPES = {
    "gaussian": mp.gaussian,
    "toeplitz": mp.gaussian_toeplitz,
    "circulant": lambda n, rng: mp.sparse_f_circulant(n, n, 1.0, rng, values="gaussian"),
    "gaussian-subcirculant": lambda n, rng: mp.sparse_f_circulant(n, n, 1.0, rng, values="gaussian"),
    "sign-subcirculant": lambda n, rng: mp.sparse_f_circulant(n, n, 1.0, rng, values="sign"),
    "ternary": mp.ternary,
    "3-AH": lambda n, rng: mp.abridged_hadamard(n, DEPTH, "AH"),
    "3-ASPH": lambda n, rng: mp.abridged_hadamard(n, DEPTH, "ASPH", rng),
    "3-ASPH-scaled": asph,
    "3-APH": aph,
    "3-APF": apf,
    "3-AF": lambda n, rng: mp.abridged_fourier(n, DEPTH, "AF"),
    "3-ASPF": lambda n, rng: mp.abridged_fourier(n, DEPTH, "ASPF", rng),
    "random-abridged-H": lambda n, rng: mp.randomized_abridged(n, DEPTH, "H", rng),
    "random-abridged-F": lambda n, rng: mp.randomized_abridged(n, DEPTH, "F", rng),
    "sparse-circulant": basic_set_2,
    "uniformly-sparse": lambda n, rng: mp.uniformly_sparse(n, 4, rng),
    "abridged-f-circulant": lambda n, rng: mp.abridged_f_circulant(n, DEPTH, 1.0, rng),
    "inverse-bidiagonal": lambda n, rng: mp.inverse_bidiagonal(n, rng),
    "givens": lambda n, rng: mp.givens_chain(n, DEPTH, rng),
    "block-circulant": lambda n, rng: mp.block2x2_circulant(n, rng=rng),
}
for _i in range(1, 9):
    RECIPES[f"class8-{_i}"] = lambda n, rng, _i=_i: eight_class(_i, n, rng)
for _i in range(0, 18):
    RECIPES[f"class-{_i}"] = lambda n, rng, _i=_i: additional_class(_i, n, rng)


def build(name, n, rng):
    """
    Builds the n x n multiplier named ``name`` (see RECIPES) from seed or stream ``rng``
    """
    if name not in RECIPES:
        raise InvalidArgument(f"unknown multiplier recipe {name!r}; known: {', '.join(sorted(RECIPES))}")
    return RECIPES[name](n, rng)
