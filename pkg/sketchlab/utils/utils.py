from __future__ import division

import os
import platform
import subprocess

import numpy as np


RNG_ALGORITHM = "philox4x64-10/numpy-ziggurat"
_UINT64 = (1 << 64) - 1


class SketchlabError(Exception):
    """Base class for every error raised by sketchlab."""


class InvalidArgument(SketchlabError, ValueError):
    pass


class InvalidInput(SketchlabError, ValueError):
    pass


class DensifyLimitExceeded(SketchlabError):
    pass


class UndefinedExpectation(SketchlabError):
    pass


class AcceptanceViolation(SketchlabError):
    pass


class RngStream(object):
    """Counter-based random stream (numpy Philox) that counts the variables it hands out.

    Identical seeds give identical sequences on every platform numpy supports.
    ``drawn`` is the number of random variables consumed so far; seed derivation
    through :meth:`spawn_seed` is not counted.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed=0):
        self.seed = int(seed) & _UINT64
        self._gen = np.random.Generator(np.random.Philox(self.seed))
        self.drawn = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, drawn={self.drawn})"

    def _count(self, size):
        self.drawn += int(np.prod(size)) if size is not None else 1

    def standard_normal(self, size):
        self._count(size)
        return self._gen.standard_normal(size)

    def uniform(self, low, high, size):
        self._count(size)
        return self._gen.uniform(low, high, size)

    def integers(self, low, high, size):
        self._count(size)
        return self._gen.integers(low, high, size)

    def signs(self, n):
        """Independent +1/-1 entries, each with probability 0.5."""
        return 2.0 * self.integers(0, 2, n) - 1.0

    def unit_circle(self, n):
        """Entries uniformly distributed on the complex unit circle."""
        return np.exp(2j * np.pi * self.uniform(0.0, 1.0, n))

    def choice(self, values, size):
        values = np.asarray(values)
        return values[self.integers(0, len(values), size)]

    def permutation(self, n):
        self._count(n)
        return self._gen.permutation(n)

    def subset(self, n, q):
        """q distinct indices out of range(n), uniform without replacement."""
        self._count(q)
        return np.sort(self._gen.choice(n, size=q, replace=False))

    def spawn_seed(self):
        return int(self._gen.integers(0, 1 << 63))


def as_rng(rng):
    """Accept an RngStream, an integer seed or None."""
    if rng is None:
        return None
    if isinstance(rng, RngStream):
        return rng
    return RngStream(rng)


def node_seed(rng):
    """Seed for a randomized multiplier node drawn from ``rng`` (stream or int)."""
    if rng is None:
        raise InvalidArgument("a seed or RngStream is required for a randomized multiplier")
    if isinstance(rng, RngStream):
        return rng.spawn_seed()
    return int(rng) & _UINT64


def trial_seed(base_seed, index):
    return (int(base_seed) ^ int(index)) & _UINT64


def print_environment_info():
    """
    Prints infos about the environment and the system.
    This should help when people make issues containg the printout.
    """

    print("Environment information:")

    # Print OS information
    print(f"System: {platform.system()} {platform.release()}")
    print(f"Python: {platform.python_version()}  numpy: {np.__version__}")

    # Print commit hash if possible
    try:
        print(f"Current Commit Hash: {subprocess.check_output(['git', 'rev-parse', '--short', 'HEAD'], stderr=subprocess.DEVNULL, cwd=os.path.dirname(__file__)).decode('ascii').strip()}")
    except (subprocess.CalledProcessError, FileNotFoundError):
        print("No git or repo found")
