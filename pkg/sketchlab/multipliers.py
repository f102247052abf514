from __future__ import division

import json

import numpy as np
from scipy import linalg, sparse

from sketchlab.utils.utils import (
    DensifyLimitExceeded, InvalidArgument, RngStream, as_rng, node_seed)


DENSIFY_CAP = 4096
UNIT_TOL = 1e-12


class FlopTally(object):
    """Additions and multiplications counted in the operator's own field.

    One complex addition or multiplication counts as one flop here, which is the
    unit of the complex row of the flop table; :meth:`real_equivalent` converts
    with 2 real flops per complex addition and 6 per complex multiplication.
    """

    def __init__(self, additions=0, multiplications=0):
        self.additions = int(additions)
        self.multiplications = int(multiplications)

    def __repr__(self):
        return f"FlopTally(additions={self.additions}, multiplications={self.multiplications})"

    def add(self, additions=0, multiplications=0):
        self.additions += int(additions)
        self.multiplications += int(multiplications)

    def merge(self, other):
        self.add(other.additions, other.multiplications)
        return self

    def reset(self):
        self.additions = 0
        self.multiplications = 0

    def total(self):
        return self.additions + self.multiplications

    def real_equivalent(self, field):
        if field == "complex":
            return 2 * self.additions + 6 * self.multiplications
        return self.total()


def _encode(values):
    if values is None:
        return None
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return {"re": values.real.tolist(), "im": values.imag.tolist()}
    return values.tolist()


def _decode(obj):
    if obj is None:
        return None
    if isinstance(obj, dict):
        return np.asarray(obj["re"], dtype=np.float64) + 1j * np.asarray(obj["im"], dtype=np.float64)
    return np.asarray(obj)


def _encode_scalar(z):
    z = complex(z)
    if z.imag == 0.0:
        return z.real
    return {"re": z.real, "im": z.imag}


def _decode_scalar(obj):
    if isinstance(obj, dict):
        return complex(obj["re"], obj["im"])
    return obj


def _is_sign(values):
    """True when every entry is exactly +1 or -1 (a sign flip costs no flop)."""
    values = np.asarray(values)
    return bool(np.all((values == 1) | (values == -1)))


def _nontrivial(values):
    values = np.asarray(values)
    return int(np.count_nonzero((values != 1) & (values != -1)))


def _field_of(*values):
    return "complex" if any(np.iscomplexobj(v) for v in values) else "real"


def _check_depth(n, d):
    if d < 1 or n % (1 << d) != 0:
        raise InvalidArgument(f"2^{d} must divide n={n}")


class Multiplier(object):
    """Matrix-free n x width operator B.

    Subclasses implement ``_apply`` (B Y) and ``_adjoint`` (B^H X) on 2-D blocks
    and count their arithmetic in the FlopTally they are handed.
    """

    family = None

    def __init__(self, n, width=None, field="real", seed=None, children=()):
        self.n = int(n)
        self.width = self.n if width is None else int(width)
        self.field = field
        self.seed = seed
        self.children = list(children)
        self.own_random_variables = 0

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, width={self.width}, field={self.field})"

    @property
    def shape(self):
        return (self.n, self.width)

    @property
    def dtype(self):
        return np.complex128 if self.field == "complex" else np.float64

    def params(self):
        return {}

    def descriptor(self):
        return {
            "family": self.family,
            "params": self.params(),
            "seed": self.seed,
            "children": [child.descriptor() for child in self.children],
        }

    def to_json(self):
        return json.dumps(self.descriptor(), sort_keys=True)

    def unitary_scale(self):
        """c such that B^H B = c^2 I, or None when B is not unitary up to scaling."""
        return None

    def random_variables(self):
        seen, total, stack = set(), 0, [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            total += node.own_random_variables
            stack.extend(node.children)
        return total

    def _result_dtype(self, Y):
        return np.result_type(Y.dtype, self.dtype, np.float64)

    def _apply(self, Y, tally):
        raise NotImplementedError

    def _adjoint(self, X, tally):
        raise NotImplementedError

    def _matmat(self, Y, tally):
        return self._apply(Y, tally)

    def _rmatmat(self, X, tally, rows=None):
        out = self._adjoint(X, tally)
        return out if rows is None else out[rows]

    def matmat(self, Y, tally=None):
        """B Y for a width x k block Y."""
        Y = np.asarray(Y)
        vector = Y.ndim == 1
        Y = Y.reshape(-1, 1) if vector else Y
        if Y.shape[0] != self.width:
            raise InvalidArgument(f"operator of shape {self.shape} cannot act on {Y.shape[0]} rows")
        local = FlopTally()
        out = self._matmat(Y.astype(self._result_dtype(Y), copy=False), local)
        if tally is not None:
            tally.merge(local)
        return out[:, 0] if vector else out

    def matvec(self, v, tally=None):
        return self.matmat(np.asarray(v).reshape(-1), tally)

    def rmatmat(self, X, tally=None):
        """B^H X for an n x k block X."""
        X = np.asarray(X)
        vector = X.ndim == 1
        X = X.reshape(-1, 1) if vector else X
        if X.shape[0] != self.n:
            raise InvalidArgument(f"adjoint of shape {self.shape[::-1]} cannot act on {X.shape[0]} rows")
        local = FlopTally()
        out = self._rmatmat(X.astype(self._result_dtype(X), copy=False), local)
        if tally is not None:
            tally.merge(local)
        return out[:, 0] if vector else out

    def sketch(self, M, tally=None):
        """M B computed as (B^H M^H)^H through the fast adjoint."""
        M = np.asarray(M)
        if M.ndim != 2 or M.shape[1] != self.n:
            raise InvalidArgument(f"cannot sketch a {M.shape} matrix with a {self.shape} multiplier")
        return self.rmatmat(M.conj().T, tally).conj().T

    def flops_per_vector(self):
        tally = FlopTally()
        self.matmat(np.ones((self.width, 1)), tally)
        return tally


class Permutation(Multiplier):
    """P e_j = e_{perm[j]}."""

    family = "Permutation"

    def __init__(self, n, perm=None, seed=None):
        super(Permutation, self).__init__(n, seed=seed)
        self.explicit = perm is not None
        if perm is None:
            stream = RngStream(seed)
            perm = stream.permutation(self.n)
            self.own_random_variables = stream.drawn
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (self.n,) or not np.array_equal(np.sort(perm), np.arange(self.n)):
            raise InvalidArgument("permutation must be a bijection on 0..n-1")
        self.perm = perm

    def params(self):
        return {"n": self.n, "perm": self.perm.tolist() if self.explicit else None}

    def unitary_scale(self):
        return 1.0

    def _apply(self, Y, tally):
        out = np.empty_like(Y)
        out[self.perm] = Y
        return out

    def _adjoint(self, X, tally):
        return X[self.perm]

    def _rmatmat(self, X, tally, rows=None):
        return X[self.perm] if rows is None else X[self.perm[rows]]


class Diagonal(Multiplier):
    """diag(d); ``kind`` is ``sign``, ``unit`` (complex unit circle), ``choice`` or ``explicit``."""

    family = "Diagonal"

    def __init__(self, n, entries=None, kind="explicit", choices=None, signed=False, seed=None):
        self.kind = kind if entries is None else "explicit"
        self.choices = None if choices is None else [float(c) for c in choices]
        self.signed = bool(signed)
        if entries is None:
            stream = RngStream(seed)
            if kind == "sign":
                entries = stream.signs(n)
            elif kind == "unit":
                entries = stream.unit_circle(n)
            elif kind == "choice":
                if not self.choices:
                    raise InvalidArgument("choice diagonal needs a non-empty set of values")
                entries = stream.choice(self.choices, n)
                if self.signed:
                    entries = entries * stream.signs(n)
            else:
                raise InvalidArgument(f"unknown diagonal kind {kind!r}")
            own = stream.drawn
        else:
            own = 0
        entries = np.asarray(entries)
        entries = entries.astype(np.complex128 if np.iscomplexobj(entries) else np.float64)
        if entries.shape != (int(n),):
            raise InvalidArgument(f"diagonal needs {n} entries, got shape {entries.shape}")
        super(Diagonal, self).__init__(n, field=_field_of(entries), seed=seed if self.kind != "explicit" else None)
        self.own_random_variables = own
        self.entries = entries
        self._mults = _nontrivial(entries)

    def params(self):
        return {
            "n": self.n,
            "kind": self.kind,
            "entries": _encode(self.entries) if self.kind == "explicit" else None,
            "choices": self.choices,
            "signed": self.signed,
        }

    def unitary_scale(self):
        if np.allclose(np.abs(self.entries), 1.0, rtol=0.0, atol=UNIT_TOL):
            return 1.0
        return None

    def _apply(self, Y, tally):
        tally.add(multiplications=self._mults * Y.shape[1])
        return self.entries[:, None] * Y

    def _adjoint(self, X, tally):
        tally.add(multiplications=self._mults * X.shape[1])
        return self.entries.conj()[:, None] * X


class Shift(Multiplier):
    """Z_f: (v_0..v_{n-1}) -> (f v_{n-1}, v_0, ..., v_{n-2})."""

    family = "Shift"

    def __init__(self, n, f=0.0):
        f = complex(f) if np.iscomplexobj(f) else float(f)
        if f != 0 and abs(abs(f) - 1.0) > UNIT_TOL:
            raise InvalidArgument(f"shift parameter must satisfy f = 0 or |f| = 1, got {f}")
        super(Shift, self).__init__(n, field=_field_of(f))
        self.f = f
        self._mults = 0 if f in (0, 1, -1) else 1

    def params(self):
        return {"n": self.n, "f": _encode_scalar(self.f)}

    def unitary_scale(self):
        return 1.0 if self.f != 0 else None

    def _apply(self, Y, tally):
        tally.add(multiplications=self._mults * Y.shape[1])
        out = np.empty_like(Y)
        out[1:] = Y[:-1]
        out[0] = self.f * Y[-1]
        return out

    def _adjoint(self, X, tally):
        tally.add(multiplications=self._mults * X.shape[1])
        out = np.empty_like(X)
        out[:-1] = X[1:]
        out[-1] = np.conj(self.f) * X[0]
        return out


class HadamardPrimitive(Multiplier):
    """[[I_s, I_s], [I_s, -I_s]], unscaled."""

    family = "HadamardPrimitive"

    def __init__(self, order):
        if order < 2 or order % 2:
            raise InvalidArgument(f"Hadamard primitive needs an even order, got {order}")
        super(HadamardPrimitive, self).__init__(order)

    def params(self):
        return {"order": self.n}

    def unitary_scale(self):
        return np.sqrt(2.0)

    def _apply(self, Y, tally):
        tally.add(additions=self.n * Y.shape[1])
        half = self.n // 2
        return np.concatenate([Y[:half] + Y[half:], Y[:half] - Y[half:]])

    _adjoint = _apply


def _twiddles(block):
    return np.exp(2j * np.pi * np.arange(block // 2) / block)


def _butterfly(Y, block, tally, twiddle=False):
    """One recursion level: H^{(b)} on every block of size b, then the twiddles on lower halves."""
    n, k = Y.shape
    half = block // 2
    Z = Y.reshape(n // block, block, k)
    top = Z[:, :half] + Z[:, half:]
    bottom = Z[:, :half] - Z[:, half:]
    tally.add(additions=n * k)
    if twiddle:
        bottom = bottom * _twiddles(block)[None, :, None]
        tally.add(multiplications=(half - 1) * (n // block) * k)
    return np.concatenate([top, bottom], axis=1).reshape(n, k)


def _butterfly_adjoint(Y, block, tally, twiddle=False):
    n, k = Y.shape
    half = block // 2
    Z = Y.reshape(n // block, block, k)
    top, bottom = Z[:, :half], Z[:, half:]
    if twiddle:
        bottom = bottom * _twiddles(block).conj()[None, :, None]
        tally.add(multiplications=(half - 1) * (n // block) * k)
    tally.add(additions=n * k)
    return np.concatenate([top + bottom, top - bottom], axis=1).reshape(n, k)


def _interleave(Y, block):
    """Inverse odd/even split inside every block: [top; bottom] -> (top_0, bottom_0, top_1, ...)."""
    n, k = Y.shape
    return Y.reshape(n // block, 2, block // 2, k).transpose(0, 2, 1, 3).reshape(n, k)


def _deinterleave(Y, block):
    n, k = Y.shape
    return Y.reshape(n // block, block // 2, 2, k).transpose(0, 2, 1, 3).reshape(n, k)


class AbridgedHadamard(Multiplier):
    """H_{n,d}: d steps of H_{2q} = diag(H_q, H_q) H^{(2q)} bottoming out at I_{n/2^d}."""

    family = "AH"

    def __init__(self, n, d):
        _check_depth(n, d)
        super(AbridgedHadamard, self).__init__(n)
        self.d = int(d)

    def params(self):
        return {"n": self.n, "d": self.d}

    def unitary_scale(self):
        return 2.0 ** (self.d / 2.0)

    def _apply(self, Y, tally):
        for h in range(self.d):
            Y = _butterfly(Y, self.n >> h, tally)
        return Y

    # H_{n,d} is real symmetric.
    _adjoint = _apply


class AbridgedFourier(Multiplier):
    """Omega_{n,d}: d radix-2 decimation-in-frequency steps, omega_n = exp(2 pi i / n)."""

    family = "AF"

    def __init__(self, n, d):
        _check_depth(n, d)
        super(AbridgedFourier, self).__init__(n, field="complex")
        self.d = int(d)

    def params(self):
        return {"n": self.n, "d": self.d}

    def unitary_scale(self):
        return 2.0 ** (self.d / 2.0)

    def _apply(self, Y, tally):
        for h in range(self.d):
            Y = _butterfly(Y, self.n >> h, tally, twiddle=True)
        for h in reversed(range(self.d)):
            Y = _interleave(Y, self.n >> h)
        return Y

    def _adjoint(self, X, tally):
        for h in range(self.d):
            X = _deinterleave(X, self.n >> h)
        for h in reversed(range(self.d)):
            X = _butterfly_adjoint(X, self.n >> h, tally, twiddle=True)
        return X


class RandomizedAbridged(Multiplier):
    """Abridged Hadamard (kind H) or Fourier (kind F) with a fresh P_{2q} D_{2q} at every level.

    Kind F skips the even/odd interleave of :class:`AbridgedFourier`; the level
    permutation P_{2q} takes its place, so the operator is a random row reordering
    of the twiddled butterflies rather than Omega_{n,d} itself.
    """

    family = "RandomizedAbridged"

    def __init__(self, n, d, kind="H", permutations=None, scalings=None, seed=None):
        _check_depth(n, d)
        if kind not in ("H", "F"):
            raise InvalidArgument(f"randomized abridged kind must be H or F, got {kind!r}")
        self.kind = kind
        self.d = int(d)
        self.explicit = permutations is not None
        if permutations is None:
            stream = RngStream(seed)
            permutations, scalings = [], []
            for h in range(self.d):
                block = n >> h
                permutations.append(stream.permutation(block))
                scalings.append(stream.signs(block) if kind == "H" else stream.unit_circle(block))
            own = stream.drawn
        else:
            own = 0
        if len(permutations) != self.d or scalings is None or len(scalings) != self.d:
            raise InvalidArgument(f"need {d} permutations and {d} scalings")
        self.permutations = [np.asarray(p, dtype=np.int64) for p in permutations]
        self.scalings = [np.asarray(s) for s in scalings]
        field = "complex" if kind == "F" else _field_of(*self.scalings)
        super(RandomizedAbridged, self).__init__(n, field=field, seed=None if self.explicit else seed)
        self.own_random_variables = own

    def params(self):
        return {
            "n": self.n,
            "d": self.d,
            "kind": self.kind,
            "permutations": [p.tolist() for p in self.permutations] if self.explicit else None,
            "scalings": [_encode(s) for s in self.scalings] if self.explicit else None,
        }

    def unitary_scale(self):
        return 2.0 ** (self.d / 2.0)

    def _apply(self, Y, tally):
        twiddle = self.kind == "F"
        n, k = Y.shape
        for h in range(self.d):
            Y = _butterfly(Y, n >> h, tally, twiddle=twiddle)
        for h in reversed(range(self.d)):
            block = n >> h
            perm, scaling = self.permutations[h], self.scalings[h]
            Z = Y.reshape(n // block, block, k) * scaling[None, :, None]
            tally.add(multiplications=_nontrivial(scaling) * (n // block) * k)
            out = np.empty_like(Z)
            out[:, perm] = Z
            Y = out.reshape(n, k)
        return Y

    def _adjoint(self, X, tally):
        twiddle = self.kind == "F"
        n, k = X.shape
        for h in range(self.d):
            block = n >> h
            perm, scaling = self.permutations[h], self.scalings[h]
            Z = X.reshape(n // block, block, k)[:, perm] * scaling.conj()[None, :, None]
            tally.add(multiplications=_nontrivial(scaling) * (n // block) * k)
            X = Z.reshape(n, k)
        for h in reversed(range(self.d)):
            X = _butterfly_adjoint(X, n >> h, tally, twiddle=twiddle)
        return X


class SparseFCirculant(Multiplier):
    """Z_f(v) = sum_i v_i Z_f^i, stored as a sparse matrix with q entries per row and column."""

    family = "SparseFCirculant"

    def __init__(self, n, q=None, f=1.0, values="sign", v=None, seed=None):
        n = int(n)
        self.values = values
        self.explicit = v is not None
        if v is None:
            if q is None or not 1 <= q <= n:
                raise InvalidArgument(f"need 1 <= q <= n, got q={q}, n={n}")
            stream = RngStream(seed)
            positions = stream.subset(n, q)
            if values == "sign":
                entries = stream.signs(q)
            elif values == "gaussian":
                entries = stream.standard_normal(q)
            elif values == "unit":
                entries = stream.unit_circle(q)
            else:
                raise InvalidArgument(f"unknown circulant value distribution {values!r}")
            self.random_f = isinstance(f, str) and f == "random"
            if self.random_f:
                f = complex(stream.unit_circle(1)[0])
            v = np.zeros(n, dtype=entries.dtype)
            v[positions] = entries
            own = stream.drawn
        else:
            v = np.asarray(v)
            if v.shape != (n,):
                raise InvalidArgument(f"first column must have length {n}")
            self.random_f = False
            own = 0
        if abs(abs(f) - 1.0) > UNIT_TOL:
            raise InvalidArgument(f"f-circulant needs |f| = 1, got {f}")
        f = complex(f) if np.iscomplexobj(f) or isinstance(f, complex) else float(f)
        if isinstance(f, complex) and f.imag == 0.0:
            f = f.real
        self.v = v
        self.f = f
        support = np.flatnonzero(v)
        self.q = int(support.size)
        super(SparseFCirculant, self).__init__(n, field=_field_of(v, f), seed=None if self.explicit else seed)
        self.own_random_variables = own

        cols = np.tile(np.arange(n), self.q)
        shifts = np.repeat(support, n)
        rows = cols + shifts
        wrapped = rows >= n
        data = np.repeat(v[support], n).astype(np.result_type(v, f, np.float64))
        data[wrapped] = data[wrapped] * f
        self._matrix = sparse.csr_matrix((data, (rows % n, cols)), shape=(n, n))
        self._csc = self._matrix.tocsc()
        self._free = _is_sign(v[support]) and f in (1, -1)

    def params(self):
        return {
            "n": self.n,
            "q": self.q,
            "f": "random" if self.random_f else _encode_scalar(self.f),
            "values": self.values,
            "v": _encode(self.v) if self.explicit else None,
        }

    def unitary_scale(self):
        return 1.0 if self.q == 1 and abs(abs(self.v[np.flatnonzero(self.v)][0]) - 1.0) <= UNIT_TOL else None

    def _count(self, tally, outputs):
        tally.add(additions=(self.q - 1) * outputs,
                  multiplications=0 if self._free else self.q * outputs)

    def _apply(self, Y, tally):
        self._count(tally, self.n * Y.shape[1])
        return np.asarray(self._matrix @ Y)

    def _rmatmat(self, X, tally, rows=None):
        block = self._csc if rows is None else self._csc[:, rows]
        self._count(tally, block.shape[1] * X.shape[1])
        return np.asarray(block.conj().T @ X)

    def dense(self):
        return self._matrix.toarray()


class InverseBidiagonal(Multiplier):
    """(a I + diag(b) Z^k)^{-1} (lower) or (a I + (Z^k)^T diag(b))^{-1} (upper), by substitution.

    ``offdiag`` holds the n - k off-diagonal entries in row order.
    """

    family = "InverseBidiagonal"

    def __init__(self, n, offdiag=None, main=1.0, offset=1, orientation="lower", values="sign", seed=None):
        n, offset = int(n), int(offset)
        if orientation not in ("lower", "upper"):
            raise InvalidArgument(f"orientation must be lower or upper, got {orientation!r}")
        if not 1 <= offset < n:
            raise InvalidArgument(f"off-diagonal offset must lie in 1..{n - 1}, got {offset}")
        if main == 0:
            raise InvalidArgument("main diagonal must be nonzero")
        self.explicit = offdiag is not None
        self.values = values
        if offdiag is None:
            stream = RngStream(seed)
            if values == "sign":
                offdiag = stream.signs(n - offset)
            elif values == "unit":
                offdiag = stream.unit_circle(n - offset)
            else:
                raise InvalidArgument(f"unknown off-diagonal distribution {values!r}")
            own = stream.drawn
        else:
            own = 0
        offdiag = np.asarray(offdiag)
        if offdiag.ndim == 0:
            offdiag = np.full(n - offset, offdiag.item())
        if offdiag.shape != (n - offset,):
            raise InvalidArgument(f"need {n - offset} off-diagonal entries, got {offdiag.shape}")
        super(InverseBidiagonal, self).__init__(n, field=_field_of(offdiag, main),
                                                seed=None if self.explicit else seed)
        self.own_random_variables = own
        self.offdiag = offdiag
        self.main = main
        self.offset = offset
        self.orientation = orientation
        self._mults = _nontrivial(offdiag) + (0 if main in (1, -1) else n)
        self._adds = int(np.count_nonzero(offdiag))

    def params(self):
        return {
            "n": self.n,
            "offdiag": _encode(self.offdiag) if self.explicit else None,
            "main": _encode_scalar(self.main),
            "offset": self.offset,
            "orientation": self.orientation,
            "values": self.values,
        }

    def _solve(self, V, main, offdiag, lower, tally):
        n, k = self.n, self.offset
        tally.add(additions=self._adds * V.shape[1], multiplications=self._mults * V.shape[1])
        X = np.empty_like(V)
        scale = 1.0 / main
        if lower:
            X[:k] = V[:k] * scale
            for start in range(k, n, k):
                stop = min(start + k, n)
                X[start:stop] = (V[start:stop] - offdiag[start - k:stop - k, None] * X[start - k:stop - k]) * scale
        else:
            X[n - k:] = V[n - k:] * scale
            for stop in range(n - k, 0, -k):
                start = max(stop - k, 0)
                X[start:stop] = (V[start:stop] - offdiag[start:stop, None] * X[start + k:stop + k]) * scale
        return X

    def _apply(self, Y, tally):
        return self._solve(Y, self.main, self.offdiag, self.orientation == "lower", tally)

    def _adjoint(self, X, tally):
        return self._solve(X, np.conj(self.main), self.offdiag.conj(), self.orientation != "lower", tally)


class GivensRotations(Multiplier):
    """P prod_{i=1}^{n-1} G(i, i+1, theta_i) with G = [[c, s], [-s, c]] on coordinates i, i+1."""

    family = "GivensRotations"

    def __init__(self, n, angles=None, perm=None, seed=None):
        n = int(n)
        self.explicit = angles is not None
        if angles is None:
            stream = RngStream(seed)
            angles = stream.uniform(0.0, 2.0 * np.pi, n - 1)
            perm = stream.permutation(n)
            own = stream.drawn
        else:
            own = 0
            perm = np.arange(n) if perm is None else perm
        self.angles = np.asarray(angles, dtype=np.float64)
        if self.angles.shape != (n - 1,):
            raise InvalidArgument(f"need {n - 1} rotation angles")
        super(GivensRotations, self).__init__(n, seed=None if self.explicit else seed)
        self.own_random_variables = own
        self.permutation = Permutation(n, perm=perm)
        self._cos = np.cos(self.angles)
        self._sin = np.sin(self.angles)

    def params(self):
        return {
            "n": self.n,
            "angles": self.angles.tolist() if self.explicit else None,
            "perm": self.permutation.perm.tolist() if self.explicit else None,
        }

    def unitary_scale(self):
        return 1.0

    def _apply(self, Y, tally):
        Y = Y.copy()
        tally.add(additions=2 * (self.n - 1) * Y.shape[1], multiplications=4 * (self.n - 1) * Y.shape[1])
        for i in reversed(range(self.n - 1)):
            c, s = self._cos[i], self._sin[i]
            a, b = Y[i].copy(), Y[i + 1].copy()
            Y[i] = c * a + s * b
            Y[i + 1] = c * b - s * a
        return self.permutation._apply(Y, tally)

    def _adjoint(self, X, tally):
        X = self.permutation._adjoint(X, tally).copy()
        tally.add(additions=2 * (self.n - 1) * X.shape[1], multiplications=4 * (self.n - 1) * X.shape[1])
        for i in range(self.n - 1):
            c, s = self._cos[i], self._sin[i]
            a, b = X[i].copy(), X[i + 1].copy()
            X[i] = c * a - s * b
            X[i + 1] = s * a + c * b
        return X


class Dense(Multiplier):
    """Explicit n x n matrix; ``kind`` gaussian, ternary, toeplitz or explicit."""

    family = "Dense"

    def __init__(self, n, kind="explicit", matrix=None, seed=None):
        n = int(n)
        self.kind = kind if matrix is None else "explicit"
        if matrix is None:
            stream = RngStream(seed)
            if kind == "gaussian":
                matrix = stream.standard_normal((n, n))
            elif kind == "ternary":
                matrix = stream.choice([-1.0, 0.0, 1.0], (n, n))
            elif kind == "toeplitz":
                t = stream.standard_normal(2 * n - 1)
                matrix = linalg.toeplitz(t[n - 1:], t[n - 1::-1])
            else:
                raise InvalidArgument(f"unknown dense multiplier kind {kind!r}")
            own = stream.drawn
        else:
            own = 0
        matrix = np.asarray(matrix)
        if matrix.shape != (n, n):
            raise InvalidArgument(f"dense multiplier must be {n}x{n}, got {matrix.shape}")
        super(Dense, self).__init__(n, field=_field_of(matrix), seed=None if self.kind == "explicit" else seed)
        self.own_random_variables = own
        self.matrix = matrix
        self._scale = False

    def unitary_scale(self):
        if self._scale is False:
            gram = self.matrix.conj().T @ self.matrix
            c2 = float(np.real(gram[0, 0]))
            ok = c2 > 0 and np.allclose(gram, c2 * np.eye(self.n), rtol=0.0, atol=1e-10 * c2)
            self._scale = np.sqrt(c2) if ok else None
        return self._scale

    def params(self):
        return {"n": self.n, "kind": self.kind,
                "matrix": _encode(self.matrix) if self.kind == "explicit" else None}

    def _count(self, tally, outputs):
        tally.add(additions=(self.n - 1) * outputs, multiplications=self.n * outputs)

    def _apply(self, Y, tally):
        self._count(tally, self.n * Y.shape[1])
        return self.matrix @ Y

    def _rmatmat(self, X, tally, rows=None):
        block = self.matrix if rows is None else self.matrix[:, rows]
        self._count(tally, block.shape[1] * X.shape[1])
        return block.conj().T @ X


class Sum(Multiplier):
    """sum_j c_j B_j."""

    family = "Sum"

    def __init__(self, children, coeffs=None):
        children = list(children)
        if not children:
            raise InvalidArgument("a sum needs at least one term")
        shape = children[0].shape
        if any(child.shape != shape for child in children):
            raise InvalidArgument(f"sum terms must share one shape, got {[c.shape for c in children]}")
        coeffs = np.ones(len(children)) if coeffs is None else np.asarray(coeffs)
        if coeffs.shape != (len(children),):
            raise InvalidArgument("need one coefficient per term")
        super(Sum, self).__init__(shape[0], shape[1], field=_field_of(coeffs, *[c.dtype(0) for c in children]),
                                  children=children)
        self.coeffs = coeffs
        self._mults = _nontrivial(coeffs)

    def params(self):
        return {"coeffs": _encode(self.coeffs)}

    def _combine(self, parts, coeffs, tally):
        k = parts[0].shape[1]
        rows = parts[0].shape[0]
        tally.add(additions=(len(parts) - 1) * rows * k, multiplications=self._mults * rows * k)
        out = coeffs[0] * parts[0] if coeffs[0] != 1 else parts[0].copy()
        for c, part in zip(coeffs[1:], parts[1:]):
            out = out + (c * part if c != 1 else part)
        return out

    def _matmat(self, Y, tally):
        return self._combine([child._matmat(Y, tally) for child in self.children], self.coeffs, tally)

    def _rmatmat(self, X, tally, rows=None):
        parts = [child._rmatmat(X, tally, rows) for child in self.children]
        return self._combine(parts, self.coeffs.conj(), tally)


class Product(Multiplier):
    """B_1 B_2 ... B_k; B_k acts first."""

    family = "Product"

    def __init__(self, children):
        children = list(children)
        if not children:
            raise InvalidArgument("a product needs at least one factor")
        for left, right in zip(children[:-1], children[1:]):
            if left.width != right.n:
                raise InvalidArgument(f"factors of shapes {left.shape} and {right.shape} do not conform")
        field = "complex" if any(c.field == "complex" for c in children) else "real"
        super(Product, self).__init__(children[0].n, children[-1].width, field=field, children=children)

    def unitary_scale(self):
        scales = [child.unitary_scale() for child in self.children]
        if any(s is None for s in scales):
            return None
        return float(np.prod(scales))

    def _matmat(self, Y, tally):
        for child in reversed(self.children):
            Y = child._matmat(Y, tally)
        return Y

    def _rmatmat(self, X, tally, rows=None):
        for child in self.children[:-1]:
            X = child._rmatmat(X, tally)
        return self.children[-1]._rmatmat(X, tally, rows)


class Adjoint(Multiplier):
    family = "Adjoint"

    def __init__(self, child):
        super(Adjoint, self).__init__(child.width, child.n, field=child.field, children=[child])

    def unitary_scale(self):
        return self.children[0].unitary_scale()

    def _matmat(self, Y, tally):
        return self.children[0]._rmatmat(Y, tally)

    def _rmatmat(self, X, tally, rows=None):
        out = self.children[0]._matmat(X, tally)
        return out if rows is None else out[rows]


class Scaled(Multiplier):
    family = "Scaled"

    def __init__(self, child, scale):
        super(Scaled, self).__init__(child.n, child.width, field=_field_of(scale) if child.field == "real" else "complex",
                                     children=[child])
        self.scale = scale

    def params(self):
        return {"scale": _encode_scalar(self.scale)}

    def unitary_scale(self):
        inner = self.children[0].unitary_scale()
        return None if inner is None else inner * abs(self.scale)

    def _matmat(self, Y, tally):
        out = self.children[0]._matmat(Y, tally)
        tally.add(multiplications=out.size)
        return self.scale * out

    def _rmatmat(self, X, tally, rows=None):
        out = self.children[0]._rmatmat(X, tally, rows)
        tally.add(multiplications=out.size)
        return np.conj(self.scale) * out


class Restricted(Multiplier):
    """The columns ``cols`` of an operator."""

    family = "Restricted"

    def __init__(self, child, cols):
        cols = np.asarray(cols, dtype=np.int64)
        if cols.ndim != 1 or cols.size == 0:
            raise InvalidArgument("column restriction needs a non-empty index list")
        if cols.min() < 0 or cols.max() >= child.width or np.unique(cols).size != cols.size:
            raise InvalidArgument(f"restriction columns must be distinct and within 0..{child.width - 1}")
        super(Restricted, self).__init__(child.n, cols.size, field=child.field, children=[child])
        self.cols = cols

    def params(self):
        return {"cols": self.cols.tolist()}

    def unitary_scale(self):
        return self.children[0].unitary_scale()

    def _matmat(self, Y, tally):
        full = np.zeros((self.children[0].width, Y.shape[1]), dtype=Y.dtype)
        full[self.cols] = Y
        return self.children[0]._matmat(full, tally)

    def _rmatmat(self, X, tally, rows=None):
        wanted = self.cols if rows is None else self.cols[rows]
        return self.children[0]._rmatmat(X, tally, wanted)


class Block2x2Circulant(Multiplier):
    """(1/sqrt(n)) [[Z_1(u), Z_1(v)], [Z_1(v), -Z_1(u)]] D."""

    family = "Block2x2Circulant"

    def __init__(self, first, second, scaling):
        if first.shape != second.shape or scaling.n != 2 * first.n:
            raise InvalidArgument("block circulant needs two equal circulants of half the diagonal's order")
        field = "complex" if any(c.field == "complex" for c in (first, second, scaling)) else "real"
        super(Block2x2Circulant, self).__init__(scaling.n, field=field, children=[first, second, scaling])

    def _matmat(self, Y, tally):
        first, second, scaling = self.children
        half = self.n // 2
        Y = scaling._matmat(Y, tally)
        top = first._matmat(Y[:half], tally) + second._matmat(Y[half:], tally)
        bottom = second._matmat(Y[:half], tally) - first._matmat(Y[half:], tally)
        tally.add(additions=self.n * Y.shape[1], multiplications=self.n * Y.shape[1])
        return np.concatenate([top, bottom]) / np.sqrt(self.n)

    def _rmatmat(self, X, tally, rows=None):
        first, second, scaling = self.children
        half = self.n // 2
        top = first._rmatmat(X[:half], tally) + second._rmatmat(X[half:], tally)
        bottom = second._rmatmat(X[:half], tally) - first._rmatmat(X[half:], tally)
        tally.add(additions=self.n * X.shape[1], multiplications=self.n * X.shape[1])
        out = scaling._rmatmat(np.concatenate([top, bottom]) / np.sqrt(self.n), tally)
        return out if rows is None else out[rows]


# Builders ---------------------------------------------------------------


def permutation(n, rng=None, perm=None):
    """Fixed (``perm``) or random permutation matrix; applying it costs no flops."""
    if perm is not None:
        return Permutation(n, perm=perm)
    return Permutation(n, seed=node_seed(rng))


def unit_diagonal(n, rng=None, entries=None, field="real"):
    """Diagonal with unit-modulus entries: random signs (real) or unit-circle values (complex)."""
    if entries is not None:
        entries = np.asarray(entries)
        if entries.shape != (n,) or np.any(np.abs(np.abs(entries) - 1.0) > UNIT_TOL):
            raise InvalidArgument("unit diagonal entries must all have modulus 1")
        return Diagonal(n, entries=entries)
    if field not in ("real", "complex"):
        raise InvalidArgument(f"field must be real or complex, got {field!r}")
    return Diagonal(n, kind="sign" if field == "real" else "unit", seed=node_seed(rng))


def scaling_diagonal(n, choices, rng, signed=False):
    """Diagonal with i.i.d. entries drawn uniformly from ``choices``, optionally with random signs."""
    return Diagonal(n, kind="choice", choices=choices, signed=signed, seed=node_seed(rng))


def shift(n, f=0.0):
    return Shift(n, f)


def hadamard_primitive(order):
    return HadamardPrimitive(order)


def _variant(core, variant, rng, n, field, scaling=None, column_permutation=False):
    variant = variant.upper()
    factors = []
    if "P" in variant[2:] and not column_permutation:
        factors.append(permutation(n, rng))
    if "S" in variant[1:]:
        if scaling is not None:
            factors.append(scaling_diagonal(n, scaling, rng))
        else:
            factors.append(unit_diagonal(n, rng, field=field))
    factors.append(core)
    if "P" in variant[2:] and column_permutation:
        factors.append(permutation(n, rng))
    return factors[0] if len(factors) == 1 else Product(factors)


def abridged_hadamard(n, d, variant="AH", rng=None, scaling=None, column_permutation=False):
    """d-abridged Hadamard matrix and its ASH/APH/ASPH variants (P D H_{n,d}).

    :param n: Order, divisible by 2^d
    :type n: int
    :param d: Recursion depth
    :type d: int
    :param variant: One of AH, ASH, APH, ASPH, defaults to AH
    :type variant: str, optional
    :param rng: Random stream or seed for the P and D factors
    :type rng: RngStream or int, optional
    :param scaling: Value set for the diagonal instead of random signs, defaults to None
    :type scaling: [float], optional
    :param column_permutation: Apply the permutation on the right instead of the left
    :type column_permutation: bool, optional
    :return: Returns the multiplier
    :rtype: Multiplier
    """
    if variant.upper() not in ("AH", "ASH", "APH", "ASPH"):
        raise InvalidArgument(f"unknown Hadamard variant {variant!r}")
    return _variant(AbridgedHadamard(n, d), variant, rng, n, "real", scaling, column_permutation)


def abridged_fourier(n, d, variant="AF", rng=None, column_permutation=False):
    """d-abridged Fourier matrix and its ASF/APF/ASPF variants (P D Omega_{n,d})."""
    if variant.upper() not in ("AF", "ASF", "APF", "ASPF"):
        raise InvalidArgument(f"unknown Fourier variant {variant!r}")
    return _variant(AbridgedFourier(n, d), variant, rng, n, "complex", None, column_permutation)


def randomized_abridged(n, d, kind="H", rng=None, permutations=None, scalings=None):
    if permutations is not None:
        return RandomizedAbridged(n, d, kind, permutations=permutations, scalings=scalings)
    return RandomizedAbridged(n, d, kind, seed=node_seed(rng))


def sparse_f_circulant(n, q=None, f=1.0, rng=None, values="sign", v=None):
    """f-circulant Z_f(v) whose first column has q nonzeros at uniformly random positions."""
    if v is not None:
        return SparseFCirculant(n, f=f, v=v)
    if q is None or q > n or q < 1:
        raise InvalidArgument(f"need 1 <= q <= n, got q={q}, n={n}")
    return SparseFCirculant(n, q, f=f, values=values, seed=node_seed(rng))


def uniformly_sparse(n, q, rng=None, permutations=None, signs=None):
    """sum_{i=1..q} D_i P_i for q independent signed permutations."""
    if not 1 <= q <= n:
        raise InvalidArgument(f"need 1 <= q <= n, got q={q}, n={n}")
    terms = []
    for i in range(q):
        P = permutation(n, rng, None if permutations is None else permutations[i])
        D = unit_diagonal(n, rng, None if signs is None else signs[i])
        terms.append(Product([D, P]))
    return terms[0] if q == 1 else Sum(terms)


def _fourier_core(n, d, core, rng):
    if core in ("AF", "ASF", "APF", "ASPF"):
        return abridged_fourier(n, d, core, rng)
    return abridged_hadamard(n, d, core, rng)


def abridged_f_circulant(n, d, f=1.0, rng=None, u=None, core="AF"):
    """D_f^{-1} C^H diag(u) C D_f with an abridged core C of depth d (Omega_{n,d} by default)."""
    _check_depth(n, d)
    if abs(abs(f) - 1.0) > UNIT_TOL:
        raise InvalidArgument(f"abridged f-circulant needs |f| = 1, got {f}")
    C = _fourier_core(n, d, core, rng)
    U = unit_diagonal(n, rng, field="complex") if u is None else Diagonal(n, entries=u)
    factors = [Adjoint(C), U, C]
    if f != 1:
        powers = np.asarray(f, dtype=np.complex128) ** np.arange(n)
        factors = [Diagonal(n, entries=1.0 / powers)] + factors + [Diagonal(n, entries=powers)]
    return Product(factors)


def inverse_bidiagonal(n, rng=None, diag_entries=None, orientation="lower", main=1.0, offset=1):
    """(main I + D Z^k)^{-1} (lower) or its upper counterpart, applied by substitution."""
    if diag_entries is not None:
        return InverseBidiagonal(n, offdiag=diag_entries, main=main, offset=offset, orientation=orientation)
    return InverseBidiagonal(n, main=main, offset=offset, orientation=orientation, seed=node_seed(rng))


def givens_chain(n, d_fourier=None, rng=None, core="AF", angles=None, diagonals=None, permutations=None):
    """2^{-d/2} D_1 G_1 D_2 G_2 D_3 C with Givens chains G_j and an abridged Fourier core C.

    ``d_fourier`` defaults to log2(n), which makes C the DFT matrix. ``angles``,
    ``diagonals`` and ``permutations`` fix the otherwise random factors.
    """
    d = int(np.log2(n)) if d_fourier is None else int(d_fourier)
    _check_depth(n, d)
    C = _fourier_core(n, d, core, rng)
    if diagonals is None:
        diagonals = [unit_diagonal(n, rng, field="complex") for _ in range(3)]
    else:
        diagonals = [Diagonal(n, entries=entries) for entries in diagonals]
    if angles is None:
        chains = [GivensRotations(n, seed=node_seed(rng)) for _ in range(2)]
    else:
        perms = permutations if permutations is not None else [None, None]
        chains = [GivensRotations(n, angles=a, perm=p) for a, p in zip(angles, perms)]
    chain = Product([diagonals[0], chains[0], diagonals[1], chains[1], diagonals[2], C])
    return Scaled(chain, 2.0 ** (-d / 2.0))


def gaussian(n, rng):
    return Dense(n, kind="gaussian", seed=node_seed(rng))


def ternary(n, rng):
    """Dense B(+-1, 0): entries -1, 0, 1 with probability 1/3 each."""
    return Dense(n, kind="ternary", seed=node_seed(rng))


def gaussian_toeplitz(n, rng):
    return Dense(n, kind="toeplitz", seed=node_seed(rng))


def dense(matrix):
    matrix = np.asarray(matrix)
    return Dense(matrix.shape[0], matrix=matrix)


def sum_of(children, coeffs=None):
    children = list(children)
    if len(children) == 1 and (coeffs is None or coeffs[0] == 1):
        return children[0]
    return Sum(children, coeffs)


def product(*children):
    return children[0] if len(children) == 1 else Product(children)


def block2x2_circulant(n, u=None, v=None, D=None, rng=None):
    if n % 2:
        raise InvalidArgument(f"block circulant needs an even order, got {n}")
    half = n // 2
    rng = as_rng(rng)
    if u is None or v is None:
        stream = RngStream(node_seed(rng))
        u = stream.standard_normal(half) if u is None else u
        v = stream.standard_normal(half) if v is None else v
    scaling = unit_diagonal(n, rng) if D is None else Diagonal(n, entries=D)
    return Block2x2Circulant(SparseFCirculant(half, v=np.asarray(u)), SparseFCirculant(half, v=np.asarray(v)), scaling)


def restrict_columns(B, cols=None, l=None, random=False, rng=None):
    """Columns of B: the leftmost ``l`` by default, ``l`` random ones with ``random=True``."""
    if cols is None:
        if l is None or not 1 <= l <= B.width:
            raise InvalidArgument(f"need 1 <= l <= {B.width}, got {l}")
        if random:
            stream = as_rng(rng)
            if stream is None:
                raise InvalidArgument("random column selection needs a seed or RngStream")
            cols = stream.permutation(B.width)[:l]
        else:
            cols = np.arange(l)
    return Restricted(B, cols)


def normalized(B):
    """B scaled so that its full operator is unitary."""
    scale = B.unitary_scale()
    if scale is None:
        raise InvalidArgument(f"{B.family} is not unitary up to scaling")
    return B if scale == 1.0 else Scaled(B, 1.0 / scale)


def frobenius_normalized(B):
    norm = float(np.linalg.norm(B.matmat(np.eye(B.width))))
    if norm == 0.0:
        raise InvalidArgument("cannot normalize the zero operator")
    return Scaled(B, 1.0 / norm)


def densify(B, cap=DENSIFY_CAP):
    """Dense matrix of B, column by column from the standard basis."""
    if max(B.n, B.width) > cap:
        raise DensifyLimitExceeded(f"refusing to densify a {B.n}x{B.width} operator (cap {cap})")
    return B.matmat(np.eye(B.width, dtype=B.dtype))


# Descriptors -------------------------------------------------------------


def _build_permutation(params, seed, children):
    return Permutation(params["n"], perm=params.get("perm"), seed=seed)


def _build_diagonal(params, seed, children):
    return Diagonal(params["n"], entries=_decode(params.get("entries")), kind=params.get("kind", "explicit"),
                    choices=params.get("choices"), signed=params.get("signed", False), seed=seed)


def _build_randomized(params, seed, children):
    scalings = params.get("scalings")
    return RandomizedAbridged(params["n"], params["d"], params["kind"], permutations=params.get("permutations"),
                              scalings=None if scalings is None else [_decode(s) for s in scalings], seed=seed)


def _build_circulant(params, seed, children):
    return SparseFCirculant(params["n"], params.get("q"), f=_decode_scalar(params["f"]),
                            values=params.get("values", "sign"), v=_decode(params.get("v")), seed=seed)


def _build_bidiagonal(params, seed, children):
    return InverseBidiagonal(params["n"], offdiag=_decode(params.get("offdiag")), main=_decode_scalar(params["main"]),
                             offset=params["offset"], orientation=params["orientation"],
                             values=params.get("values", "sign"), seed=seed)


def _build_givens(params, seed, children):
    return GivensRotations(params["n"], angles=params.get("angles"), perm=params.get("perm"), seed=seed)


def _build_dense(params, seed, children):
    return Dense(params["n"], kind=params["kind"], matrix=_decode(params.get("matrix")), seed=seed)


BUILDERS = {
    "Permutation": _build_permutation,
    "Diagonal": _build_diagonal,
    "Shift": lambda params, seed, children: Shift(params["n"], _decode_scalar(params["f"])),
    "HadamardPrimitive": lambda params, seed, children: HadamardPrimitive(params["order"]),
    "AH": lambda params, seed, children: AbridgedHadamard(params["n"], params["d"]),
    "AF": lambda params, seed, children: AbridgedFourier(params["n"], params["d"]),
    "RandomizedAbridged": _build_randomized,
    "SparseFCirculant": _build_circulant,
    "InverseBidiagonal": _build_bidiagonal,
    "GivensRotations": _build_givens,
    "Dense": _build_dense,
    "Sum": lambda params, seed, children: Sum(children, _decode(params.get("coeffs"))),
    "Product": lambda params, seed, children: Product(children),
    "Adjoint": lambda params, seed, children: Adjoint(children[0]),
    "Scaled": lambda params, seed, children: Scaled(children[0], _decode_scalar(params["scale"])),
    "Restricted": lambda params, seed, children: Restricted(children[0], params["cols"]),
    "Block2x2Circulant": lambda params, seed, children: Block2x2Circulant(*children),
}


def create_multiplier(descriptor):
    """
    Rebuilds a multiplier from its descriptor tree (a dict or a JSON string)
    """
    if isinstance(descriptor, str):
        descriptor = json.loads(descriptor)
    family = descriptor.get("family")
    if family not in BUILDERS:
        raise InvalidArgument(f"unknown multiplier family {family!r}")
    children = [create_multiplier(child) for child in descriptor.get("children", [])]
    return BUILDERS[family](descriptor.get("params", {}), descriptor.get("seed"), children)
