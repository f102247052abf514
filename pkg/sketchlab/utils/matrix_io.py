from __future__ import division

import json
import os
import struct

import numpy as np

from sketchlab.utils.linalg import as_matrix
from sketchlab.utils.utils import InvalidInput


MAGIC = b"SKLB"
HEADER = struct.Struct("<4sIIB")
FIELD_REAL = 0
FIELD_COMPLEX = 1


def write_matrix(path, M, sidecar=None):
    """Write ``M`` in the SKLB binary format, optionally with a JSON sidecar.

    Layout: magic, u32 rows, u32 cols, u8 field (0 real, 1 complex), then
    little-endian f64 entries in row-major order, re/im interleaved if complex.
    """
    M = as_matrix(M)
    field = FIELD_REAL if not np.iscomplexobj(M) else FIELD_COMPLEX
    rows, cols = M.shape
    with open(path, "wb") as fp:
        fp.write(HEADER.pack(MAGIC, rows, cols, field))
        if field == FIELD_COMPLEX:
            fp.write(np.ascontiguousarray(M).view(np.float64).astype("<f8").tobytes())
        else:
            fp.write(np.ascontiguousarray(M).astype("<f8").tobytes())
    if sidecar is not None:
        with open(sidecar_path(path), "w") as fp:
            json.dump(sidecar, fp, indent=2, sort_keys=True)


def read_matrix(path):
    """Read a matrix from an SKLB file, or from a TSV file when the magic is absent."""
    with open(path, "rb") as fp:
        head = fp.read(HEADER.size)
        if not head.startswith(MAGIC):
            return read_tsv(path)
        if len(head) < HEADER.size:
            raise InvalidInput(f"{path}: truncated header")
        _, rows, cols, field = HEADER.unpack(head)
        payload = fp.read()

    if field not in (FIELD_REAL, FIELD_COMPLEX):
        raise InvalidInput(f"{path}: unknown field tag {field}")
    width = 2 if field == FIELD_COMPLEX else 1
    expected = rows * cols * width * 8
    if len(payload) != expected:
        raise InvalidInput(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if field == FIELD_COMPLEX:
        data = data.view(np.complex128)
    return as_matrix(data.reshape(rows, cols))


def read_tsv(path):
    """Plain-text reader for small real inputs, one row per line."""
    M = np.loadtxt(path, delimiter="\t", ndmin=2, comments="#")
    return as_matrix(M)


def sidecar_path(path):
    return os.path.splitext(path)[0] + ".json"


def read_sidecar(path):
    with open(sidecar_path(path), "r") as fp:
        return json.load(fp)
