"""Matrix CSV interchange and the binary model file.

CSV layout: first line ``rows,cols``, then one comma-separated row per
line.  Floats are written with ``repr`` so files round-trip bit-exactly
and identical inputs produce byte-identical outputs.

Model file layout (all little-endian):

====== ======== ==========================================
offset size     field
====== ======== ==========================================
0      8        magic ``b"MTTMODEL"``
8      2        format version (uint16), currently 1
10     6 x 8    m, n, q, s, k1, k2 (uint64)
58     8        seed (uint64)
66     8        delta (float64)
74     8        pinv_tol (float64, NaN means default)
82     ...      D1 (m x k1), C1 (k1 x n), D2 (m x k2),
                C2 (k2 x q), V (q x s), G (s x s),
                each row-major float64
====== ======== ==========================================

``Z`` is not stored; it is recomputed as ``V @ G`` on load.
"""

import struct

import numpy as np

from . import matops
from .solver import MttConfig, MttModel
from .transforms import FactorPair

_MAGIC = b"MTTMODEL"
_VERSION = 1
_HEADER = struct.Struct("<8sH6QQdd")


def write_matrix_csv(path, a):
    a = matops.as_matrix(a)
    rows, cols = a.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{rows},{cols}\n")
        for row in a:
            fh.write(",".join(repr(v) for v in row.tolist()))
            fh.write("\n")


def read_matrix_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        try:
            rows, cols = (int(t) for t in header.strip().split(","))
        except ValueError:
            raise ValueError(
                f"{path}: expected 'rows,cols' header, got {header!r}"
            ) from None
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (rows, cols):
        raise ValueError(
            f"{path}: header says {rows} x {cols}, data is "
            f"{data.shape[0]} x {data.shape[1]}"
        )
    return matops.as_matrix(data, str(path))


def save_model(path, model, cfg):
    """Serialise a fitted model plus the config that produced it."""
    m, k1 = model.first.D.shape
    n = model.first.C.shape[1]
    k2 = model.second.D.shape[1]
    q, s = model.V.shape
    pinv_tol = np.nan if cfg.pinv_tol is None else float(cfg.pinv_tol)
    header = _HEADER.pack(
        _MAGIC, _VERSION, m, n, q, s, k1, k2, cfg.seed, cfg.delta, pinv_tol
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for a in (
            model.first.D,
            model.first.C,
            model.second.D,
            model.second.C,
            model.V,
            model.G,
        ):
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path):
    """Read a model file back; returns ``(model, cfg)``."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"{path}: truncated model header")
        magic, version, m, n, q, s, k1, k2, seed, delta, pinv_tol = (
            _HEADER.unpack(raw)
        )
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a model file (magic {magic!r})")
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")

        def read_block(rows, cols):
            count = rows * cols
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated model data")
            return np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy()

        d1 = read_block(m, k1)
        c1 = read_block(k1, n)
        d2 = read_block(m, k2)
        c2 = read_block(k2, q)
        v = read_block(q, s)
        g = read_block(s, s)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after model data")
    cfg = MttConfig(
        k1=k1,
        k2=k2,
        q=q,
        delta=delta,
        seed=seed,
        pinv_tol=None if np.isnan(pinv_tol) else pinv_tol,
    )
    model = MttModel(
        first=FactorPair(D=d1, C=c1, k=k1),
        second=FactorPair(D=d2, C=c2, k=k2),
        V=v,
        G=g,
        Z=v @ g,
    )
    return model, cfg
