"""Binary file formats for dense tensors (FCPT) and Kruskal tensors (FCPK).

Both formats are little-endian with column-major payloads::

    FCPT  magic "FCPT", u8 version=1, u8 N, N x u64 sizes, prod(sizes) x f64
    FCPK  magic "FCPK", u8 version=1, u8 N, u32 R, N x u64 sizes,
          R x f64 weights, then each factor (I_n x R) column-major
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FcpdError
from .tensor import DenseTensor, KruskalTensor

__all__ = [
    "FormatError",
    "write_tensor",
    "read_tensor",
    "write_kruskal",
    "read_kruskal",
    "dump_tensor",
    "load_tensor",
    "dump_kruskal",
    "load_kruskal",
]

VERSION = 1
_F64 = np.dtype("<f8")


class FormatError(FcpdError, OSError):
    """Malformed or truncated FCPT/FCPK data."""


def dump_tensor(t) -> bytes:
    if not isinstance(t, DenseTensor):
        t = DenseTensor(t)
    head = b"FCPT" + struct.pack("<BB", VERSION, t.order)
    head += struct.pack(f"<{t.order}Q", *t.shape)
    return head + t.vec().astype(_F64).tobytes()


def dump_kruskal(k: KruskalTensor) -> bytes:
    head = b"FCPK" + struct.pack("<BBI", VERSION, k.order, k.rank)
    head += struct.pack(f"<{k.order}Q", *k.shape)
    body = [k.weights.astype(_F64).tobytes()]
    body += [f.ravel(order="F").astype(_F64).tobytes() for f in k.factors]
    return head + b"".join(body)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("unexpected end of data")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype=_F64).astype(float)

    def finish(self):
        if self.pos != len(self.buf):
            raise FormatError(f"{len(self.buf) - self.pos} trailing bytes")


def _header(r: _Reader, magic: bytes) -> None:
    got = r.take(4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")


def load_tensor(buf: bytes) -> DenseTensor:
    r = _Reader(buf)
    _header(r, b"FCPT")
    version, order = r.unpack("<BB")
    if version != VERSION:
        raise FormatError(f"unsupported FCPT version {version}")
    if order < 1:
        raise FormatError("tensor order must be at least 1")
    shape = r.unpack(f"<{order}Q")
    values = r.floats(int(np.prod(shape)))
    r.finish()
    return DenseTensor.from_vec(values, shape)


def load_kruskal(buf: bytes) -> KruskalTensor:
    r = _Reader(buf)
    _header(r, b"FCPK")
    version, order, rank = r.unpack("<BBI")
    if version != VERSION:
        raise FormatError(f"unsupported FCPK version {version}")
    if order < 1 or rank < 1:
        raise FormatError("order and rank must be at least 1")
    shape = r.unpack(f"<{order}Q")
    weights = r.floats(rank)
    factors = [r.floats(i * rank).reshape((i, rank), order="F") for i in shape]
    r.finish()
    return KruskalTensor(weights, factors)


def _write(path, data: bytes) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def write_tensor(path, t: DenseTensor) -> None:
    _write(path, dump_tensor(t))


def read_tensor(path) -> DenseTensor:
    return load_tensor(_read(path))


def write_kruskal(path, k: KruskalTensor) -> None:
    _write(path, dump_kruskal(k))


def read_kruskal(path) -> KruskalTensor:
    return load_kruskal(_read(path))
