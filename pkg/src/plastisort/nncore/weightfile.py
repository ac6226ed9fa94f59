"""Versioned little-endian binary weight file (``.psnn``).

Layout::

    b"PSNN"                      magic
    u32 version                  currently 1
    u32 layer_count
    repeated layer_count times:
        u32 layer_index
        u32 tensor_count         2: weight then bias
        repeated tensor_count times:
            u32 rank
            u32 extent * rank
            f32 payload          row-major, prod(extents) values
    b"STAT"                      input statistics trailer
    u32 channel_count            0 when no statistics are stored
    f64 mean * channel_count
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .network import NetworkSpec, WeightStore

MAGIC = b"PSNN"
STATS_MAGIC = b"STAT"
VERSION = 1


class WeightFileError(ValueError):
    pass


def dumps(store: WeightStore) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(store.params))]
    for idx, tensors in store.items():
        out.append(struct.pack("<II", idx, len(tensors)))
        for t in tensors:
            out.append(struct.pack("<I", t.ndim))
            out.append(struct.pack(f"<{t.ndim}I", *t.shape))
            out.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    means = () if store.stats is None else tuple(store.stats.means)
    out.append(STATS_MAGIC + struct.pack("<I", len(means)))
    out.append(struct.pack(f"<{len(means)}d", *means))
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes, source):
        self.buf = buf
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise WeightFileError(
                f"{self.source}: truncated at byte {self.pos} while reading {what} "
                f"({n} bytes needed, {len(self.buf) - self.pos} left)"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u32s(self, what: str, count: int) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count, what))


def loads(buf: bytes, spec: NetworkSpec | None = None, source="<bytes>") -> WeightStore:
    from ..preprocess import InputStats

    r = _Reader(buf, source)
    if r.take(4, "magic") != MAGIC:
        raise WeightFileError(f"{source}: bad magic, not a PSNN weight file")
    version = r.u32("version")
    if version != VERSION:
        raise WeightFileError(f"{source}: unsupported format version {version}")
    params = {}
    for _ in range(r.u32("layer count")):
        idx = r.u32("layer index")
        tensors = []
        for t in range(r.u32(f"tensor count of layer {idx}")):
            rank = r.u32(f"rank of layer {idx} tensor {t}")
            shape = r.u32s(f"shape of layer {idx}", rank)
            count = int(np.prod(shape, dtype=np.int64))
            payload = r.take(4 * count, f"payload of layer {idx} tensor {t}")
            tensors.append(np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape))
        if len(tensors) != 2:
            raise WeightFileError(f"{source}: layer {idx} has {len(tensors)} tensors, expected 2")
        params[idx] = (tensors[0], tensors[1])
    if r.take(4, "stats magic") != STATS_MAGIC:
        raise WeightFileError(f"{source}: missing input statistics block")
    n = r.u32("stats channel count")
    means = struct.unpack(f"<{n}d", r.take(8 * n, "stats means"))
    if r.pos != len(buf):
        raise WeightFileError(f"{source}: {len(buf) - r.pos} trailing bytes")
    store = WeightStore(params, InputStats(tuple(means)) if n else None)
    if spec is not None:
        store.check_against(spec)
    return store


def save_weights(store: WeightStore, path) -> None:
    Path(path).write_bytes(dumps(store))


def load_weights(path, spec: NetworkSpec | None = None) -> WeightStore:
    """Read a ``.psnn`` file; when ``spec`` is given, shapes are validated against it."""
    return loads(Path(path).read_bytes(), spec, source=path)
