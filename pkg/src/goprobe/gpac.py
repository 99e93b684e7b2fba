"""GPAC activation interchange format.

Little-endian layout::

    magic        4 bytes  b"GPAC"
    version      u16      1
    layer_count  u16
    layer table  layer_count x {name_len u8, name bytes (UTF-8), ndim u8, dims u32 x ndim}
    record_count u64
    records      record_count x {game_id u32, move_index u32,
                                 per layer: float32 values, row-major}

Anything after the last record is ignored. A JSON sidecar ``<file>.json``
repeats the layer table for people; the binary is authoritative.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

MAGIC = b"GPAC"
VERSION = 1
_CHUNK = 256


class FormatError(DataError):
    def __init__(self, offset: int, reason: str, path: str | os.PathLike | None = None):
        self.offset = offset
        self.reason = reason
        where = f"{path}: " if path else ""
        super().__init__(f"{where}GPAC format error at byte {offset}: {reason}")


class VersionError(FormatError):
    pass


@dataclass(frozen=True)
class LayerInfo:
    name: str
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))


@dataclass
class ActivationBatch:
    """Activations for many positions: ``keys`` is (N, 2) uint32 (game id, move index)."""

    layers: list[LayerInfo]
    keys: np.ndarray
    data: dict[str, np.ndarray]

    def __post_init__(self):
        self.keys = np.asarray(self.keys, dtype=np.uint32).reshape(-1, 2)
        for layer in self.layers:
            arr = self.data[layer.name]
            if arr.shape != (len(self.keys), *layer.shape):
                raise ValueError(
                    f"layer {layer.name}: expected shape {(len(self.keys), *layer.shape)}, got {arr.shape}"
                )

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    def flat(self, name: str) -> np.ndarray:
        return self.data[name].reshape(len(self), -1)

    @classmethod
    def from_positions(cls, items: Sequence, layers: Sequence[LayerInfo] | None = None) -> "ActivationBatch":
        """Build from :class:`~goprobe.network.LayerActivations` objects."""
        if not items:
            if layers is None:
                raise ValueError("an empty batch needs an explicit layer table")
            return cls(list(layers), np.zeros((0, 2)), {l.name: np.zeros((0, *l.shape), np.float32) for l in layers})
        table = [LayerInfo(name, tuple(shape)) for name, shape, _ in items[0].layers]
        for it in items:
            if [(n, tuple(s)) for n, s, _ in it.layers] != [(l.name, l.shape) for l in table]:
                raise ValueError("batch is not homogeneous: layer tables differ")
        data = {
            l.name: np.stack([np.asarray(it.layers[i][2], dtype=np.float32) for it in items])
            for i, l in enumerate(table)
        }
        keys = np.array([it.position_ref for it in items], dtype=np.uint32)
        return cls(table, keys, data)

    def select(self, rows: np.ndarray) -> "ActivationBatch":
        return ActivationBatch(self.layers, self.keys[rows], {k: v[rows] for k, v in self.data.items()})


def _header(layers: Sequence[LayerInfo], count: int) -> bytes:
    if not 1 <= len(layers) <= 0xFFFF:
        raise ValueError("layer count must be in [1, 65535]")
    parts = [MAGIC, struct.pack("<HH", VERSION, len(layers))]
    for layer in layers:
        name = layer.name.encode("utf-8")
        if not 1 <= len(name) <= 255 or not 1 <= len(layer.shape) <= 255:
            raise ValueError(f"layer {layer.name!r}: name or rank out of range")
        parts.append(struct.pack("<B", len(name)) + name + struct.pack("<B", len(layer.shape)))
        parts.append(struct.pack(f"<{len(layer.shape)}I", *layer.shape))
    parts.append(struct.pack("<Q", count))
    return b"".join(parts)


def record_dtype(layers: Sequence[LayerInfo]) -> np.dtype:
    fields = [("game_id", "<u4"), ("move_index", "<u4")]
    fields += [(f"l{i}", "<f4", layer.shape) for i, layer in enumerate(layers)]
    return np.dtype(fields)


def expected_size(layers: Sequence[LayerInfo], count: int) -> int:
    return len(_header(layers, count)) + count * (8 + 4 * sum(l.size for l in layers))


def write_activations(batch: ActivationBatch | Iterable, path: str | Path, layers: Sequence[LayerInfo] | None = None) -> None:
    if not isinstance(batch, ActivationBatch):
        batch = ActivationBatch.from_positions(list(batch), layers)
    path = Path(path)
    dtype = record_dtype(batch.layers)
    try:
        with open(path, "wb") as f:
            f.write(_header(batch.layers, len(batch)))
            for start in range(0, len(batch), _CHUNK):
                stop = min(start + _CHUNK, len(batch))
                rec = np.zeros(stop - start, dtype=dtype)
                rec["game_id"] = batch.keys[start:stop, 0]
                rec["move_index"] = batch.keys[start:stop, 1]
                for i, layer in enumerate(batch.layers):
                    rec[f"l{i}"] = batch.data[layer.name][start:stop]
                f.write(rec.tobytes())
        sidecar = {
            "format": "GPAC",
            "version": VERSION,
            "records": len(batch),
            "layers": [{"name": l.name, "shape": list(l.shape)} for l in batch.layers],
        }
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise OSError(e.errno, f"cannot write activations to {path}: {e.strerror}") from e


def read_header(buf: bytes, path=None) -> tuple[list[LayerInfo], int, int]:
    """Parse the header: (layers, record_count, offset of the first record)."""

    def need(offset: int, n: int, what: str) -> None:
        if offset + n > len(buf):
            raise FormatError(offset, f"truncated while reading {what}", path)

    need(0, 8, "magic and version")
    if buf[:4] != MAGIC:
        raise FormatError(0, f"bad magic {buf[:4]!r}", path)
    version, count = struct.unpack_from("<HH", buf, 4)
    if version != VERSION:
        raise VersionError(4, f"unsupported version {version}", path)
    if count == 0:
        raise FormatError(6, "layer count is 0 (the input layer is mandatory)", path)
    off = 8
    layers = []
    for li in range(count):
        need(off, 1, f"layer {li} name length")
        nlen = buf[off]
        if nlen == 0:
            raise FormatError(off, f"layer {li} has an empty name", path)
        need(off + 1, nlen + 1, f"layer {li} name")
        try:
            name = buf[off + 1:off + 1 + nlen].decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(off + 1, f"layer {li} name is not UTF-8", path) from None
        off += 1 + nlen
        ndim = buf[off]
        if ndim == 0:
            raise FormatError(off, f"layer {li} has rank 0", path)
        off += 1
        need(off, 4 * ndim, f"layer {li} dims")
        dims = struct.unpack_from(f"<{ndim}I", buf, off)
        if any(d == 0 for d in dims):
            raise FormatError(off, f"layer {li} has a zero dimension", path)
        off += 4 * ndim
        layers.append(LayerInfo(name, tuple(dims)))
    if len({l.name for l in layers}) != len(layers):
        raise FormatError(8, "duplicate layer names", path)
    need(off, 8, "record count")
    (records,) = struct.unpack_from("<Q", buf, off)
    return layers, records, off + 8


def read_activations(path: str | Path) -> ActivationBatch:
    path = Path(path)
    buf = path.read_bytes()
    layers, count, off = read_header(buf, path)
    dtype = record_dtype(layers)
    end = off + count * dtype.itemsize
    if end > len(buf):
        done = (len(buf) - off) // dtype.itemsize
        raise FormatError(
            off + done * dtype.itemsize,
            f"truncated: header promises {count} records, file holds {done} complete",
            path,
        )
    rec = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
    keys = np.stack([rec["game_id"], rec["move_index"]], axis=1).astype(np.uint32)
    data = {l.name: np.array(rec[f"l{i}"], dtype=np.float32) for i, l in enumerate(layers)}
    return ActivationBatch(layers, keys, data)
