"""Deterministic, forward-only convolutional policy network.

Weights come from xoshiro256** seeded through splitmix64, so a spec and seed
always produce the same bytes. Every weight tensor is drawn uniformly from
``[-b, b]`` with ``b = sqrt(2 / fan_in)``; biases are zero. Tensors are drawn
in layer order, each in row-major order of its shape, from one stream.

Convolutions use zero padding, so every conv layer keeps the board shape.
Arithmetic is done in float64 and each recorded layer is rounded to float32,
which keeps results stable across BLAS builds.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError

MASK64 = (1 << 64) - 1
KINDS = ("conv3x3", "conv1x1", "residual_pair")


class InvalidSpec(DataError):
    pass


class ShapeMismatch(DataError):
    pass


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class Xoshiro256StarStar:
    """xoshiro256** 1.0. Seeded by filling the state with four splitmix64 outputs."""

    def __init__(self, seed: int = 0, state: Sequence[int] | None = None):
        if state is not None:
            self.s = [int(x) & MASK64 for x in state]
        else:
            sm = int(seed) & MASK64
            self.s = []
            for _ in range(4):
                sm, out = splitmix64(sm)
                self.s.append(out)
        if not any(self.s):
            raise ValueError("xoshiro state must not be all zero")

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        x = (s1 * 5) & MASK64
        result = ((((x << 7) | (x >> 57)) & MASK64) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self, count: int) -> np.ndarray:
        """``count`` doubles in [0, 1) using the top 53 bits of each output."""
        s0, s1, s2, s3 = self.s
        out = [0] * count
        for i in range(count):
            x = (s1 * 5) & MASK64
            out[i] = (((((x << 7) | (x >> 57)) & MASK64) * 9) & MASK64) >> 11
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
        self.s = [s0, s1, s2, s3]
        return np.array(out, dtype=np.float64) * (2.0 ** -53)


@dataclass(frozen=True)
class BlockSpec:
    kind: str = "conv3x3"
    channels: int = 32
    nonlinearity: str = "relu"
    name: str = ""


@dataclass(frozen=True)
class NetworkSpec:
    input_planes: int = 7
    blocks: tuple[BlockSpec, ...] = field(default_factory=lambda: tuple(BlockSpec() for _ in range(5)))
    board_size: int = 19
    head_channels: int = 2
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def layer_names(self) -> list[str]:
        names = ["input"]
        for i, b in enumerate(self.blocks, start=1):
            names.append(b.name or f"block{i}")
        names.append("policy_logits")
        return names

    def layer_shapes(self) -> list[tuple[int, ...]]:
        n = self.board_size
        shapes = [(self.input_planes, n, n)]
        shapes.extend((b.channels, n, n) for b in self.blocks)
        shapes.append((n * n + 1,))
        return shapes

    def validate(self) -> None:
        if self.input_planes < 1:
            raise InvalidSpec("input_planes must be >= 1")
        if not 2 <= self.board_size <= 25:
            raise InvalidSpec("board_size must be in [2, 25]")
        if self.head_channels < 1:
            raise InvalidSpec("head_channels must be >= 1")
        if not 0 <= self.seed <= MASK64:
            raise InvalidSpec("seed must be a 64-bit unsigned integer")
        channels = self.input_planes
        for i, b in enumerate(self.blocks, start=1):
            if b.kind not in KINDS:
                raise InvalidSpec(f"block {i}: unknown kind {b.kind!r}")
            if b.nonlinearity != "relu":
                raise InvalidSpec(f"block {i}: only relu is supported")
            if b.channels < 1:
                raise InvalidSpec(f"block {i}: channels must be >= 1")
            if b.kind == "residual_pair" and b.channels != channels:
                raise InvalidSpec(f"block {i}: residual_pair needs {channels} channels to match its input")
            channels = b.channels
        names = self.layer_names()
        if len(set(names)) != len(names):
            raise InvalidSpec("layer names must be unique")

    def to_json(self) -> dict:
        d = asdict(self)
        d["blocks"] = [asdict(b) for b in self.blocks]
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkSpec":
        try:
            blocks = tuple(BlockSpec(**b) for b in obj.get("blocks", []))
            rest = {k: v for k, v in obj.items() if k != "blocks"}
            spec = cls(blocks=blocks, **rest)
        except TypeError as e:
            raise InvalidSpec(f"bad network spec: {e}") from e
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "NetworkSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def uniform(cls, depth: int, channels: int, **kw) -> "NetworkSpec":
        return cls(blocks=tuple(BlockSpec("conv3x3", channels) for _ in range(depth)), **kw)


@dataclass
class NetworkWeights:
    spec: NetworkSpec
    # (weight, bias) per convolution, in forward order; residual pairs own two entries
    convs: list[tuple[np.ndarray, np.ndarray]]
    head_conv: tuple[np.ndarray, np.ndarray]
    head_dense: tuple[np.ndarray, np.ndarray]

    def tensors(self) -> Iterator[np.ndarray]:
        for w, b in self.convs + [self.head_conv, self.head_dense]:
            yield w
            yield b

    def to_bytes(self) -> bytes:
        return b"".join(t.astype("<f4").tobytes() for t in self.tensors())


def _draw(rng: Xoshiro256StarStar, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(2.0 / fan_in)
    u = rng.uniform(int(np.prod(shape)))
    w = ((2.0 * u - 1.0) * bound).astype(np.float32)
    # float32 rounding may step past the bound; pull those values back inside
    limit = np.float32(bound)
    if limit > bound:
        limit = np.nextafter(limit, np.float32(0))
    np.clip(w, -limit, limit, out=w)
    return w.reshape(shape)


def init_network(spec: NetworkSpec) -> NetworkWeights:
    spec.validate()
    rng = Xoshiro256StarStar(spec.seed)
    convs = []
    c_in = spec.input_planes
    for b in spec.blocks:
        k = 1 if b.kind == "conv1x1" else 3
        n_convs = 2 if b.kind == "residual_pair" else 1
        for j in range(n_convs):
            src = c_in if j == 0 else b.channels
            w = _draw(rng, (b.channels, src, k, k), src * k * k)
            convs.append((w, np.zeros(b.channels, dtype=np.float32)))
        c_in = b.channels
    n = spec.board_size
    hw = _draw(rng, (spec.head_channels, c_in, 1, 1), c_in)
    head_conv = (hw, np.zeros(spec.head_channels, dtype=np.float32))
    fan = spec.head_channels * n * n
    dw = _draw(rng, (n * n + 1, fan), fan)
    head_dense = (dw, np.zeros(n * n + 1, dtype=np.float32))
    return NetworkWeights(spec, convs, head_conv, head_dense)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' convolution (cross-correlation) in float64.

    x: (N, C_in, H, W); w: (C_out, C_in, k, k) with odd k.
    """
    n, c_in, h, wd = x.shape
    c_out, c_w, k, _ = w.shape
    if c_w != c_in:
        raise ShapeMismatch(f"conv expects {c_w} input channels, got {c_in}")
    x = x.astype(np.float64, copy=False)
    w2 = w.reshape(c_out, c_in * k * k).astype(np.float64)
    if k == 1:
        cols = x.reshape(n, c_in, h * wd)
    else:
        p = k // 2
        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(padded, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
        cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c_in * k * k, h * wd)
    out = np.matmul(w2, cols) + b.astype(np.float64)[:, None]
    return out.reshape(n, c_out, h, wd)


def _relu32(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0).astype(np.float32)


def forward_batch(weights: NetworkWeights, planes: np.ndarray, chunk: int = 64) -> dict[str, np.ndarray]:
    """Run the network on (N, P, n, n) planes; returns layer name -> float32 activations."""
    spec = weights.spec
    n = spec.board_size
    if planes.ndim != 4 or planes.shape[1:] != (spec.input_planes, n, n):
        raise ShapeMismatch(
            f"expected planes of shape (N, {spec.input_planes}, {n}, {n}), got {planes.shape}"
        )
    names = spec.layer_names()
    outs: dict[str, list[np.ndarray]] = {name: [] for name in names}
    for start in range(0, max(len(planes), 1), chunk):
        x = planes[start:start + chunk].astype(np.float32)
        if len(x) == 0:
            break
        outs["input"].append(x)
        ci = 0
        for bi, block in enumerate(spec.blocks, start=1):
            if block.kind == "residual_pair":
                w1, b1 = weights.convs[ci]
                w2, b2 = weights.convs[ci + 1]
                ci += 2
                mid = _relu32(conv2d(x, w1, b1))
                x = _relu32(x.astype(np.float64) + conv2d(mid, w2, b2))
            else:
                w, b = weights.convs[ci]
                ci += 1
                x = _relu32(conv2d(x, w, b))
            outs[names[bi]].append(x)
        hw, hb = weights.head_conv
        h = _relu32(conv2d(x, hw, hb)).reshape(len(x), -1)
        dw, db = weights.head_dense
        logits = (h.astype(np.float64) @ dw.astype(np.float64).T + db.astype(np.float64)).astype(np.float32)
        outs["policy_logits"].append(logits)
    shapes = spec.layer_shapes()
    return {
        name: (np.concatenate(parts) if parts else np.zeros((0, *shape), dtype=np.float32))
        for (name, parts), shape in zip(outs.items(), shapes)
    }


@dataclass
class LayerActivations:
    position_ref: tuple[int, int]
    layers: list[tuple[str, tuple[int, ...], np.ndarray]]


def forward_collect(weights: NetworkWeights, stack, position_ref: tuple[int, int] = (0, 0)) -> LayerActivations:
    """Activations of every recorded layer for one :class:`PlaneStack` (or array)."""
    planes = getattr(stack, "planes", stack)
    planes = np.asarray(planes)
    if planes.ndim != 3:
        raise ShapeMismatch(f"expected (P, n, n) planes, got shape {planes.shape}")
    acts = forward_batch(weights, planes[None])
    shapes = weights.spec.layer_shapes()
    return LayerActivations(
        position_ref,
        [(name, shape, acts[name][0]) for name, shape in zip(weights.spec.layer_names(), shapes)],
    )
