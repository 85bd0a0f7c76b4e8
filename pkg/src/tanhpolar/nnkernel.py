"""Forward-only NCHW convolution engine for Tanh-polar feature maps.

Convolutions accumulate tap by tap with element-wise numpy operations, so
every output element is computed with the same operation order regardless
of its position.  That makes cyclic-shift equivariance under ``MIXED``
padding hold bit for bit, not just approximately.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import ShapeError
from .warp import BorderPolicy, SamplingGrid, bilinear_sample, polar_axes, polar_raster_coords

__all__ = [
    "PadMode",
    "ConvParams",
    "HybridBlockParams",
    "pad",
    "conv2d",
    "bilinear_upsample",
    "tc_axes",
    "tp_to_tc_grid",
    "tc_to_tp_grid",
    "resample_tp_to_tc",
    "resample_tc_to_tp",
    "hybrid_block_forward",
    "fcn_head_forward",
    "rotate_rows",
    "conv_param_count",
    "hybrid_block_param_count",
    "bottleneck_param_count",
    "random_conv",
    "random_hybrid_block",
    "zero_hybrid_block",
    "save_tensor",
    "load_tensor",
    "TensorFormatError",
]


class PadMode(str, enum.Enum):
    MIXED = "mixed"  # wrap rows (angle), replicate columns (radius)
    ZERO = "zero"


@dataclass
class ConvParams:
    weights: np.ndarray  # (out_ch, in_ch, kh, kw)
    bias: np.ndarray  # (out_ch,)
    stride: int = 1
    pad_mode: PadMode = PadMode.MIXED

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        self.pad_mode = PadMode(self.pad_mode)
        if self.weights.ndim != 4:
            raise ShapeError(f"conv weights must be (out, in, kh, kw), got {self.weights.shape}")
        kh, kw = self.weights.shape[2:]
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel sides must be odd, got {kh}x{kw}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} output channels")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def param_count(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class HybridBlockParams:
    """Bottleneck block ``c -> c/4 -> (c/8 polar | c/8 cartesian) -> c``.

    ``relu`` switches on an element-wise ReLU after ``reduce`` and after
    ``restore`` (before the residual sum).
    """

    reduce: ConvParams
    tp_branch: ConvParams
    tc_branch: ConvParams
    restore: ConvParams
    relu: bool = False

    def __post_init__(self):
        c = self.reduce.in_channels
        mid = self.reduce.out_channels
        if mid % 2:
            raise ShapeError("reduce output channels must split evenly into two branches")
        half = mid // 2
        for name, p in (("tp_branch", self.tp_branch), ("tc_branch", self.tc_branch)):
            if p.in_channels != half or p.out_channels != half:
                raise ShapeError(f"{name} must map {half} -> {half} channels, got {p.in_channels} -> {p.out_channels}")
        if self.restore.in_channels != mid or self.restore.out_channels != c:
            raise ShapeError(f"restore must map {mid} -> {c} channels")
        for p in (self.reduce, self.tp_branch, self.tc_branch, self.restore):
            if p.stride != 1:
                raise ShapeError("hybrid block convolutions must have stride 1")

    @property
    def channels(self) -> int:
        return self.reduce.in_channels

    @property
    def param_count(self) -> int:
        return sum(p.param_count for p in (self.reduce, self.tp_branch, self.tc_branch, self.restore))


def _as_tensor(t) -> np.ndarray:
    t = np.asarray(t)
    if t.ndim != 4:
        raise ShapeError(f"expected an (N, C, H, W) tensor, got shape {t.shape}")
    if not np.issubdtype(t.dtype, np.floating):
        t = t.astype(np.float32)
    return t


def pad(t, margin, mode: PadMode = PadMode.MIXED) -> np.ndarray:
    """Pad the two spatial axes by ``margin`` (an int or a ``(rows, cols)`` pair)."""
    t = _as_tensor(t)
    my, mx = (margin, margin) if np.isscalar(margin) else margin
    if my < 0 or mx < 0:
        raise ValueError("padding margin must be non-negative")
    if my == 0 and mx == 0:
        return t.copy()
    mode = PadMode(mode)
    if mode is PadMode.ZERO:
        return np.pad(t, ((0, 0), (0, 0), (my, my), (mx, mx)))
    h, w = t.shape[2:]
    rows = np.mod(np.arange(-my, h + my), h)
    cols = np.clip(np.arange(-mx, w + mx), 0, w - 1)
    return t[:, :, rows[:, None], cols[None, :]]


def conv2d(t, p: ConvParams) -> np.ndarray:
    """Cross-correlation with 'same' padding ``(k - 1) / 2`` on each side."""
    t = _as_tensor(t)
    n, c, h, w = t.shape
    if c != p.in_channels:
        raise ShapeError(f"input has {c} channels, conv expects {p.in_channels}")
    kh, kw = p.weights.shape[2:]
    xp = pad(t, ((kh - 1) // 2, (kw - 1) // 2), p.pad_mode)
    s = p.stride
    oh = (h - 1) // s + 1
    ow = (w - 1) // s + 1
    out = np.empty((n, p.out_channels, oh, ow), dtype=np.result_type(t.dtype, np.float32))
    out[...] = p.bias[None, :, None, None]
    # fixed accumulation order: input channel, then kernel row, then kernel column
    for ci in range(c):
        for dy in range(kh):
            for dx in range(kw):
                window = xp[:, ci, dy:dy + s * (oh - 1) + 1:s, dx:dx + s * (ow - 1) + 1:s]
                out += p.weights[None, :, ci, dy, dx, None, None] * window[:, None]
    return out


def _upsample_taps(n_out, n_in, factor):
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    src = np.maximum(src, 0.0)
    i0 = np.floor(src).astype(np.int64)
    frac = src - i0
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac


def bilinear_upsample(t, factor: int) -> np.ndarray:
    """Integer-factor bilinear upsampling with half-pixel (align_corners=False) alignment."""
    t = _as_tensor(t)
    if int(factor) != factor or factor < 1:
        raise ValueError("upsample factor must be an integer >= 1")
    factor = int(factor)
    if factor == 1:
        return t.copy()
    n, c, h, w = t.shape
    y0, y1, fy = _upsample_taps(h * factor, h, factor)
    x0, x1, fx = _upsample_taps(w * factor, w, factor)
    fy = fy.astype(t.dtype)[:, None]
    fx = fx.astype(t.dtype)
    rows = t[:, :, y0, :] * (1 - fy) + t[:, :, y1, :] * fy
    return rows[:, :, :, x0] * (1 - fx) + rows[:, :, :, x1] * fx


def tc_axes(H: int, W: int) -> tuple[np.ndarray, np.ndarray]:
    """``u2`` values of the rows and ``u1`` values of the columns of a Tanh-Cartesian raster."""
    u2 = -1 + 2 * (np.arange(H) + 0.5) / H
    u1 = -1 + 2 * (np.arange(W) + 0.5) / W
    return u2, u1


def tp_to_tc_grid(H: int, W: int) -> SamplingGrid:
    """For each Tanh-Cartesian pixel, where to read in an ``H x W`` Tanh-polar raster."""
    u2, u1 = tc_axes(H, W)
    uu2, uu1 = np.meshgrid(u2, u1, indexing="ij")
    theta, rho = geometry.tc_to_tp((uu1, uu2))
    x, y = polar_raster_coords(theta, rho, H, W)
    return SamplingGrid(x, y, border=BorderPolicy.REPLICATE, wrap_rows=True)


def tc_to_tp_grid(H: int, W: int) -> SamplingGrid:
    """For each Tanh-polar pixel, where to read in an ``H x W`` Tanh-Cartesian raster."""
    thetas, rhos = polar_axes(H, W)
    tt, rr = np.meshgrid(thetas, rhos, indexing="ij")
    u1, u2 = geometry.tp_to_tc((tt, rr))
    x = (u1 + 1) / 2 * W
    y = (u2 + 1) / 2 * H
    return SamplingGrid(x, y, border=BorderPolicy.REPLICATE)


def resample_tp_to_tc(feat) -> np.ndarray:
    """Resample a Tanh-polar feature map onto a same-sized Tanh-Cartesian raster in one step."""
    feat = _as_tensor(feat)
    return bilinear_sample(feat, tp_to_tc_grid(*feat.shape[2:]))


def resample_tc_to_tp(feat) -> np.ndarray:
    feat = _as_tensor(feat)
    return bilinear_sample(feat, tc_to_tp_grid(*feat.shape[2:]))


def _relu(t):
    return np.maximum(t, 0)


def hybrid_block_forward(x, p: HybridBlockParams) -> np.ndarray:
    """Residual block mixing a polar 3x3 branch and a Tanh-Cartesian 3x3 branch."""
    x = _as_tensor(x)
    if x.shape[1] != p.channels:
        raise ShapeError(f"input has {x.shape[1]} channels, block expects {p.channels}")
    z = conv2d(x, p.reduce)
    if p.relu:
        z = _relu(z)
    half = z.shape[1] // 2
    polar = conv2d(z[:, :half], p.tp_branch)
    cart = resample_tc_to_tp(conv2d(resample_tp_to_tc(z[:, half:]), p.tc_branch))
    r = conv2d(np.concatenate([polar, cart.astype(polar.dtype)], axis=1), p.restore)
    if p.relu:
        r = _relu(r)
    return x + r


def fcn_head_forward(feat, conv1: ConvParams, conv2: ConvParams, upsample_factor: int = 1) -> np.ndarray:
    """Two 3x3 convolutions then bilinear upsampling to per-pixel class logits."""
    return bilinear_upsample(conv2d(conv2d(feat, conv1), conv2), upsample_factor)


def rotate_rows(t, k: int) -> np.ndarray:
    """Cyclically shift rows (the angular axis) down by ``k``."""
    return np.roll(t, k, axis=2)


def conv_param_count(c_in: int, c_out: int, k: int, bias: bool = True) -> int:
    return c_out * c_in * k * k + (c_out if bias else 0)


def hybrid_block_param_count(c: int, bias: bool = True) -> int:
    """Parameters of one hybrid block on ``c`` channels (reduction ratio 4)."""
    mid = c // 4
    half = mid // 2
    return (conv_param_count(c, mid, 1, bias)
            + 2 * conv_param_count(half, half, 3, bias)
            + conv_param_count(mid, c, 1, bias))


def bottleneck_param_count(c: int, bias: bool = True) -> int:
    """Parameters of a standard 1x1 / 3x3 / 1x1 bottleneck with the same ratio."""
    mid = c // 4
    return conv_param_count(c, mid, 1, bias) + conv_param_count(mid, mid, 3, bias) + conv_param_count(mid, c, 1, bias)


def random_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int,
                pad_mode: PadMode = PadMode.MIXED, scale: float = 0.5) -> ConvParams:
    w = (rng.standard_normal((c_out, c_in, k, k)) * scale / np.sqrt(c_in * k * k)).astype(np.float32)
    b = (rng.standard_normal(c_out) * 0.1).astype(np.float32)
    return ConvParams(w, b, pad_mode=pad_mode)


def random_hybrid_block(rng: np.random.Generator, c: int) -> HybridBlockParams:
    if c % 8:
        raise ShapeError("hybrid block channels must be divisible by 8")
    mid, half = c // 4, c // 8
    return HybridBlockParams(
        reduce=random_conv(rng, c, mid, 1),
        tp_branch=random_conv(rng, half, half, 3, PadMode.MIXED),
        tc_branch=random_conv(rng, half, half, 3, PadMode.ZERO),
        restore=random_conv(rng, mid, c, 1),
    )


def zero_hybrid_block(c: int) -> HybridBlockParams:
    if c % 8:
        raise ShapeError("hybrid block channels must be divisible by 8")
    mid, half = c // 4, c // 8

    def zeros(ci, co, k, mode=PadMode.MIXED):
        return ConvParams(np.zeros((co, ci, k, k), np.float32), np.zeros(co, np.float32), pad_mode=mode)

    return HybridBlockParams(zeros(c, mid, 1), zeros(half, half, 3), zeros(half, half, 3, PadMode.ZERO), zeros(mid, c, 1))


# --- raw tensor files -------------------------------------------------------
#
# Layout (all little-endian):
#   bytes 0-3   magic b"TPTN"
#   uint32      dtype code (1 = float32, 2 = float64)
#   uint32      rank
#   uint32 x rank  dims
#   body        row-major values, prod(dims) * itemsize bytes

TENSOR_MAGIC = b"TPTN"
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


class TensorFormatError(ValueError):
    """A raw tensor file is malformed; ``shape_mismatch`` flags a header/body size disagreement."""

    def __init__(self, message, shape_mismatch=False):
        super().__init__(message)
        self.shape_mismatch = shape_mismatch


def save_tensor(path, t) -> None:
    t = np.asarray(t)
    code = 2 if t.dtype == np.float64 else 1
    dtype = _DTYPE_CODES[code]
    header = TENSOR_MAGIC + struct.pack(f"<II{t.ndim}I", code, t.ndim, *t.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(t, dtype=dtype).tobytes())


def load_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != TENSOR_MAGIC:
        raise TensorFormatError(f"{path}: not a raw tensor file")
    code, rank = struct.unpack_from("<II", data, 4)
    if code not in _DTYPE_CODES:
        raise TensorFormatError(f"{path}: unknown dtype code {code}")
    offset = 12 + 4 * rank
    if len(data) < offset:
        raise TensorFormatError(f"{path}: truncated header", shape_mismatch=True)
    dims = struct.unpack_from(f"<{rank}I", data, 12)
    dtype = _DTYPE_CODES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(data) - offset != expected:
        raise TensorFormatError(
            f"{path}: header dims {dims} need {expected} bytes, body has {len(data) - offset}", shape_mismatch=True)
    return np.frombuffer(data, dtype=dtype, offset=offset).reshape(dims).astype(dtype.newbyteorder("="))
