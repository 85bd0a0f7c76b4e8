"""File formats: PNG images and masks, raw tensors, sampling-grid dumps.

Grid dump layout (little-endian)::

    bytes 0-3    magic: b"TPG4" (float32 body) or b"TPG8" (float64 body)
    uint32       direction code (0 forward, 1 inverse, 2 tp2tc, 3 tc2tp)
    uint32       H
    uint32       W
    body         H*W interleaved (x, y) pairs, row-major

A float32 dump is therefore ``16 + 8*H*W`` bytes long.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeError
from .metrics import LabelMask
from .nnkernel import TENSOR_MAGIC, TensorFormatError, load_tensor, save_tensor
from .warp import SamplingGrid

__all__ = [
    "read_image",
    "write_image",
    "read_mask",
    "write_mask",
    "colorize",
    "DEFAULT_PALETTE",
    "is_raw_tensor",
    "save_tensor",
    "load_tensor",
    "TensorFormatError",
    "GRID_DIRECTIONS",
    "save_grid",
    "load_grid",
]

DEFAULT_PALETTE = (
    (0, 0, 0),
    (255, 204, 153),
    (102, 51, 0),
    (153, 76, 0),
    (0, 102, 204),
    (0, 153, 255),
    (255, 153, 51),
    (204, 0, 51),
    (255, 51, 102),
    (102, 0, 51),
    (51, 51, 51),
)

GRID_DIRECTIONS = ("forward", "inverse", "tp2tc", "tc2tp")
_GRID_MAGIC = {np.dtype("<f4"): b"TPG4", np.dtype("<f8"): b"TPG8"}


def is_raw_tensor(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == TENSOR_MAGIC


def read_image(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG as a ``(1, C, H, W)`` float array in [0, 1]."""
    with Image.open(path) as im:
        if im.mode == "LA":
            im = im.convert("L")
        elif im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        arr = arr[..., None]
    return np.moveaxis(arr, -1, 0)[None]


def write_image(path, img) -> None:
    """Save a ``(1, C, H, W)`` array with values in [0, 1] as an 8-bit PNG (C = 1 or 3)."""
    img = np.asarray(img)
    if img.ndim != 4 or img.shape[0] != 1 or img.shape[1] not in (1, 3):
        raise ShapeError(f"can only write (1, 1|3, H, W) images as PNG, got {img.shape}")
    arr = np.rint(np.clip(img[0], 0.0, 1.0) * 255).astype(np.uint8)
    arr = arr[0] if arr.shape[0] == 1 else np.moveaxis(arr, 0, -1)
    Image.fromarray(arr).save(path, format="PNG")


def read_mask(path, classes: int) -> LabelMask:
    """Single-channel PNG whose pixel values are class indices."""
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "I", "I;16"):
            raise ShapeError(f"{path}: mask must be a single-channel PNG, got mode {im.mode}")
        labels = np.asarray(im).astype(np.int64)
    return LabelMask(labels, classes)


def write_mask(path, mask: LabelMask) -> None:
    if mask.classes > 256:
        raise ShapeError("8-bit mask PNGs hold at most 256 classes")
    Image.fromarray(mask.labels.astype(np.uint8), mode="L").save(path, format="PNG")


def colorize(mask: LabelMask, palette=DEFAULT_PALETTE) -> np.ndarray:
    """RGB overlay ``(H, W, 3)`` uint8; classes beyond the palette cycle through it."""
    table = np.asarray(palette, dtype=np.uint8)
    return table[mask.labels % len(table)]


def save_grid(path, grid: SamplingGrid, direction: str, dtype="<f4") -> None:
    dtype = np.dtype(dtype)
    if dtype not in _GRID_MAGIC:
        raise ValueError("grid dumps are float32 or float64")
    code = GRID_DIRECTIONS.index(direction)
    header = _GRID_MAGIC[dtype] + struct.pack("<III", code, grid.height, grid.width)
    body = np.ascontiguousarray(grid.coords, dtype=dtype).tobytes()
    Path(path).write_bytes(header + body)


def load_grid(path) -> tuple[str, np.ndarray]:
    """Return ``(direction, coords)`` with coords shaped ``(H, W, 2)``."""
    data = Path(path).read_bytes()
    magic = data[:4]
    dtype = next((d for d, m in _GRID_MAGIC.items() if m == magic), None)
    if dtype is None:
        raise TensorFormatError(f"{path}: not a grid dump")
    code, h, w = struct.unpack_from("<III", data, 4)
    if code >= len(GRID_DIRECTIONS):
        raise TensorFormatError(f"{path}: unknown direction code {code}")
    if len(data) != 16 + 2 * h * w * dtype.itemsize:
        raise TensorFormatError(f"{path}: header says {h}x{w} but body length disagrees", shape_mismatch=True)
    coords = np.frombuffer(data, dtype=dtype, offset=16).reshape(h, w, 2)
    return GRID_DIRECTIONS[code], coords.astype(np.float64)
