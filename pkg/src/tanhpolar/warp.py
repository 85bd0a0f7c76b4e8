"""Sampling grids and bilinear resampling for the RoI Tanh-polar warp.

Raster conventions used throughout:

* A Tanh-polar image has angle along the rows and radius along the columns.
  Row ``i`` holds ``theta_i = -pi + 2*pi*(i + 0.5)/H`` and column ``j`` holds
  ``rho_j = (j + 0.5)/W``, so no sample ever sits at ``rho = 1``.
* Grid coordinates are continuous pixel coordinates of the *source* raster,
  with the centre of pixel ``(m, n)`` at ``(n + 0.5, m + 0.5)``.
* Images and score maps are ``(N, C, H, W)`` arrays.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import geometry
from .errors import ShapeError
from .geometry import BBox
from .metrics import LabelMask

__all__ = [
    "BorderPolicy",
    "SamplingGrid",
    "AugmentParams",
    "DEFAULT_SIZE",
    "polar_axes",
    "polar_raster_coords",
    "make_forward_grid",
    "make_inverse_grid",
    "bilinear_sample",
    "warp_image",
    "unwarp_scores",
    "unwarp_labels",
    "augment_bbox",
    "tta_average",
]

DEFAULT_SIZE = 512


class BorderPolicy(str, enum.Enum):
    ZERO = "zero"
    REPLICATE = "replicate"


@dataclass
class SamplingGrid:
    """Source coordinates ``(x, y)`` for every output pixel.

    ``wrap_rows`` makes the row axis of the source periodic (Tanh-polar
    sources); ``border`` resolves every other out-of-range neighbour.
    """

    x: np.ndarray
    y: np.ndarray
    border: BorderPolicy = BorderPolicy.ZERO
    wrap_rows: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.border = BorderPolicy(self.border)
        if self.x.ndim != 2 or self.x.shape != self.y.shape:
            raise ShapeError(f"grid coordinate arrays must be 2-D and equal in shape, got {self.x.shape} and {self.y.shape}")
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise ValueError("sampling grid contains non-finite coordinates")

    @property
    def height(self) -> int:
        return self.x.shape[0]

    @property
    def width(self) -> int:
        return self.x.shape[1]

    @property
    def coords(self) -> np.ndarray:
        """``(H, W, 2)`` array of ``(x, y)`` pairs."""
        return np.stack([self.x, self.y], axis=-1)


@dataclass(frozen=True)
class AugmentParams:
    max_shift_frac: float = 0.1
    scale_lo: float = 0.9
    scale_hi: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.max_shift_frac < 1:
            raise ValueError(f"max_shift_frac must be in [0, 1), got {self.max_shift_frac}")
        if not 0 < self.scale_lo <= self.scale_hi:
            raise ValueError(f"need 0 < scale_lo <= scale_hi, got {self.scale_lo}, {self.scale_hi}")


def _check_size(*dims):
    for d in dims:
        if int(d) != d or d < 2:
            raise ShapeError(f"raster dimensions must be integers >= 2, got {dims}")


def polar_axes(H: int, W: int) -> tuple[np.ndarray, np.ndarray]:
    """Angles of the ``H`` rows and radii of the ``W`` columns of a Tanh-polar raster."""
    thetas = -np.pi + 2 * np.pi * (np.arange(H) + 0.5) / H
    rhos = (np.arange(W) + 0.5) / W
    return thetas, rhos


def polar_raster_coords(theta, rho, H: int, W: int):
    """Continuous ``(x, y)`` position of ``(theta, rho)`` inside an ``H x W`` Tanh-polar raster."""
    theta = np.asarray(theta, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    y = (theta + np.pi) / (2 * np.pi) * H
    x = np.clip(rho * W, 0.0, float(W))
    return x, y


def make_forward_grid(bbox: BBox, H: int = DEFAULT_SIZE, W: int = DEFAULT_SIZE,
                      border: BorderPolicy = BorderPolicy.ZERO) -> SamplingGrid:
    """Grid that samples a Cartesian image onto an ``H x W`` Tanh-polar raster."""
    _check_size(H, W)
    thetas, rhos = polar_axes(H, W)
    tt, rr = np.meshgrid(thetas, rhos, indexing="ij")
    sx, sy = geometry.from_tanh_polar((tt, rr), bbox)
    return SamplingGrid(sx, sy, border=border)


def make_inverse_grid(bbox: BBox, outH: int, outW: int, srcH: int = DEFAULT_SIZE,
                      srcW: int = DEFAULT_SIZE) -> SamplingGrid:
    """Grid that samples an ``srcH x srcW`` Tanh-polar raster back onto an ``outH x outW`` image.

    Rows wrap around the angular seam; radii past the last column replicate it.
    """
    _check_size(outH, outW, srcH, srcW)
    py, px = np.meshgrid(np.arange(outH) + 0.5, np.arange(outW) + 0.5, indexing="ij")
    theta, rho = geometry.to_tanh_polar((px, py), bbox)
    x, y = polar_raster_coords(theta, rho, srcH, srcW)
    return SamplingGrid(x, y, border=BorderPolicy.REPLICATE, wrap_rows=True)


def _axis_taps(coord, size, border, wrap):
    """Integer neighbour indices and weights along one axis."""
    pos = coord - 0.5
    if not wrap:
        # far-away samples only need to stay out of range
        pos = np.clip(pos, -2.0, size + 1.0)
    i0 = np.floor(pos)
    frac = pos - i0
    i0 = i0.astype(np.int64)
    i1 = i0 + 1
    taps = []
    for idx, wgt in ((i0, 1.0 - frac), (i1, frac)):
        if wrap:
            idx = np.mod(idx, size)
        elif border is BorderPolicy.ZERO:
            inside = (idx >= 0) & (idx < size)
            wgt = np.where(inside, wgt, 0.0)
            idx = np.clip(idx, 0, size - 1)
        else:
            idx = np.clip(idx, 0, size - 1)
        taps.append((idx, wgt))
    return taps


def bilinear_sample(img, grid: SamplingGrid) -> np.ndarray:
    """Bilinearly sample every channel of ``img`` at the grid coordinates.

    Returns an ``(N, C, grid.height, grid.width)`` array with the input's
    float dtype (float64 for integer input).
    """
    img = np.asarray(img)
    if img.ndim != 4:
        raise ShapeError(f"expected an (N, C, H, W) array, got shape {img.shape}")
    _, _, h, w = img.shape
    out_dtype = img.dtype if np.issubdtype(img.dtype, np.floating) else np.float64
    src = img.astype(np.float64, copy=False)

    rows = _axis_taps(grid.y, h, grid.border, grid.wrap_rows)
    cols = _axis_taps(grid.x, w, grid.border, False)
    out = np.zeros(img.shape[:2] + grid.x.shape, dtype=np.float64)
    for yi, wy in rows:
        for xi, wx in cols:
            out += (wy * wx) * src[:, :, yi, xi]
    return out.astype(out_dtype, copy=False)


def warp_image(img, bbox: BBox, H: int = DEFAULT_SIZE, W: int = DEFAULT_SIZE,
               border: BorderPolicy = BorderPolicy.ZERO) -> np.ndarray:
    """Forward RoI Tanh-polar warp of an ``(N, C, h, w)`` image."""
    return bilinear_sample(img, make_forward_grid(bbox, H, W, border=border))


def unwarp_scores(scores, bbox: BBox, outH: int, outW: int) -> np.ndarray:
    """Map Tanh-polar score maps back to an ``outH x outW`` Cartesian frame."""
    scores = np.asarray(scores)
    if scores.ndim != 4:
        raise ShapeError(f"expected an (N, C, H, W) array, got shape {scores.shape}")
    grid = make_inverse_grid(bbox, outH, outW, scores.shape[2], scores.shape[3])
    return bilinear_sample(scores, grid)


def unwarp_labels(scores, bbox: BBox, outH: int, outW: int) -> LabelMask:
    """Unwarp class scores of one image and take the per-pixel argmax.

    Ties go to the lowest class index.
    """
    scores = np.asarray(scores)
    if scores.ndim != 4 or scores.shape[0] != 1:
        raise ShapeError(f"expected a (1, C, H, W) score array, got shape {scores.shape}")
    if scores.shape[1] < 2:
        raise ShapeError("need at least two class channels to take an argmax")
    cart = unwarp_scores(scores, bbox, outH, outW)[0]
    return LabelMask(np.argmax(cart, axis=0).astype(np.int64), classes=scores.shape[1])


def augment_bbox(bbox: BBox, params: AugmentParams = AugmentParams(), draw_index: int = 0) -> BBox:
    """Randomly shift and rescale a box; deterministic in ``(params.seed, draw_index)``.

    The centre moves by up to ``max_shift_frac`` of the width/height along
    each axis, then width and height are multiplied by one factor drawn from
    ``[scale_lo, scale_hi]`` about the moved centre.
    """
    rng = np.random.default_rng([params.seed & 0xFFFFFFFFFFFFFFFF, int(draw_index)])
    shift = rng.uniform(-1.0, 1.0, size=2) * params.max_shift_frac
    scale = rng.uniform(params.scale_lo, params.scale_hi)
    w = scale * bbox.w
    h = scale * bbox.h
    # written so that zero shift and unit scale reproduce the input bit for bit
    x = bbox.x + shift[0] * bbox.w + (bbox.w - w) / 2
    y = bbox.y + shift[1] * bbox.h + (bbox.h - h) / 2
    return BBox(float(x), float(y), float(w), float(h))


def tta_average(score_maps: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean of Cartesian score maps (pass probabilities, not logits).

    The mean is taken relative to the first map so that identical maps
    average to themselves exactly.
    """
    maps = [np.asarray(m) for m in score_maps]
    if not maps:
        raise ValueError("tta_average needs at least one score map")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ShapeError(f"score map shapes differ: {shape} vs {m.shape}")
    out_dtype = maps[0].dtype if np.issubdtype(maps[0].dtype, np.floating) else np.float64
    base = maps[0].astype(np.float64)
    delta = np.zeros_like(base)
    for m in maps[1:]:
        delta += m.astype(np.float64) - base
    return (base + delta / len(maps)).astype(out_dtype, copy=False)
