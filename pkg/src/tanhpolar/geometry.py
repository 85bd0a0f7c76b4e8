"""Coordinate maps between image space, Tanh-polar and Tanh-Cartesian space.

Every map here is a pure function.  Point arguments are ``(x, y)`` pairs whose
components may be Python floats or numpy arrays of matching shape; results
come back with the same shape (floats for scalar input).

Pixel coordinates are continuous: a bounding box edge at ``x`` and a pixel
center at ``n + 0.5`` live in the same frame.  The rasterisation conventions
(which pixel holds which angle) belong to :mod:`tanhpolar.warp`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidBBoxError, OutOfRangeError

__all__ = [
    "BBox",
    "Ellipse",
    "PolarCoord",
    "TCCoord",
    "FACE_RHO",
    "fit_ellipse",
    "radius_at",
    "normalize_angle",
    "to_tanh_polar",
    "from_tanh_polar",
    "to_tanh_cartesian",
    "from_tanh_cartesian",
    "tp_to_tc",
    "tc_to_tp",
]

#: Radial Tanh-polar coordinate of the face ellipse boundary, tanh(1).
FACE_RHO = math.tanh(1.0)

_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in source pixels: left edge, top edge, width, height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidBBoxError(f"bbox field '{name}' must be finite, got {value!r}", field=name)
        if self.w <= 0:
            raise InvalidBBoxError(f"bbox field 'w' must be positive, got {self.w!r}", field="w")
        if self.h <= 0:
            raise InvalidBBoxError(f"bbox field 'h' must be positive, got {self.h!r}", field="h")

    @classmethod
    def parse(cls, text: str) -> "BBox":
        """Parse ``"x,y,w,h"`` (commas and/or whitespace)."""
        parts = text.replace(",", " ").split()
        if len(parts) != 4:
            raise InvalidBBoxError(f"expected 4 numbers 'x,y,w,h', got {text.strip()!r}")
        values = []
        for name, part in zip("xywh", parts):
            try:
                values.append(float(part))
            except ValueError:
                raise InvalidBBoxError(f"bbox field '{name}' is not a number: {part!r}", field=name) from None
        return cls(*values)

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def scaled(self, k: float, about: tuple[float, float] | None = None) -> "BBox":
        """Scale by ``k`` about ``about`` (the image origin when omitted)."""
        if not k > 0:
            raise ValueError(f"scale factor must be positive, got {k}")
        ox, oy = about if about is not None else (0.0, 0.0)
        return BBox(ox + k * (self.x - ox), oy + k * (self.y - oy), k * self.w, k * self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def __str__(self) -> str:
        return ",".join(repr(float(v)) for v in self.as_tuple())


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse; ``a`` is the semi-axis along x, ``b`` along y."""

    cx: float
    cy: float
    a: float
    b: float


class PolarCoord(NamedTuple):
    theta: float  # radians, [-pi, pi)
    rho: float  # [0, 1)


class TCCoord(NamedTuple):
    u1: float  # (-1, 1), horizontal
    u2: float  # (-1, 1), vertical


def _scalar_or_array(v):
    v = np.asarray(v, dtype=np.float64)
    return float(v) if v.ndim == 0 else v


def fit_ellipse(bbox: BBox) -> Ellipse:
    """Ellipse centred on the box with semi-axes ``0.5 * w / sqrt(pi)`` and ``0.5 * h / sqrt(pi)``.

    Its area is ``w * h / 4``.
    """
    if not (bbox.w > 0 and bbox.h > 0):
        raise InvalidBBoxError("bbox width and height must be positive")
    cx, cy = bbox.center()
    return Ellipse(cx, cy, 0.5 * bbox.w / _SQRT_PI, 0.5 * bbox.h / _SQRT_PI)


def radius_at(e: Ellipse, theta):
    """Distance from the ellipse centre to its boundary along direction ``theta``."""
    theta = np.asarray(theta, dtype=np.float64)
    c = e.b * np.cos(theta)
    s = e.a * np.sin(theta)
    return _scalar_or_array(e.a * e.b / np.sqrt(c * c + s * s))


def normalize_angle(theta):
    """Wrap angles into the half-open interval [-pi, pi)."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    out = np.where(out >= np.pi, out - 2 * np.pi, out)
    return _scalar_or_array(out)


def _angle(dx, dy):
    theta = np.arctan2(dy, dx)
    theta = np.where(theta >= np.pi, theta - 2 * np.pi, theta)
    return np.where((dx == 0) & (dy == 0), 0.0, theta)


def _offsets(p, bbox: BBox):
    e = fit_ellipse(bbox)
    dx = np.asarray(p[0], dtype=np.float64) - e.cx
    dy = np.asarray(p[1], dtype=np.float64) - e.cy
    return e, dx, dy


def to_tanh_polar(p, bbox: BBox) -> PolarCoord:
    """Map image point(s) ``p = (x, y)`` to Tanh-polar ``(theta, rho)``.

    ``rho = tanh(|d| / r_e(theta))`` where ``d`` is the offset from the box
    centre.  The ratio equals the elliptical norm ``hypot(dx / a, dy / b)``,
    which is how it is evaluated.  The box centre maps to ``(0, 0)``.
    """
    e, dx, dy = _offsets(p, bbox)
    theta = _angle(dx, dy)
    rho = np.tanh(np.hypot(dx / e.a, dy / e.b))
    return PolarCoord(_scalar_or_array(theta), _scalar_or_array(rho))


def _check_rho(rho):
    if np.any(~(rho >= 0)) or np.any(rho >= 1):
        raise OutOfRangeError("rho must lie in [0, 1)")


def _check_unit(u, name):
    if np.any(~(np.abs(u) < 1)):
        raise OutOfRangeError(f"{name} must lie in (-1, 1)")


def from_tanh_polar(c: PolarCoord, bbox: BBox):
    """Inverse of :func:`to_tanh_polar`; returns ``(x, y)`` in image pixels."""
    theta = np.asarray(c[0], dtype=np.float64)
    rho = np.asarray(c[1], dtype=np.float64)
    _check_rho(rho)
    e = fit_ellipse(bbox)
    r = radius_at(e, theta) * np.arctanh(rho)
    return _scalar_or_array(e.cx + r * np.cos(theta)), _scalar_or_array(e.cy + r * np.sin(theta))


def to_tanh_cartesian(p, bbox: BBox) -> TCCoord:
    """Map image point(s) to Tanh-Cartesian ``(u1, u2)``.

    Each offset component is divided by the ellipse radius in the direction
    of the offset, then squashed by tanh.
    """
    e, dx, dy = _offsets(p, bbox)
    dist = np.hypot(dx, dy)
    norm = np.hypot(dx / e.a, dy / e.b)  # |d| / r_e
    safe = np.where(dist > 0, dist, 1.0)
    u1 = np.tanh(norm * dx / safe)
    u2 = np.tanh(norm * dy / safe)
    return TCCoord(_scalar_or_array(u1), _scalar_or_array(u2))


def from_tanh_cartesian(c: TCCoord, bbox: BBox):
    """Inverse of :func:`to_tanh_cartesian`."""
    return from_tanh_polar(tc_to_tp(c), bbox)


def tp_to_tc(c: PolarCoord) -> TCCoord:
    """Direct Tanh-polar to Tanh-Cartesian map.

    No box is needed: the ellipse radius scales both components alike and
    cancels out.
    """
    theta = np.asarray(c[0], dtype=np.float64)
    rho = np.asarray(c[1], dtype=np.float64)
    _check_rho(rho)
    r = np.arctanh(rho)
    return TCCoord(_scalar_or_array(np.tanh(r * np.cos(theta))), _scalar_or_array(np.tanh(r * np.sin(theta))))


def tc_to_tp(c: TCCoord) -> PolarCoord:
    """Inverse of :func:`tp_to_tc`; ``(0, 0)`` maps to ``(0, 0)``."""
    u1 = np.asarray(c[0], dtype=np.float64)
    u2 = np.asarray(c[1], dtype=np.float64)
    _check_unit(u1, "u1")
    _check_unit(u2, "u2")
    s = np.arctanh(u1)
    t = np.arctanh(u2)
    return PolarCoord(_scalar_or_array(_angle(s, t)), _scalar_or_array(np.tanh(np.hypot(s, t))))
