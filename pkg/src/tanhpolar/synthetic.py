"""Deterministic synthetic images and face-parsing masks for tests and self-checks."""
from __future__ import annotations

import numpy as np

from .geometry import BBox, fit_ellipse
from .metrics import IBUGMASK_CLASSES, LabelMask

__all__ = ["smooth_image", "disk_image", "face_mask", "FACE_FIXTURE_BBOX", "INSIDE_CLASSES", "BOUNDARY_CLASSES"]


def _pixel_centres(H, W):
    return np.meshgrid(np.arange(W) + 0.5, np.arange(H) + 0.5, indexing="xy")


def smooth_image(H: int, W: int, channels: int = 1, seed: int = 0, bumps: int = 12,
                 center=None, radius=None, angle: float = 0.0) -> np.ndarray:
    """Sum of random Gaussian bumps in [0, 1], shape ``(1, channels, H, W)``.

    With ``radius`` set, a smooth window fades the image to zero beyond that
    distance from ``center``.  ``angle`` renders the same scene rotated by
    that many radians about ``center`` (analytically, without resampling).
    """
    rng = np.random.default_rng(seed)
    cx, cy = center if center is not None else (W / 2, H / 2)
    extent = radius if radius is not None else min(H, W) / 2
    x, y = _pixel_centres(H, W)
    # rotate the query points back into the unrotated scene
    c, s = np.cos(angle), np.sin(angle)
    qx = c * (x - cx) + s * (y - cy)
    qy = -s * (x - cx) + c * (y - cy)
    out = np.zeros((1, channels, H, W))
    for ch in range(channels):
        acc = np.zeros((H, W))
        for _ in range(bumps):
            mx, my = rng.uniform(-0.7, 0.7, size=2) * extent
            sigma = rng.uniform(0.15, 0.35) * extent
            amp = rng.uniform(0.3, 1.0)
            acc += amp * np.exp(-((qx - mx) ** 2 + (qy - my) ** 2) / (2 * sigma ** 2))
        acc = acc / acc.max()
        if radius is not None:
            r = np.hypot(qx, qy) / radius
            acc *= np.where(r < 1, np.cos(np.minimum(r, 1) * np.pi / 2) ** 2, 0.0)
        out[0, ch] = acc
    return np.clip(out, 0.0, 1.0)


def disk_image(H: int, W: int, bbox: BBox) -> np.ndarray:
    """Indicator ``(1, 1, H, W)`` of the pixels whose centre lies inside the fitted ellipse."""
    e = fit_ellipse(bbox)
    x, y = _pixel_centres(H, W)
    inside = np.hypot((x - e.cx) / e.a, (y - e.cy) / e.b) < 1
    return inside[None, None].astype(np.float64)


FACE_FIXTURE_BBOX = BBox(116.0, 96.0, 280.0, 320.0)
# classes fully inside the face ellipse, and hair straddling its boundary
INSIDE_CLASSES = tuple(range(1, 10))
BOUNDARY_CLASSES = (10,)


def face_mask(H: int = 512, W: int = 512, bbox: BBox = FACE_FIXTURE_BBOX) -> LabelMask:
    """Cartoon 11-class face mask laid out relative to ``bbox``'s ellipse.

    Hair is an annulus across the upper half of the ellipse boundary; skin
    and the inner parts lie strictly inside it.
    """
    e = fit_ellipse(bbox)
    x, y = _pixel_centres(H, W)
    u = (x - e.cx) / e.a
    v = (y - e.cy) / e.b
    norm = np.hypot(u, v)

    def blob(cu, cv, ru, rv):
        return np.hypot((u - cu) / ru, (v - cv) / rv) < 1

    labels = np.zeros((H, W), dtype=np.int64)
    labels[norm < 1.0] = 1
    labels[(norm >= 0.8) & (norm < 1.45) & (v < 0.1)] = 10
    labels[blob(-0.38, -0.42, 0.26, 0.08)] = 2
    labels[blob(0.38, -0.42, 0.26, 0.08)] = 3
    labels[blob(-0.36, -0.2, 0.18, 0.09)] = 4
    labels[blob(0.36, -0.2, 0.18, 0.09)] = 5
    labels[blob(0.0, 0.08, 0.12, 0.2)] = 6
    labels[blob(0.0, 0.40, 0.32, 0.07)] = 7
    labels[blob(0.0, 0.58, 0.30, 0.08)] = 8
    labels[blob(0.0, 0.49, 0.26, 0.04)] = 9
    return LabelMask(labels, classes=len(IBUGMASK_CLASSES))
