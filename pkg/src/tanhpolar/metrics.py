"""Segmentation losses and evaluation metrics.

Losses take soft class probabilities shaped ``(N, C, H, W)``; evaluation works
on hard label masks at the original image resolution.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ShapeError

__all__ = [
    "LabelMask",
    "LossWeights",
    "Scores",
    "DICE_SMOOTH",
    "IBUGMASK_CLASSES",
    "IBUGMASK_GROUPS",
    "cross_entropy",
    "dice_loss",
    "combined_loss",
    "confusion",
    "iou_f1",
    "merge_confusion",
    "relabel",
    "merge_regions",
    "group_scores",
    "format_report",
    "parse_report",
]

DICE_SMOOTH = 1.0
_PROB_FLOOR = 1e-12

IBUGMASK_CLASSES = (
    "background",
    "skin",
    "left_brow",
    "right_brow",
    "left_eye",
    "right_eye",
    "nose",
    "upper_lip",
    "lower_lip",
    "inner_mouth",
    "hair",
)

# Brows, eyes, lips and inner mouth form "inner parts".
IBUGMASK_GROUPS = {
    "inner_parts": (2, 3, 4, 5, 7, 8, 9),
    "skin": (1,),
    "hair": (10,),
}


@dataclass
class LabelMask:
    """2-D array of class indices in ``[0, classes)``."""

    labels: np.ndarray
    classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ShapeError(f"label mask must be 2-D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ShapeError(f"label mask must hold integers, got {labels.dtype}")
        if self.classes < 1:
            raise ValueError("a label mask needs at least one class")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise ValueError(f"labels must lie in [0, {self.classes}), got range [{labels.min()}, {labels.max()}]")
        self.labels = labels

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def one_hot(self, dtype=np.float64) -> np.ndarray:
        """``(1, C, H, W)`` one-hot encoding."""
        eye = np.eye(self.classes, dtype=dtype)
        return np.moveaxis(eye[self.labels], -1, 0)[None]


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.5

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")


def _labels_for(probs: np.ndarray, gt) -> np.ndarray:
    """Return gt labels as an ``(N, H, W)`` int array matching ``probs``."""
    if probs.ndim != 4:
        raise ShapeError(f"probabilities must be (N, C, H, W), got {probs.shape}")
    labels = gt.labels if isinstance(gt, LabelMask) else np.asarray(gt)
    if isinstance(gt, LabelMask) and gt.classes != probs.shape[1]:
        raise ShapeError(f"mask declares {gt.classes} classes but probabilities have {probs.shape[1]} channels")
    if labels.ndim == 2:
        labels = labels[None]
    n, c, h, w = probs.shape
    if labels.shape != (n, h, w):
        raise ShapeError(f"labels of shape {labels.shape} do not match probabilities {probs.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("labels out of range for the number of channels")
    return labels.astype(np.int64, copy=False)


def _check_probs(probs: np.ndarray):
    sums = probs.sum(axis=1)
    if not np.allclose(sums, 1.0, rtol=0, atol=1e-5):
        raise ValueError("class probabilities must sum to 1 at every pixel")
    if probs.min() < 0:
        raise ValueError("probabilities must be non-negative")


def cross_entropy(probs, gt) -> float:
    """Mean negative natural log of the true-class probability.

    Zero probabilities are clamped to 1e-12 and reported with a
    ``RuntimeWarning``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels_for(probs, gt)
    _check_probs(probs)
    p_true = np.take_along_axis(probs, labels[:, None], axis=1)
    if (p_true < _PROB_FLOOR).any():
        warnings.warn("true-class probability of 0 clamped to 1e-12", RuntimeWarning, stacklevel=2)
        p_true = np.maximum(p_true, _PROB_FLOOR)
    return float(-np.log(p_true).mean())


def dice_loss(probs, gt, smooth: float = DICE_SMOOTH) -> float:
    """Soft Dice loss, ``1 - mean_c (2 sum p g + s) / (sum p^2 + sum g^2 + s)``."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels_for(probs, gt)
    _check_probs(probs)
    c = probs.shape[1]
    onehot = np.moveaxis(np.eye(c)[labels], -1, 1)
    axes = (0, 2, 3)
    inter = (probs * onehot).sum(axis=axes)
    denom = (probs * probs).sum(axis=axes) + onehot.sum(axis=axes)
    return float(1.0 - np.mean((2 * inter + smooth) / (denom + smooth)))


def combined_loss(probs, gt, w: LossWeights = LossWeights()) -> float:
    """``lam * CE + (1 - lam) * Dice``."""
    return w.lam * cross_entropy(probs, gt) + (1 - w.lam) * dice_loss(probs, gt)


def confusion(pred: LabelMask, gt: LabelMask) -> np.ndarray:
    """``C x C`` integer counts, rows indexed by ground truth, columns by prediction."""
    if pred.classes != gt.classes:
        raise ShapeError(f"class counts differ: pred {pred.classes}, gt {gt.classes}")
    if pred.labels.shape != gt.labels.shape:
        raise ShapeError(f"mask shapes differ: pred {pred.labels.shape}, gt {gt.labels.shape}")
    c = gt.classes
    flat = gt.labels.astype(np.int64).ravel() * c + pred.labels.astype(np.int64).ravel()
    return np.bincount(flat, minlength=c * c).reshape(c, c)


@dataclass
class Scores:
    """Per-class IoU/F1 (NaN where a class is absent from both masks) and their means."""

    iou: np.ndarray
    f1: np.ndarray
    mean_iou: float
    mean_f1: float
    names: tuple[str, ...] = ()


def iou_f1(cm, include_background: bool = False, names: Sequence[str] = ()) -> Scores:
    """Per-class IoU = TP/(TP+FP+FN) and F1 = 2TP/(2TP+FP+FN).

    Means skip undefined classes and, unless ``include_background``, class 0.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix has negative counts")
    cm = cm.astype(np.float64)
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    union = tp + fp + fn
    defined = union > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(defined, tp / union, np.nan)
        f1 = np.where(defined, 2 * tp / (2 * tp + fp + fn), np.nan)
    keep = defined.copy()
    if not include_background and len(keep):
        keep[0] = False
    mean_iou = float(iou[keep].mean()) if keep.any() else math.nan
    mean_f1 = float(f1[keep].mean()) if keep.any() else math.nan
    return Scores(iou, f1, mean_iou, mean_f1, tuple(names))


def _group_index(groups: Sequence[Iterable[int]], classes: int) -> np.ndarray:
    """Lookup table class -> group; classes outside every group map to ``len(groups)``."""
    table = np.full(classes, len(groups), dtype=np.int64)
    seen = set()
    for k, group in enumerate(groups):
        for c in group:
            if not 0 <= c < classes:
                raise ValueError(f"class {c} in group {k} is out of range")
            if c in seen:
                raise ValueError(f"class {c} appears in more than one group")
            seen.add(c)
            table[c] = k
    return table


def merge_confusion(cm, groups: Sequence[Iterable[int]]) -> np.ndarray:
    """Sum confusion counts into groups.

    The result has ``len(groups) + 1`` rows/columns; the last one collects
    classes outside every group.
    """
    cm = np.asarray(cm)
    table = _group_index(groups, cm.shape[0])
    assign = np.zeros((cm.shape[0], len(groups) + 1), dtype=cm.dtype)
    assign[np.arange(cm.shape[0]), table] = 1
    return assign.T @ cm @ assign


def relabel(mask: LabelMask, groups: Sequence[Iterable[int]]) -> LabelMask:
    table = _group_index(groups, mask.classes)
    return LabelMask(table[mask.labels], classes=len(groups) + 1)


def merge_regions(pred: LabelMask, gt: LabelMask, groups: Sequence[Iterable[int]] | Mapping[str, Iterable[int]]) -> Scores:
    """Score merged regions on relabelled masks (not by averaging per-class scores).

    ``groups`` is a list of class-index sets or a mapping from region name to
    class indices.  The returned scores cover the groups only.
    """
    if isinstance(groups, Mapping):
        names = tuple(groups)
        groups = [tuple(g) for g in groups.values()]
    else:
        groups = [tuple(g) for g in groups]
        names = tuple(f"group{k}" for k in range(len(groups)))
    return group_scores(confusion(relabel(pred, groups), relabel(gt, groups)), names)


def group_scores(merged_cm, names: Sequence[str] = ()) -> Scores:
    """Scores from a merged confusion matrix, dropping the trailing ungrouped slot."""
    full = iou_f1(merged_cm, include_background=True)
    iou, f1 = full.iou[:-1], full.f1[:-1]
    defined = ~np.isnan(iou)
    mean_iou = float(iou[defined].mean()) if defined.any() else math.nan
    mean_f1 = float(f1[defined].mean()) if defined.any() else math.nan
    return Scores(iou, f1, mean_iou, mean_f1, tuple(names))


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def format_report(per_class: Scores, merged: Scores | None = None) -> str:
    """Flat ``key=value`` text report, one entry per line.

    Keys are ``class.<name>.iou``, ``class.<name>.f1``, ``mean.iou``,
    ``mean.f1`` and, for merged regions, ``group.<name>.iou`` /
    ``group.<name>.f1``.  Undefined values are written as ``nan``.
    """
    names = per_class.names or tuple(f"class{k}" for k in range(len(per_class.iou)))
    lines = []
    for name, iou, f1 in zip(names, per_class.iou, per_class.f1):
        lines.append(f"class.{name}.iou={_fmt(iou)}")
        lines.append(f"class.{name}.f1={_fmt(f1)}")
    lines.append(f"mean.iou={_fmt(per_class.mean_iou)}")
    lines.append(f"mean.f1={_fmt(per_class.mean_f1)}")
    if merged is not None:
        for name, iou, f1 in zip(merged.names, merged.iou, merged.f1):
            lines.append(f"group.{name}.iou={_fmt(iou)}")
            lines.append(f"group.{name}.f1={_fmt(f1)}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, float]:
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = float(value)
    return out
