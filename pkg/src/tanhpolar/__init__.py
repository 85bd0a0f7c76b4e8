"""RoI Tanh-polar warping for face parsing.

Warps a whole image into a Tanh-polar frame anchored on a face bounding box,
maps score maps back, and provides the small convolution engine, losses and
metrics needed to work with that representation.
"""
from .errors import InvalidBBoxError, OutOfRangeError, ShapeError, TanhPolarError
from .geometry import (
    FACE_RHO,
    BBox,
    Ellipse,
    PolarCoord,
    TCCoord,
    fit_ellipse,
    from_tanh_cartesian,
    from_tanh_polar,
    radius_at,
    tc_to_tp,
    to_tanh_cartesian,
    to_tanh_polar,
    tp_to_tc,
)
from .metrics import LabelMask, LossWeights, combined_loss, confusion, cross_entropy, dice_loss, iou_f1, merge_regions
from .warp import (
    AugmentParams,
    BorderPolicy,
    SamplingGrid,
    augment_bbox,
    bilinear_sample,
    make_forward_grid,
    make_inverse_grid,
    tta_average,
    unwarp_labels,
    unwarp_scores,
    warp_image,
)

__all__ = [
    "InvalidBBoxError",
    "OutOfRangeError",
    "ShapeError",
    "TanhPolarError",
    "FACE_RHO",
    "BBox",
    "Ellipse",
    "PolarCoord",
    "TCCoord",
    "fit_ellipse",
    "from_tanh_cartesian",
    "from_tanh_polar",
    "radius_at",
    "tc_to_tp",
    "to_tanh_cartesian",
    "to_tanh_polar",
    "tp_to_tc",
    "LabelMask",
    "LossWeights",
    "combined_loss",
    "confusion",
    "cross_entropy",
    "dice_loss",
    "iou_f1",
    "merge_regions",
    "AugmentParams",
    "BorderPolicy",
    "SamplingGrid",
    "augment_bbox",
    "bilinear_sample",
    "make_forward_grid",
    "make_inverse_grid",
    "tta_average",
    "unwarp_labels",
    "unwarp_scores",
    "warp_image",
]

__version__ = "0.1.0"
