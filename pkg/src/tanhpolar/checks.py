"""Self-check suites: randomized invariant checks runnable from the command line."""
from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from . import geometry as g
from . import metrics as m
from . import nnkernel as nk
from . import warp as wp
from .synthetic import disk_image

Check = Callable[[np.random.Generator], None]


def _random_boxes(rng, n, square=False):
    xy = rng.uniform(-200, 600, size=(n, 2))
    w = rng.uniform(5, 400, size=n)
    h = w.copy() if square else rng.uniform(5, 400, size=n)
    return [g.BBox(float(a), float(b), float(c), float(d)) for (a, b), c, d in zip(xy, w, h)]


def _points_near(rng, bbox, n, radii=4.0, inner=0.0):
    """Random points between ``inner`` and ``radii`` ellipse radii from the box centre."""
    e = g.fit_ellipse(bbox)
    theta = rng.uniform(-np.pi, np.pi, n)
    r = rng.uniform(inner, radii, n) * g.radius_at(e, theta)
    return e.cx + r * np.cos(theta), e.cy + r * np.sin(theta)


def _angle_diff(a, b):
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, 2 * np.pi) - np.pi
    return np.abs(d)


# --- geometry ---------------------------------------------------------------

def check_boundary_pinning(rng):
    phi = np.linspace(-np.pi, np.pi, 360, endpoint=False)
    for box in _random_boxes(rng, 100):
        e = g.fit_ellipse(box)
        _, rho = g.to_tanh_polar((e.cx + e.a * np.cos(phi), e.cy + e.b * np.sin(phi)), box)
        err = np.max(np.abs(rho - g.FACE_RHO))
        assert err <= 1e-12, f"boundary rho off by {err:.3g}"


def check_polar_round_trip(rng):
    for box in _random_boxes(rng, 10):
        px, py = _points_near(rng, box, 1000)
        qx, qy = g.from_tanh_polar(g.to_tanh_polar((px, py), box), box)
        err = max(np.max(np.abs(qx - px)), np.max(np.abs(qy - py)))
        assert err <= 1e-9, f"round trip error {err:.3g} px"


def check_tc_round_trip(rng):
    c = g.PolarCoord(rng.uniform(-np.pi, np.pi, 10000), rng.uniform(0, 0.999, 10000))
    back = g.tc_to_tp(g.tp_to_tc(c))
    err = max(np.max(_angle_diff(back.theta, c.theta) * (c.rho > 1e-12)), np.max(np.abs(back.rho - c.rho)))
    assert err <= 1e-9, f"tp/tc round trip error {err:.3g}"


def check_rotation_equivariance(rng):
    for box in _random_boxes(rng, 10, square=True):
        cx, cy = box.center()
        px, py = _points_near(rng, box, 1000)
        phi = rng.uniform(-np.pi, np.pi, 1000)
        dx, dy = px - cx, py - cy
        rx = cx + np.cos(phi) * dx - np.sin(phi) * dy
        ry = cy + np.sin(phi) * dx + np.cos(phi) * dy
        a = g.to_tanh_polar((px, py), box)
        b = g.to_tanh_polar((rx, ry), box)
        err = max(np.max(_angle_diff(b.theta, a.theta + phi)), np.max(np.abs(b.rho - a.rho)))
        assert err <= 1e-9, f"rotation equivariance error {err:.3g}"


def check_scale_invariance(rng):
    for box in _random_boxes(rng, 10):
        # the angle of a tiny offset is ill-conditioned once k * p is rounded
        px, py = _points_near(rng, box, 1000, inner=0.05)
        a = g.to_tanh_polar((px, py), box)
        for k in (0.1, 0.5, 2.0, 10.0):
            b = g.to_tanh_polar((k * px, k * py), box.scaled(k))
            err = max(np.max(_angle_diff(b.theta, a.theta)), np.max(np.abs(b.rho - a.rho)))
            assert err <= 1e-12, f"scale invariance error {err:.3g} at k={k}"


def check_radius_symmetry(rng):
    e = g.Ellipse(0.0, 0.0, *rng.uniform(1, 100, 2))
    theta = rng.uniform(-np.pi, np.pi, 1000)
    r = g.radius_at(e, theta)
    assert np.array_equal(r, g.radius_at(e, -theta)), "r(theta) != r(-theta)"
    assert np.allclose(r, g.radius_at(e, theta + np.pi), rtol=1e-13, atol=0), "r(theta) != r(theta + pi)"


def check_intergrid_cancellation(rng):
    c = g.PolarCoord(rng.uniform(-np.pi, np.pi, 2000), rng.uniform(0, 0.999, 2000))
    direct = g.tp_to_tc(c)
    for box in _random_boxes(rng, 5):
        via = g.to_tanh_cartesian(g.from_tanh_polar(c, box), box)
        err = max(np.max(np.abs(via.u1 - direct.u1)), np.max(np.abs(via.u2 - direct.u2)))
        assert err <= 1e-9, f"direct map differs from composition by {err:.3g}"


# --- warp ---------------------------------------------------------------------

def check_face_columns(rng):
    for W in range(2, 1025):
        _, rhos = wp.polar_axes(2, W)
        count = int(np.sum(rhos < g.FACE_RHO))
        assert count == math.ceil(g.FACE_RHO * W - 0.5), f"W={W}: {count} face columns"


def check_grid_rotation_shift(rng):
    H, W = 64, 32
    box = _random_boxes(rng, 1, square=True)[0]
    base = wp.make_forward_grid(box, H, W)
    cx, cy = box.center()
    for k in (1, 5, 17, 63):
        phi = 2 * np.pi * k / H
        # rotating the sample positions is the same as rolling the rows
        rx = cx + np.cos(phi) * (base.x - cx) - np.sin(phi) * (base.y - cy)
        ry = cy + np.sin(phi) * (base.x - cx) + np.cos(phi) * (base.y - cy)
        err = max(np.max(np.abs(np.roll(base.x, -k, axis=0) - rx)), np.max(np.abs(np.roll(base.y, -k, axis=0) - ry)))
        assert err <= 1e-9 * max(1.0, box.w), f"shift {k}: grid mismatch {err:.3g}"


def check_sample_linearity(rng):
    a = rng.standard_normal((1, 2, 20, 24))
    b = rng.standard_normal((1, 2, 20, 24))
    grid = wp.SamplingGrid(rng.uniform(-3, 27, (15, 17)), rng.uniform(-3, 23, (15, 17)))
    alpha, beta = rng.standard_normal(2)
    lhs = wp.bilinear_sample(alpha * a + beta * b, grid)
    rhs = alpha * wp.bilinear_sample(a, grid) + beta * wp.bilinear_sample(b, grid)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6, "bilinear_sample is not linear"


def check_augment_identity(rng):
    params = wp.AugmentParams(0.0, 1.0, 1.0, seed=int(rng.integers(2 ** 62)))
    for box in _random_boxes(rng, 50):
        assert wp.augment_bbox(box, params, int(rng.integers(1000))) == box


def check_ellipse_indicator(rng):
    size = 128
    box = g.BBox(34.0, 30.0, 60.0, 70.0)
    disk = disk_image(size, size, box)
    back = wp.unwarp_scores(wp.warp_image(disk, box, 256, 256), box, size, size)[0, 0]
    e = g.fit_ellipse(box)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    # distance to the boundary in pixels, measured along the ray
    dist = np.abs(np.hypot((xx - e.cx) / e.a, (yy - e.cy) / e.b) - 1) * min(e.a, e.b)
    far = dist > 2
    wrong = (back >= 0.5) != (disk[0, 0] > 0)
    assert not np.any(wrong & far), f"{int(np.sum(wrong & far))} pixels misclassified away from the boundary"


# --- nnkernel -----------------------------------------------------------------

def check_conv_equivariance(rng):
    for size in (8, 16, 32):
        x = rng.standard_normal((1, 3, size, size)).astype(np.float32)
        layers = [nk.random_conv(rng, 3, 4, 3), nk.random_conv(rng, 4, 2, 1), nk.random_conv(rng, 2, 2, 5)]

        def stack(t):
            for p in layers:
                t = nk.conv2d(t, p)
            return t

        y = stack(x)
        for k in range(size):
            assert np.array_equal(stack(nk.rotate_rows(x, k)), nk.rotate_rows(y, k)), f"size {size}, shift {k}"


def check_hybrid_identity(rng):
    x = rng.standard_normal((2, 16, 12, 10)).astype(np.float32)
    y = nk.hybrid_block_forward(x, nk.zero_hybrid_block(16))
    assert y.shape == x.shape and y.tobytes() == x.tobytes(), "zero block is not the identity"


def check_hybrid_polar_equivariance(rng):
    p = nk.random_hybrid_block(rng, 16)
    p.tc_branch.weights[...] = 0
    p.tc_branch.bias[...] = 0
    x = rng.standard_normal((1, 16, 16, 12)).astype(np.float32)
    y = nk.hybrid_block_forward(x, p)
    for k in range(16):
        assert np.array_equal(nk.hybrid_block_forward(nk.rotate_rows(x, k), p), nk.rotate_rows(y, k)), f"shift {k}"


def check_pad_interior(rng):
    x = rng.standard_normal((1, 2, 7, 5)).astype(np.float32)
    for margin in (1, 2, 9):
        padded = nk.pad(x, margin, nk.PadMode.MIXED)
        assert np.array_equal(padded[:, :, margin:-margin, margin:-margin], x)


def check_param_counts(rng):
    for c in (64, 128, 256, 512, 1024, 2048):
        assert nk.hybrid_block_param_count(c) < nk.bottleneck_param_count(c)
        assert nk.random_hybrid_block(rng, 64).param_count == nk.hybrid_block_param_count(64)


# --- metrics ------------------------------------------------------------------

def check_f1_iou_identity(rng):
    for _ in range(200):
        c = int(rng.integers(2, 12))
        s = m.iou_f1(rng.integers(0, 50, (c, c)))
        ok = ~np.isnan(s.iou)
        assert np.allclose(s.f1[ok], 2 * s.iou[ok] / (1 + s.iou[ok]), rtol=0, atol=1e-12)


def check_confusion_total(rng):
    for _ in range(50):
        c = int(rng.integers(1, 12))
        shape = tuple(rng.integers(1, 40, 2))
        a = m.LabelMask(rng.integers(0, c, shape), c)
        b = m.LabelMask(rng.integers(0, c, shape), c)
        cm = m.confusion(a, b)
        assert cm.sum() == a.labels.size
        ab, ba = m.iou_f1(cm), m.iou_f1(m.confusion(b, a))
        assert np.array_equal(ab.iou, ba.iou, equal_nan=True) and np.array_equal(ab.f1, ba.f1, equal_nan=True)


def _random_probs(rng, c, shape):
    logits = rng.standard_normal((1, c) + shape)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def check_loss_affine(rng):
    probs = _random_probs(rng, 4, (16, 16))
    gt = m.LabelMask(rng.integers(0, 4, (16, 16)), 4)
    ce, dice = m.cross_entropy(probs, gt), m.dice_loss(probs, gt)
    for lam in (0.0, 0.25, 0.5, 1.0):
        assert abs(m.combined_loss(probs, gt, m.LossWeights(lam)) - (lam * ce + (1 - lam) * dice)) <= 1e-12


def check_loss_permutation(rng):
    probs = _random_probs(rng, 5, (9, 11))
    gt = m.LabelMask(rng.integers(0, 5, (9, 11)), 5)
    perm = rng.permutation(5)
    inv = np.argsort(perm)
    probs2 = probs[:, inv]  # channel k of the relabelled set holds old class inv[k]
    gt2 = m.LabelMask(perm[gt.labels], 5)
    assert abs(m.cross_entropy(probs, gt) - m.cross_entropy(probs2, gt2)) <= 1e-12
    assert abs(m.dice_loss(probs, gt) - m.dice_loss(probs2, gt2)) <= 1e-12


SUITES: dict[str, list[tuple[str, Check]]] = {
    "geometry": [
        ("boundary maps to rho = tanh(1)", check_boundary_pinning),
        ("polar round trip", check_polar_round_trip),
        ("tp/tc round trip", check_tc_round_trip),
        ("rotation equivariance (circular boxes)", check_rotation_equivariance),
        ("scale invariance", check_scale_invariance),
        ("radius symmetry", check_radius_symmetry),
        ("inter-grid map is box independent", check_intergrid_cancellation),
    ],
    "warp": [
        ("face column count", check_face_columns),
        ("grid rotation = row shift", check_grid_rotation_shift),
        ("bilinear sampling is linear", check_sample_linearity),
        ("identity augmentation", check_augment_identity),
        ("ellipse indicator survives round trip", check_ellipse_indicator),
    ],
    "nnkernel": [
        ("mixed-pad conv commutes with row rotation", check_conv_equivariance),
        ("zero hybrid block is identity", check_hybrid_identity),
        ("hybrid block polar branch equivariance", check_hybrid_polar_equivariance),
        ("padding keeps interior", check_pad_interior),
        ("hybrid block has fewer parameters", check_param_counts),
    ],
    "metrics": [
        ("F1 = 2 IoU / (1 + IoU)", check_f1_iou_identity),
        ("confusion total and symmetry", check_confusion_total),
        ("combined loss affine in lambda", check_loss_affine),
        ("losses permutation equivariant", check_loss_permutation),
    ],
}


def suite_names() -> list[str]:
    return list(SUITES) + ["all"]


def run_suite(name: str, seed: int = 0, out=print) -> bool:
    """Run a suite, print one line per check, return True iff every check passed."""
    if name == "all":
        selected = [(s, c) for s in SUITES for c in SUITES[s]]
    elif name in SUITES:
        selected = [(name, c) for c in SUITES[name]]
    else:
        raise KeyError(name)
    ok_all = True
    for suite, (label, fn) in selected:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            fn(rng)
            status, detail = "PASS", ""
        except AssertionError as exc:
            status, detail = "FAIL", f"  ({exc})" if str(exc) else ""
            ok_all = False
        out(f"{status}  {suite:<9} {label:<45} {time.perf_counter() - t0:6.2f}s{detail}")
    return ok_all
