"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``PASS``/``FAIL`` line, visible even under captured output.
"""
import time

import numpy as np
import pytest

from tanhpolar import io as tio
from tanhpolar.cli import main
from tanhpolar.geometry import (
    FACE_RHO,
    BBox,
    fit_ellipse,
    from_tanh_cartesian,
    from_tanh_polar,
    radius_at,
    tc_to_tp,
    to_tanh_cartesian,
    to_tanh_polar,
    tp_to_tc,
)
from tanhpolar.metrics import IBUGMASK_CLASSES, LossWeights, combined_loss, cross_entropy, dice_loss, iou_f1, parse_report
from tanhpolar.nnkernel import (
    HybridBlockParams,
    bilinear_upsample,
    bottleneck_param_count,
    conv2d,
    hybrid_block_forward,
    hybrid_block_param_count,
    random_conv,
    random_hybrid_block,
    rotate_rows,
    zero_hybrid_block,
)
from tanhpolar.synthetic import BOUNDARY_CLASSES, FACE_FIXTURE_BBOX, INSIDE_CLASSES, face_mask, smooth_image
from tanhpolar.warp import polar_axes, unwarp_scores, warp_image


@pytest.fixture
def verdict(capsys):
    """Call ``verdict(n, title, ok, detail, elapsed, budget)`` once per criterion."""

    def report(n, title, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed < budget
        status = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] criterion {n}: {title}: {detail}; {elapsed:.2f}s (budget {budget}s)")
        assert ok, f"criterion {n} failed: {detail}, {elapsed:.2f}s"

    return report


def random_boxes(rng, n, square=False):
    x, y = rng.uniform(-200, 800, (2, n))
    w = rng.uniform(5, 600, n)
    h = w if square else rng.uniform(5, 600, n)
    return [BBox(*v) for v in zip(x, y, w, h)]


def points_around(rng, box, n, inner=0.0, outer=3.0):
    e = fit_ellipse(box)
    theta = rng.uniform(-np.pi, np.pi, n)
    r = rng.uniform(inner, outer, n) * radius_at(e, theta)
    return e.cx + r * np.cos(theta), e.cy + r * np.sin(theta)


def angle_gap(a, b):
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))


def test_criterion_1_face_ratio(rng, verdict):
    t0 = time.perf_counter()
    theta = np.linspace(-np.pi, np.pi, 360, endpoint=False)
    worst = 0.0
    for box in random_boxes(rng, 1000):
        e = fit_ellipse(box)
        r = radius_at(e, theta)
        _, rho = to_tanh_polar((e.cx + r * np.cos(theta), e.cy + r * np.sin(theta)), box)
        worst = max(worst, float(np.max(np.abs(rho - FACE_RHO))))
    columns = int(np.sum(polar_axes(512, 512)[1] < FACE_RHO))
    elapsed = time.perf_counter() - t0
    verdict(1, "face-ratio constant", worst <= 1e-12 and columns == 390,
            f"max |rho - tanh(1)| = {worst:.1e} (tol 1e-12), face columns at W=512: {columns} (want 390)", elapsed, 1)


def test_criterion_2_invertibility(rng, verdict):
    t0 = time.perf_counter()
    n = 100_000
    box = BBox(37.5, -12.0, 180.0, 240.0)
    # Cartesian -> polar -> Cartesian
    px, py = points_around(rng, box, n, outer=5.0)
    qx, qy = from_tanh_polar(to_tanh_polar((px, py), box), box)
    err_cart = float(max(np.max(np.abs(qx - px)), np.max(np.abs(qy - py))))
    # polar -> Cartesian -> polar
    theta = rng.uniform(-np.pi, np.pi, n)
    rho = rng.uniform(0.01, 0.99, n)
    t2, r2 = to_tanh_polar(from_tanh_polar((theta, rho), box), box)
    err_polar = float(max(np.max(angle_gap(t2, theta)), np.max(np.abs(r2 - rho))))
    # Tanh-Cartesian and the inter-grid pair
    u1, u2 = to_tanh_cartesian((px, py), box)
    cx, cy = from_tanh_cartesian((u1, u2), box)
    err_tc = float(max(np.max(np.abs(cx - px)), np.max(np.abs(cy - py))))
    t3, r3 = tc_to_tp(tp_to_tc((theta, rho)))
    err_grid = float(max(np.max(angle_gap(t3, theta)), np.max(np.abs(r3 - rho))))
    coord_err = max(err_cart, err_polar, err_tc, err_grid)

    img = smooth_image(512, 512, channels=3, seed=11)
    fb = FACE_FIXTURE_BBOX
    back = unwarp_scores(warp_image(img, fb, 512, 512), fb, 512, 512)
    e = fit_ellipse(fb)
    yy, xx = np.mgrid[0:512, 0:512] + 0.5
    inside = np.hypot((xx - e.cx) / e.a, (yy - e.cy) / e.b) < 1
    mse = float(np.mean((back[:, :, inside] - img[:, :, inside]) ** 2))
    psnr = 10 * np.log10(1.0 / mse) if mse > 0 else np.inf
    elapsed = time.perf_counter() - t0
    verdict(2, "invertibility", coord_err <= 1e-9 and psnr >= 35,
            f"max coordinate round-trip error {coord_err:.1e} (tol 1e-9), interior PSNR {psnr:.1f} dB (need >= 35)",
            elapsed, 10)


def test_criterion_3_rotation_equivariance(rng, verdict):
    t0 = time.perf_counter()
    worst = 0.0
    boxes = random_boxes(rng, 10, square=True)
    for box in boxes:
        cx, cy = box.center()
        px, py = points_around(rng, box, 1000, outer=4.0)
        phi = rng.uniform(-np.pi, np.pi, 1000)
        c, s = np.cos(phi), np.sin(phi)
        rx = cx + c * (px - cx) - s * (py - cy)
        ry = cy + s * (px - cx) + c * (py - cy)
        t0_, r0_ = to_tanh_polar((px, py), box)
        t1_, r1_ = to_tanh_polar((rx, ry), box)
        worst = max(worst, float(np.max(angle_gap(t1_, t0_ + phi))), float(np.max(np.abs(r1_ - r0_))))

    bitwise = True
    for size in (8, 16, 32, 64):
        x = rng.standard_normal((1, 8, size, size)).astype(np.float32)
        c1, c2 = random_conv(rng, 8, 8, 3), random_conv(rng, 8, 8, 5)
        blk = random_hybrid_block(rng, 8)
        blk = HybridBlockParams(blk.reduce, blk.tp_branch, zero_hybrid_block(8).tc_branch, blk.restore)

        def stack(t):
            return hybrid_block_forward(conv2d(conv2d(t, c1), c2), blk)

        y = stack(x)
        for k in range(size):
            bitwise &= np.array_equal(stack(rotate_rows(x, k)), rotate_rows(y, k))
    elapsed = time.perf_counter() - t0
    verdict(3, "rotation equivariance", worst <= 1e-9 and bitwise,
            f"max coordinate deviation {worst:.1e} over 10^4 pairs (tol 1e-9), "
            f"conv stacks bitwise row-shift equivariant on 8..64: {bitwise}", elapsed, 5)


def test_criterion_4_scale_invariance(rng, verdict):
    t0 = time.perf_counter()
    worst = 0.0
    box = BBox(40.0, 25.0, 120.0, 150.0)
    # angles are ill-conditioned right at the pole, so points start 0.05 radii out
    px, py = points_around(rng, box, 10_000, inner=0.05, outer=4.0)
    t_ref, r_ref = to_tanh_polar((px, py), box)
    for k in (0.1, 0.5, 2.0, 10.0):
        t_k, r_k = to_tanh_polar((k * px, k * py), box.scaled(k))
        worst = max(worst, float(np.max(angle_gap(t_k, t_ref))), float(np.max(np.abs(r_k - r_ref))))

    small = smooth_image(256, 256, channels=1, seed=4)
    big = bilinear_upsample(small, 2)
    fb = BBox(58.0, 48.0, 140.0, 160.0)
    a = warp_image(small, fb, 512, 512)
    b = warp_image(big, fb.scaled(2.0), 512, 512)
    mad = float(np.mean(np.abs(a - b)))
    elapsed = time.perf_counter() - t0
    verdict(4, "scale invariance", worst <= 1e-12 and mad < 3 / 255,
            f"max coordinate deviation {worst:.1e} (tol 1e-12), warp mean abs diff {mad * 255:.3f}/255 (need < 3/255)",
            elapsed, 10)


def test_criterion_5_direct_intergrid_map(rng, verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for box in random_boxes(rng, 10):
        theta = rng.uniform(-np.pi, np.pi, 10_000)
        rho = rng.uniform(0.0, 0.995, 10_000)
        direct = np.stack(tp_to_tc((theta, rho)))
        composed = np.stack(to_tanh_cartesian(from_tanh_polar((theta, rho), box), box))
        worst = max(worst, float(np.max(np.abs(direct - composed))))
    elapsed = time.perf_counter() - t0
    verdict(5, "direct inter-grid map", worst <= 1e-9,
            f"max |tp_to_tc - composed| = {worst:.1e} over 10 boxes x 10^4 coords (tol 1e-9)", elapsed, 2)


def test_criterion_6_hybrid_block(rng, verdict):
    t0 = time.perf_counter()
    x = rng.standard_normal((2, 16, 12, 20)).astype(np.float32)
    identity = np.array_equal(hybrid_block_forward(x, zero_hybrid_block(16)), x)
    shapes_ok = 0
    for _ in range(100):
        c = 8 * int(rng.integers(1, 5))
        shape = (int(rng.integers(1, 3)), c, int(rng.integers(3, 24)), int(rng.integers(3, 24)))
        y = hybrid_block_forward(rng.standard_normal(shape).astype(np.float32), random_hybrid_block(rng, c))
        shapes_ok += y.shape == shape
    counts = [(c, hybrid_block_param_count(c), bottleneck_param_count(c)) for c in (64, 256, 1024, 2048)]
    fewer = all(h < b for _, h, b in counts)
    c, h, b = counts[1]
    elapsed = time.perf_counter() - t0
    verdict(6, "HybridBlock contract", identity and shapes_ok == 100 and fewer,
            f"zero block identity bitwise: {identity}, shapes preserved {shapes_ok}/100, "
            f"params at c={c}: hybrid {h} < bottleneck {b}", elapsed, 5)


def _ce_loop(probs, labels):
    total = 0.0
    for i in range(labels.shape[0]):
        for j in range(labels.shape[1]):
            total -= np.log(probs[0, labels[i, j], i, j])
    return total / labels.size


def _dice_loop(probs, labels):
    terms = 0.0
    for c in range(probs.shape[1]):
        inter = sq = g = 0.0
        for i in range(labels.shape[0]):
            for j in range(labels.shape[1]):
                p = probs[0, c, i, j]
                t = 1.0 if labels[i, j] == c else 0.0
                inter += p * t
                sq += p * p
                g += t
        terms += (2 * inter + 1.0) / (sq + g + 1.0)
    return 1 - terms / probs.shape[1]


def test_criterion_7_metric_identities(rng, verdict):
    t0 = time.perf_counter()
    f1_err = 0.0
    for _ in range(1000):
        c = int(rng.integers(2, 12))
        s = iou_f1(rng.integers(0, 100, (c, c)), include_background=True)
        ok = ~np.isnan(s.iou)
        f1_err = max(f1_err, float(np.max(np.abs(s.f1[ok] - 2 * s.iou[ok] / (1 + s.iou[ok])))))
    loss_err = 0.0
    for c in (2, 3, 11):
        logits = rng.standard_normal((1, c, 16, 16)) * 2
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        labels = rng.integers(0, c, (16, 16))
        ce, dice = _ce_loop(probs, labels), _dice_loop(probs, labels)
        loss_err = max(loss_err, abs(cross_entropy(probs, labels) - ce), abs(dice_loss(probs, labels) - dice))
        for lam in (0.0, 0.25, 0.5, 1.0):
            loss_err = max(loss_err, abs(combined_loss(probs, labels, LossWeights(lam)) - (lam * ce + (1 - lam) * dice)))
    elapsed = time.perf_counter() - t0
    verdict(7, "metric identities", f1_err <= 1e-12 and loss_err <= 1e-9,
            f"max F1 identity error {f1_err:.1e} (tol 1e-12), max loss error vs per-pixel loops {loss_err:.1e} (tol 1e-9)",
            elapsed, 2)


def test_criterion_8_end_to_end(tmp_path, verdict, monkeypatch, capsys):
    for key in ("SIZE", "BBOX", "SEED", "BORDER", "CLASSES"):
        monkeypatch.delenv("TANHPOLAR_" + key, raising=False)
    t0 = time.perf_counter()
    gt = face_mask(512, 512, FACE_FIXTURE_BBOX)
    tio.write_mask(tmp_path / "gt.png", gt)
    box = str(FACE_FIXTURE_BBOX)
    codes = [
        main(["warp", str(tmp_path / "gt.png"), str(tmp_path / "tp.bin"), "--onehot", "11", "--bbox", box, "--size", "512x512"]),
        main(["unwarp", str(tmp_path / "tp.bin"), str(tmp_path / "pred.png"), "--orig", "512x512", "--bbox", box,
              "--size", "512x512"]),
        main(["eval", "--pred", str(tmp_path / "pred.png"), "--gt", str(tmp_path / "gt.png"), "--groups", "ibugmask",
              "--report", str(tmp_path / "report.txt"), "--quiet"]),
    ]
    report = parse_report((tmp_path / "report.txt").read_text())
    inside = {IBUGMASK_CLASSES[k]: report[f"class.{IBUGMASK_CLASSES[k]}.iou"] for k in INSIDE_CLASSES}
    boundary = {IBUGMASK_CLASSES[k]: report[f"class.{IBUGMASK_CLASSES[k]}.iou"] for k in BOUNDARY_CLASSES}
    ok = codes == [0, 0, 0] and min(inside.values()) >= 0.95 and min(boundary.values()) >= 0.90
    elapsed = time.perf_counter() - t0
    verdict(8, "end-to-end fixture", ok,
            f"exit codes {codes}, min inside IoU {min(inside.values()):.4f} (need >= 0.95), "
            f"hair IoU {min(boundary.values()):.4f} (need >= 0.90)", elapsed, 30)
