"""Command-line interface.

Exit codes: 0 ok, 2 I/O error, 3 bad bounding box, 4 shape mismatch, 5 usage.

Settings resolve in this order, later winning: built-in defaults, the
``--config`` file (``key=value`` lines), ``TANHPOLAR_<KEY>`` environment
variables, explicit command-line flags.  Recognised keys: ``size``, ``bbox``,
``seed``, ``border``, ``lambda``, ``max_shift_frac``, ``scale_lo``,
``scale_hi``, ``classes``, ``palette``.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import checks
from . import io as tio
from . import metrics as m
from . import nnkernel as nk
from . import warp as wp
from .errors import InvalidBBoxError, ShapeError
from .geometry import BBox

EXIT_OK = 0
EXIT_IO = 2
EXIT_BBOX = 3
EXIT_SHAPE = 4
EXIT_USAGE = 5

ENV_PREFIX = "TANHPOLAR_"
CONFIG_KEYS = ("size", "bbox", "seed", "border", "lambda", "max_shift_frac", "scale_lo", "scale_hi", "classes", "palette")


class UsageError(Exception):
    pass


@dataclass
class Config:
    H: int = wp.DEFAULT_SIZE
    W: int = wp.DEFAULT_SIZE
    border: wp.BorderPolicy = wp.BorderPolicy.ZERO
    lam: float = 0.5
    augment: wp.AugmentParams = field(default_factory=wp.AugmentParams)
    classes: int = len(m.IBUGMASK_CLASSES)
    palette: tuple = tio.DEFAULT_PALETTE
    bbox: str | None = None

    def apply(self, key: str, value: str) -> None:
        key = key.strip().lower()
        value = value.strip()
        try:
            if key == "size":
                self.H, self.W = parse_size(value)
            elif key == "bbox":
                self.bbox = value
            elif key == "seed":
                self.augment = dataclasses.replace(self.augment, seed=int(value))
            elif key == "border":
                self.border = wp.BorderPolicy(value.lower())
            elif key == "lambda":
                self.lam = m.LossWeights(float(value)).lam
            elif key in ("max_shift_frac", "scale_lo", "scale_hi"):
                self.augment = dataclasses.replace(self.augment, **{key: float(value)})
            elif key == "classes":
                self.classes = int(value)
                if not 1 <= self.classes <= 256:
                    raise ValueError("classes must be in 1..256")
            elif key == "palette":
                self.palette = parse_palette(value)
            else:
                raise UsageError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None


def parse_size(text: str) -> tuple[int, int]:
    h, sep, w = text.lower().partition("x")
    if not sep:
        raise ValueError(f"size must look like HxW, got {text!r}")
    h, w = int(h), int(w)
    if h < 2 or w < 2:
        raise ValueError("both dimensions must be >= 2")
    return h, w


def parse_palette(text: str) -> tuple:
    colors = []
    for item in text.replace(";", ",").split(","):
        item = item.strip().lstrip("#")
        if len(item) != 6:
            raise ValueError(f"palette entries are #rrggbb, got {item!r}")
        colors.append(tuple(int(item[i:i + 2], 16) for i in (0, 2, 4)))
    return tuple(colors)


def parse_groups(text: str | None, classes: int) -> dict[str, tuple[int, ...]] | None:
    """``"ibugmask"`` or ``"name=1,2,3;other=4"``."""
    if not text:
        return None
    if text.strip().lower() == "ibugmask":
        return dict(m.IBUGMASK_GROUPS)
    groups = {}
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        name, sep, members = chunk.partition("=")
        if not sep:
            raise UsageError(f"group spec {chunk!r} must be name=i,j,...")
        try:
            groups[name.strip()] = tuple(int(v) for v in members.split(",") if v.strip())
        except ValueError:
            raise UsageError(f"group {name.strip()!r} has a non-integer member") from None
    return groups


def load_config(args) -> Config:
    cfg = Config()
    if getattr(args, "config", None):
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"config line {line!r} is not key=value")
            cfg.apply(key, value)
    for key in CONFIG_KEYS:
        value = os.environ.get(ENV_PREFIX + key.upper())
        if value is not None:
            cfg.apply(key, value)
    for key, attr in (("size", "size"), ("bbox", "bbox"), ("seed", "seed")):
        value = getattr(args, attr, None)
        if value is not None:
            cfg.apply(key, str(value))
    if getattr(args, "border", None):
        cfg.apply("border", args.border)
    return cfg


def resolve_bbox(spec: str | None) -> BBox:
    """Parse ``x,y,w,h``, or read it from a one-line sidecar file when ``spec`` names one."""
    if spec is None:
        raise InvalidBBoxError("no bounding box given (use --bbox x,y,w,h or a sidecar file)")
    if os.path.isfile(spec):
        lines = Path(spec).read_text().strip().splitlines()
        spec = lines[0] if lines else ""
    return BBox.parse(spec)


def _read_scores(path) -> tuple[np.ndarray, bool]:
    """Return ``(scores, from_png)``."""
    if tio.is_raw_tensor(path):
        t = tio.load_tensor(path)
        if t.ndim == 3:
            t = t[None]
        if t.ndim != 4 or t.shape[0] != 1:
            raise ShapeError(f"{path}: expected a (1, C, H, W) score tensor, got {t.shape}")
        return t, False
    return tio.read_image(path), True


def cmd_warp(args, cfg: Config) -> int:
    bbox = resolve_bbox(cfg.bbox)
    if args.onehot:
        img = tio.read_mask(args.input, args.onehot).one_hot()
    elif tio.is_raw_tensor(args.input):
        img = tio.load_tensor(args.input)
        if img.ndim != 4:
            raise ShapeError(f"{args.input}: expected an (N, C, H, W) tensor, got {img.shape}")
    else:
        img = tio.read_image(args.input)
    out = wp.warp_image(img, bbox, cfg.H, cfg.W, border=cfg.border)
    if str(args.output).lower().endswith(".png"):
        tio.write_image(args.output, out)
    else:
        tio.save_tensor(args.output, out.astype(np.float32))
    return EXIT_OK


def cmd_unwarp(args, cfg: Config) -> int:
    bbox = resolve_bbox(cfg.bbox)
    try:
        out_h, out_w = parse_size(args.orig)
    except ValueError as exc:
        raise UsageError(f"--orig: {exc}") from None
    scores, from_png = _read_scores(args.input)
    to_png = str(args.output).lower().endswith(".png")
    if from_png or scores.shape[1] == 1:
        cart = wp.unwarp_scores(scores, bbox, out_h, out_w)
        if to_png:
            tio.write_image(args.output, cart)
        else:
            tio.save_tensor(args.output, cart.astype(np.float32))
        return EXIT_OK
    if not to_png:
        tio.save_tensor(args.output, wp.unwarp_scores(scores, bbox, out_h, out_w).astype(np.float32))
        return EXIT_OK
    mask = wp.unwarp_labels(scores, bbox, out_h, out_w)
    tio.write_mask(args.output, mask)
    if args.overlay:
        Image.fromarray(tio.colorize(mask, cfg.palette)).save(args.overlay, format="PNG")
    return EXIT_OK


def grid_for(direction: str, cfg: Config, bbox: BBox | None, orig: tuple[int, int] | None) -> wp.SamplingGrid:
    if direction == "forward":
        return wp.make_forward_grid(bbox, cfg.H, cfg.W)
    if direction == "inverse":
        out_h, out_w = orig
        return wp.make_inverse_grid(bbox, out_h, out_w, cfg.H, cfg.W)
    if direction == "tp2tc":
        return nk.tp_to_tc_grid(cfg.H, cfg.W)
    return nk.tc_to_tp_grid(cfg.H, cfg.W)


def cmd_griddump(args, cfg: Config) -> int:
    bbox = None
    orig = None
    if args.direction in ("forward", "inverse"):
        bbox = resolve_bbox(cfg.bbox)
    if args.direction == "inverse":
        if not args.orig:
            raise UsageError("the inverse grid needs --orig HxW")
        try:
            orig = parse_size(args.orig)
        except ValueError as exc:
            raise UsageError(f"--orig: {exc}") from None
    grid = grid_for(args.direction, cfg, bbox, orig)
    tio.save_grid(args.output, grid, args.direction, dtype="<f8" if args.float64 else "<f4")
    return EXIT_OK


def cmd_check(args, cfg: Config) -> int:
    if args.suite not in checks.suite_names():
        print(f"unknown suite {args.suite!r}; available: {', '.join(checks.suite_names())}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if checks.run_suite(args.suite, seed=cfg.augment.seed) else 1


def cmd_eval(args, cfg: Config) -> int:
    if len(args.pred) != len(args.gt):
        raise UsageError("--pred and --gt need the same number of files")
    classes = args.classes or cfg.classes
    groups = parse_groups(args.groups, classes)
    names = m.IBUGMASK_CLASSES if classes == len(m.IBUGMASK_CLASSES) else tuple(f"class{k}" for k in range(classes))
    cm = np.zeros((classes, classes), dtype=np.int64)
    for p_path, g_path in zip(args.pred, args.gt):
        pred = tio.read_mask(p_path, classes)
        gt = tio.read_mask(g_path, classes)
        if pred.labels.shape != gt.labels.shape:
            raise ShapeError(f"{p_path} is {pred.labels.shape} but {g_path} is {gt.labels.shape}")
        cm += m.confusion(pred, gt)
    scores = m.iou_f1(cm, include_background=args.include_background, names=names)
    merged = None
    if groups:
        try:
            merged = m.group_scores(m.merge_confusion(cm, list(groups.values())), tuple(groups))
        except ValueError as exc:
            raise UsageError(f"--groups: {exc}") from None
    report = m.format_report(scores, merged)
    if args.report:
        Path(args.report).write_text(report)
    if not args.quiet:
        sys.stdout.write(report)
    return EXIT_OK


def cmd_augbox(args, cfg: Config) -> int:
    bbox = resolve_bbox(cfg.bbox)
    for k in range(args.start, args.start + args.count):
        print(wp.augment_bbox(bbox, cfg.augment, k))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--size", default=argparse.SUPPRESS, help="Tanh-polar raster size HxW (default 512x512)")
    common.add_argument("--bbox", default=argparse.SUPPRESS, help="face box x,y,w,h or a file holding it")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="augmentation seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="key=value config file")

    parser = _Parser(prog="tanhpolar", description="RoI Tanh-polar warping tools", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("warp", parents=[common], help="warp an image into Tanh-polar space")
    p.add_argument("input", help="PNG image, class-index mask (with --onehot) or raw tensor")
    p.add_argument("output", help="PNG output, or raw tensor for any other extension")
    p.add_argument("--border", choices=[b.value for b in wp.BorderPolicy])
    p.add_argument("--onehot", type=int, metavar="C", help="treat the input as a C-class mask and warp its one-hot encoding")
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("unwarp", parents=[common], help="map Tanh-polar scores or images back to Cartesian")
    p.add_argument("input", help="raw score tensor (1, C, H, W) or single-channel PNG")
    p.add_argument("output", help="PNG (label mask or image) or raw tensor")
    p.add_argument("--orig", required=True, help="original image size HxW")
    p.add_argument("--overlay", help="also write a palette-coloured mask here")
    p.set_defaults(func=cmd_unwarp)

    p = sub.add_parser("griddump", parents=[common], help="write a sampling grid to a binary file")
    p.add_argument("direction", choices=tio.GRID_DIRECTIONS)
    p.add_argument("output")
    p.add_argument("--orig", help="Cartesian output size HxW (inverse grids)")
    p.add_argument("--float64", action="store_true", help="store coordinates as float64")
    p.set_defaults(func=cmd_griddump)

    p = sub.add_parser("check", parents=[common], help="run invariant self-checks")
    p.add_argument("suite", help=f"one of {', '.join(checks.suite_names())}")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("eval", parents=[common], help="IoU / F1 report for predicted masks")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--groups", help="'ibugmask' or 'name=i,j;name2=k'")
    p.add_argument("--report", help="write the key=value report here")
    p.add_argument("--classes", type=int, help="number of classes (default from config, 11)")
    p.add_argument("--include-background", action="store_true", help="count class 0 in the means")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augbox", parents=[common], help="print randomly shifted and scaled boxes")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--start", type=int, default=0, help="first draw index")
    p.set_defaults(func=cmd_augbox)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        cfg = load_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"tanhpolar: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidBBoxError as exc:
        print(f"tanhpolar: invalid bbox: {exc}", file=sys.stderr)
        return EXIT_BBOX
    except ShapeError as exc:
        print(f"tanhpolar: shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except tio.TensorFormatError as exc:
        print(f"tanhpolar: {exc}", file=sys.stderr)
        return EXIT_SHAPE if exc.shape_mismatch else EXIT_IO
    except (OSError, UnidentifiedImageError) as exc:
        print(f"tanhpolar: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # e.g. mask labels outside the declared class count
        print(f"tanhpolar: invalid input: {exc}", file=sys.stderr)
        return EXIT_SHAPE


if __name__ == "__main__":
    sys.exit(main())
