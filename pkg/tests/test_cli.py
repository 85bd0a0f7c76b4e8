import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from tanhpolar import io as tio
from tanhpolar.cli import build_parser, load_config, main
from tanhpolar.geometry import FACE_RHO, BBox, tc_to_tp, tp_to_tc
from tanhpolar.metrics import LabelMask, parse_report
from tanhpolar.nnkernel import load_tensor, save_tensor, tc_axes
from tanhpolar.synthetic import disk_image, face_mask, smooth_image
from tanhpolar.warp import polar_axes


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ("SIZE", "BBOX", "SEED", "BORDER", "LAMBDA", "CLASSES", "PALETTE"):
        monkeypatch.delenv("TANHPOLAR_" + key, raising=False)


@pytest.fixture
def image_png(tmp_path):
    path = tmp_path / "img.png"
    tio.write_image(path, smooth_image(96, 128, channels=3, seed=3))
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_negative_width(self, image_png, tmp_path, capsys):
        assert run("warp", image_png, tmp_path / "o.png", "--bbox", "0,0,-5,10") == 3
        err = capsys.readouterr().err
        assert "field 'w'" in err

    def test_malformed_bbox(self, image_png, tmp_path):
        assert run("warp", image_png, tmp_path / "o.png", "--bbox", "1,2,3") == 3

    def test_missing_bbox(self, image_png, tmp_path):
        assert run("warp", image_png, tmp_path / "o.png") == 3

    def test_missing_input(self, tmp_path):
        assert run("warp", tmp_path / "nope.png", tmp_path / "o.png", "--bbox", "0,0,10,10") == 2

    def test_not_an_image(self, tmp_path):
        (tmp_path / "junk.png").write_bytes(b"hello")
        assert run("warp", tmp_path / "junk.png", tmp_path / "o.png", "--bbox", "0,0,10,10") == 2

    def test_truncated_tensor(self, tmp_path):
        path = tmp_path / "s.bin"
        save_tensor(path, np.zeros((1, 3, 8, 8), np.float32))
        path.write_bytes(path.read_bytes()[:-16])
        assert run("unwarp", path, tmp_path / "o.png", "--bbox", "0,0,10,10", "--orig", "16x16", "--size", "8x8") == 4

    def test_eval_shape_mismatch(self, tmp_path):
        tio.write_mask(tmp_path / "a.png", LabelMask(np.zeros((4, 4), int), 11))
        tio.write_mask(tmp_path / "b.png", LabelMask(np.zeros((4, 5), int), 11))
        assert run("eval", "--pred", tmp_path / "a.png", "--gt", tmp_path / "b.png") == 4

    def test_unknown_suite(self, capsys):
        assert run("check", "nonsense") == 5
        assert "geometry" in capsys.readouterr().err

    def test_no_subcommand(self):
        assert run() == 5

    def test_unknown_flag(self):
        assert run("augbox", "--bogus") == 5

    def test_bad_config_key(self, tmp_path):
        (tmp_path / "c.cfg").write_text("colour=red\n")
        assert run("augbox", "--bbox", "0,0,10,10", "--config", tmp_path / "c.cfg") == 5

    def test_inverse_grid_needs_orig(self, tmp_path):
        assert run("griddump", "inverse", tmp_path / "g.bin", "--bbox", "0,0,10,10") == 5


class TestWarp:
    def test_png_output_size(self, image_png, tmp_path):
        out = tmp_path / "tp.png"
        assert run("warp", image_png, out, "--bbox", "30,20,60,50", "--size", "64x80") == 0
        with Image.open(out) as im:
            assert im.size == (80, 64) and im.mode == "RGB"

    def test_face_boundary_near_column_390(self, tmp_path):
        box = BBox(156, 156, 200, 200)
        tio.write_image(tmp_path / "disk.png", disk_image(512, 512, box))
        assert run("warp", tmp_path / "disk.png", tmp_path / "tp.bin", "--bbox", box) == 0
        tp = load_tensor(tmp_path / "tp.bin")[0, 0]
        edges = np.argmax(-np.diff(tp, axis=1), axis=1) + 0.5
        assert abs(edges.mean() - (FACE_RHO * 512 - 0.5)) < 0.5
        assert int(np.sum(polar_axes(512, 512)[1] < FACE_RHO)) == 390

    def test_bbox_sidecar_file(self, image_png, tmp_path):
        (tmp_path / "box.txt").write_text("30,20,60,50\n")
        assert run("warp", image_png, tmp_path / "a.bin", "--bbox", tmp_path / "box.txt", "--size", "32x32") == 0
        assert run("warp", image_png, tmp_path / "b.bin", "--bbox", "30,20,60,50", "--size", "32x32") == 0
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_deterministic(self, image_png, tmp_path):
        for name in ("a.png", "b.png"):
            assert run("warp", image_png, tmp_path / name, "--bbox", "30,20,60,50", "--size", "48x48") == 0
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


class TestUnwarp:
    def test_constant_single_channel(self, tmp_path):
        Image.fromarray(np.full((32, 32), 128, np.uint8)).save(tmp_path / "c.png")
        assert run("unwarp", tmp_path / "c.png", tmp_path / "o.png", "--bbox", "10,10,40,30", "--orig", "50x60",
                   "--size", "32x32") == 0
        out = np.asarray(Image.open(tmp_path / "o.png"))
        assert out.shape == (50, 60) and np.all(out == 128)

    def test_values_stay_in_range(self, image_png, tmp_path):
        assert run("warp", image_png, tmp_path / "tp.bin", "--bbox", "30,20,60,50", "--size", "64x64") == 0
        assert run("unwarp", tmp_path / "tp.bin", tmp_path / "back.bin", "--bbox", "30,20,60,50",
                   "--orig", "96x128", "--size", "64x64") == 0
        back = load_tensor(tmp_path / "back.bin")
        assert back.shape == (1, 3, 96, 128)
        assert back.min() >= 0 and back.max() <= 1

    def test_mask_round_trip_and_eval(self, tmp_path, capsys):
        box = BBox(58, 48, 140, 160)
        gt = face_mask(256, 256, box)
        tio.write_mask(tmp_path / "gt.png", gt)
        common = ["--bbox", box, "--size", "256x256"]
        assert run("warp", tmp_path / "gt.png", tmp_path / "tp.bin", "--onehot", 11, *common) == 0
        assert run("unwarp", tmp_path / "tp.bin", tmp_path / "pred.png", "--orig", "256x256",
                   "--overlay", tmp_path / "ov.png", *common) == 0
        assert run("eval", "--pred", tmp_path / "pred.png", "--gt", tmp_path / "gt.png", "--groups", "ibugmask",
                   "--report", tmp_path / "r.txt", "--quiet") == 0
        report = parse_report((tmp_path / "r.txt").read_text())
        assert all(report[f"class.{n}.iou"] >= 0.9 for n in ("skin", "nose", "hair", "left_eye"))
        assert report["group.inner_parts.f1"] > 0.9
        with Image.open(tmp_path / "ov.png") as im:
            assert im.mode == "RGB" and im.size == (256, 256)

    def test_scores_to_raw(self, tmp_path):
        save_tensor(tmp_path / "s.bin", np.random.default_rng(0).random((1, 3, 16, 16)).astype(np.float32))
        assert run("unwarp", tmp_path / "s.bin", tmp_path / "o.bin", "--bbox", "5,5,20,20", "--orig", "30x30",
                   "--size", "16x16") == 0
        assert load_tensor(tmp_path / "o.bin").shape == (1, 3, 30, 30)


class TestGridDump:
    @pytest.mark.parametrize("direction", ["forward", "inverse", "tp2tc", "tc2tp"])
    def test_byte_length(self, tmp_path, direction):
        path = tmp_path / "g.bin"
        assert run("griddump", direction, path, "--bbox", "10,10,40,40", "--size", "24x20", "--orig", "24x20") == 0
        assert len(path.read_bytes()) == 16 + 8 * 24 * 20
        name, coords = tio.load_grid(path)
        assert name == direction and coords.shape == (24, 20, 2)

    def test_forward_first_column_near_centre(self, tmp_path):
        assert run("griddump", "forward", tmp_path / "g.bin", "--bbox", "10,20,100,80", "--size", "64x64") == 0
        _, coords = tio.load_grid(tmp_path / "g.bin")
        np.testing.assert_allclose(coords[:, 0], np.tile([60.0, 60.0], (64, 1)), atol=1.0)

    def test_tp2tc_tc2tp_compose_to_identity(self, tmp_path):
        H, W = 48, 40
        for d in ("tp2tc", "tc2tp"):
            assert run("griddump", d, tmp_path / f"{d}.bin", "--size", f"{H}x{W}", "--float64") == 0
        _, to_tp = tio.load_grid(tmp_path / "tp2tc.bin")  # TP raster positions of TC pixels
        _, to_tc = tio.load_grid(tmp_path / "tc2tp.bin")  # TC raster positions of TP pixels
        thetas, rhos = polar_axes(H, W)
        u2, u1 = tc_axes(H, W)
        # TP pixel -> TC position from the file -> back to TP with the closed form
        uu1 = to_tc[..., 0] / W * 2 - 1
        uu2 = to_tc[..., 1] / H * 2 - 1
        theta, rho = tc_to_tp((uu1, uu2))
        np.testing.assert_allclose(rho, np.tile(rhos, (H, 1)), rtol=0, atol=1e-9)
        dtheta = np.angle(np.exp(1j * (theta - thetas[:, None])))
        assert np.max(np.abs(dtheta)) < 1e-9
        # TC pixel -> TP position from the file -> back to TC with the closed form
        t = to_tp[..., 1] / H * 2 * np.pi - np.pi
        r = to_tp[..., 0] / W
        v1, v2 = tp_to_tc((t, r))
        np.testing.assert_allclose(v1, np.tile(u1, (H, 1)), rtol=0, atol=1e-9)
        np.testing.assert_allclose(v2, np.tile(u2[:, None], (1, W)), rtol=0, atol=1e-9)

    def test_header(self, tmp_path):
        assert run("griddump", "tc2tp", tmp_path / "g.bin", "--size", "8x6") == 0
        data = (tmp_path / "g.bin").read_bytes()
        assert data[:4] == b"TPG4"
        assert np.frombuffer(data[4:16], "<u4").tolist() == [3, 8, 6]


class TestConfig:
    def test_precedence(self, tmp_path, monkeypatch):
        cfg_file = tmp_path / "c.cfg"
        cfg_file.write_text("# comment\nsize=64x64\nseed=3\nlambda=0.25\n")
        parser = build_parser()
        cfg = load_config(parser.parse_args(["augbox", "--config", str(cfg_file)]))
        assert (cfg.H, cfg.W, cfg.augment.seed, cfg.lam) == (64, 64, 3, 0.25)
        monkeypatch.setenv("TANHPOLAR_SIZE", "32x40")
        cfg = load_config(parser.parse_args(["augbox", "--config", str(cfg_file)]))
        assert (cfg.H, cfg.W, cfg.augment.seed) == (32, 40, 3)
        cfg = load_config(parser.parse_args(["augbox", "--config", str(cfg_file), "--size", "16x16"]))
        assert (cfg.H, cfg.W) == (16, 16)

    def test_defaults(self):
        cfg = load_config(build_parser().parse_args(["augbox"]))
        assert (cfg.H, cfg.W, cfg.lam, cfg.classes) == (512, 512, 0.5, 11)

    def test_env_size_reaches_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TANHPOLAR_SIZE", "10x12")
        assert run("griddump", "tp2tc", tmp_path / "g.bin") == 0
        assert len((tmp_path / "g.bin").read_bytes()) == 16 + 8 * 120

    def test_flag_before_subcommand(self, tmp_path):
        assert run("--size", "10x12", "griddump", "tp2tc", tmp_path / "g.bin") == 0
        assert len((tmp_path / "g.bin").read_bytes()) == 16 + 8 * 120


class TestAugbox:
    def test_deterministic_and_seeded(self, capsys):
        assert run("augbox", "--bbox", "10,20,100,120", "--count", 3, "--seed", 7) == 0
        first = capsys.readouterr().out
        assert run("augbox", "--bbox", "10,20,100,120", "--count", 3, "--seed", 7) == 0
        assert capsys.readouterr().out == first
        assert run("augbox", "--bbox", "10,20,100,120", "--count", 3, "--seed", 8) == 0
        assert capsys.readouterr().out != first
        lines = first.splitlines()
        assert len(lines) == 3
        for line in lines:
            box = BBox.parse(line)
            assert 90 <= box.w <= 110 and abs(box.h / box.w - 1.2) < 1e-9

    def test_start_index(self, capsys):
        run("augbox", "--bbox", "0,0,50,50", "--count", 3)
        all_three = capsys.readouterr().out.splitlines()
        run("augbox", "--bbox", "0,0,50,50", "--start", 2)
        assert capsys.readouterr().out.splitlines() == all_three[2:]


class TestCheck:
    def test_geometry_suite_passes(self, capsys):
        assert run("check", "geometry") == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_console_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "tanhpolar.cli", "check", "metrics"], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
