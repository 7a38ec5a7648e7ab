"""Image/operator persistence and run-configuration parsing."""

import numpy as np
import pytest

from wppsr.config import parse_config_file, resolve_config
from wppsr.errors import ConfigError
from wppsr.imageio import load_image, load_operator, save_image, save_operator
from wppsr.operators import FOURIER, STRIDED, ForwardOperator, gaussian_kernel


class TestImageIO:
    @pytest.mark.parametrize("suffix", [".png", ".pgm"])
    def test_byte_round_trip(self, tmp_path, suffix, rng):
        img = rng.integers(0, 256, size=(13, 17)).astype(np.float64) / 255.0
        path = tmp_path / f"img{suffix}"
        save_image(img, path)
        assert np.array_equal(load_image(path), img)

    def test_half_rounds_up(self, tmp_path):
        # 0.5 * 255 = 127.5 -> byte 128
        path = tmp_path / "half.png"
        save_image(np.full((2, 2), 0.5), path)
        assert np.all(load_image(path) == 128 / 255)

    def test_clamped_above_one(self, tmp_path):
        path = tmp_path / "clip.pgm"
        save_image(np.full((2, 2), 1.3), path)
        assert np.all(load_image(path) == 1.0)

    def test_clamped_below_zero(self, tmp_path):
        path = tmp_path / "clip.png"
        save_image(np.full((2, 2), -0.4), path)
        assert np.all(load_image(path) == 0.0)

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(np.zeros((2, 2)), tmp_path / "img.tiff")
        (tmp_path / "img.jpeg").write_bytes(b"")
        with pytest.raises(ValueError):
            load_image(tmp_path / "img.jpeg")

    def test_truncated_pgm(self, tmp_path):
        path = tmp_path / "trunc.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + b"\x00" * 7)
        with pytest.raises(ValueError):
            load_image(path)

    def test_wrong_maxval_pgm(self, tmp_path):
        path = tmp_path / "deep.pgm"
        path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
        with pytest.raises(ValueError):
            load_image(path)

    def test_pgm_with_comments(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x10\x20")
        img = load_image(path)
        assert np.array_equal(img, np.array([[16, 32]]) / 255.0)


class TestOperatorIO:
    def test_strided_round_trip(self, tmp_path):
        op = ForwardOperator(kernel=gaussian_kernel(16, 2.0), bias=0.05,
                             stride=4, mode=STRIDED)
        _, meta = save_operator(op, tmp_path)
        loaded = load_operator(meta)
        assert loaded.mode == STRIDED
        assert loaded.stride == 4
        assert loaded.bias == pytest.approx(0.05)
        # kernels travel through an 8-bit affine codec
        assert np.abs(loaded.kernel - op.kernel).max() < (op.kernel.max() / 255)

    def test_fourier_round_trip(self, tmp_path):
        op = ForwardOperator(kernel=gaussian_kernel(15, 2.5), bias=-0.01,
                             stride=2, mode=FOURIER, target_shape=(45, 45))
        _, meta = save_operator(op, tmp_path)
        loaded = load_operator(meta)
        assert loaded.mode == FOURIER
        assert loaded.target_shape == (45, 45)
        assert loaded.bias == pytest.approx(-0.01)

    def test_missing_field(self, tmp_path):
        meta = tmp_path / "bad_meta.txt"
        meta.write_text("mode = strided\nstride = 2\n")
        with pytest.raises(ConfigError):
            load_operator(meta)


class TestConfig:
    def test_parse_file_with_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nlam = 12.5\n\npatch_size = 6\n")
        assert parse_config_file(path) == {"lam": "12.5", "patch_size": "6"}

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lam = 1\nlam = 2\n")
        with pytest.raises(ConfigError):
            parse_config_file(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lam 12.5\n")
        with pytest.raises(ConfigError, match="run.cfg:1"):
            parse_config_file(path)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            resolve_config("w2", {"imaginary_key": "1"}, {})

    def test_required_key_enforced(self):
        with pytest.raises(ConfigError, match="image_a"):
            resolve_config("w2", {"image_b": "b.png"}, {})

    def test_defaults_and_overrides(self):
        cfg = resolve_config(
            "w2",
            {"image_a": "a.png", "image_b": "b.png", "patch_size": "4"},
            {"patch_size": "5"},
        )
        assert cfg["patch_size"] == 5  # flag beats file
        assert cfg["dual_steps"] == 20  # schema default

    def test_numeric_validation_names_key(self):
        with pytest.raises(ConfigError, match="patch_size"):
            resolve_config(
                "w2", {"image_a": "a", "image_b": "b", "patch_size": "0"}, {}
            )
        with pytest.raises(ConfigError, match="dual_step_size"):
            resolve_config(
                "w2",
                {"image_a": "a", "image_b": "b", "dual_step_size": "-1"},
                {},
            )
