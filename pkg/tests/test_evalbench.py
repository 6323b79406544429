import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from densesr.archmodel import ModelConfig, build_model
from densesr.evalbench import (PSNR_CAP, REFERENCE_TABLE, BenchmarkRecord, format_report, psnr,
                               run_benchmark, ssim, to_csv)
from densesr.imagecore import ColorSpace, PlanarImage, write_png
from densesr.trainer import Stage


def sk_ssim(a, b):
    return structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=1.0)


def mse_loops(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            s += (float(a[i, j]) - float(b[i, j])) ** 2
    return s / a.size


class TestPsnr:
    def test_identical_is_capped(self, rng):
        a = rng.random((8, 8))
        assert psnr(a, a) == PSNR_CAP

    def test_uniform_error(self, rng):
        a = rng.random((16, 16)) * 0.8
        assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_against_loop_oracle(self, rng):
        a, b = rng.random((2, 23, 17))
        assert psnr(a, b) == pytest.approx(10 * math.log10(1 / mse_loops(a, b)), abs=1e-9)

    def test_symmetric_and_shave(self, rng):
        a, b = rng.random((2, 20, 20))
        assert psnr(a, b) == psnr(b, a)
        b2 = b.copy()
        b2[:2] = 99
        assert psnr(a, b2, shave=2) == pytest.approx(10 * math.log10(1 / mse_loops(a[2:-2, 2:-2], b[2:-2, 2:-2])))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    def test_identical(self, rng):
        a = rng.random((32, 32))
        assert ssim(a, a) == 1.0

    def test_against_reference(self, rng):
        a = rng.random((40, 37))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert ssim(a, b) == pytest.approx(sk_ssim(a, b), abs=1e-9)

    def test_inverted_pattern(self):
        a = (np.indices((32, 32)).sum(0) // 4 % 2).astype(float)
        v = ssim(a, 1 - a)
        assert v < 0.5 and v == pytest.approx(sk_ssim(a, 1 - a), abs=1e-9)

    def test_constant_offset(self):
        a = np.full((24, 24), 0.5)
        assert ssim(a, a + 0.05) == pytest.approx(sk_ssim(a, a + 0.05), abs=1e-6)

    def test_symmetric(self, rng):
        a, b = rng.random((2, 30, 30))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-9

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


@pytest.fixture
def dataset(tmp_path, rng):
    hr = tmp_path / "Tiny" / "HR"
    hr.mkdir(parents=True)
    yy, xx = np.mgrid[0:48, 0:44] / 48.0
    for k in range(3):
        img = 0.5 + 0.3 * np.sin(40 * xx * (k + 1) + 20 * yy) * np.cos(30 * yy) + 0.1 * rng.random(xx.shape)
        rgb = np.stack([img, img ** 1.2, 1 - img])
        write_png(PlanarImage(np.clip(rgb, 0, 1), ColorSpace.SRGB), hr / f"img{k}.png")
    return tmp_path / "Tiny"


def zero_stages():
    model = build_model(ModelConfig.from_widths([(4, 1)]), init="zeros")
    return {r: Stage(r, model, 0.45, tile=32) for r in ("F2", "P4")}


class TestBenchmark:
    def test_zero_stages_equal_baseline(self, dataset):
        res = run_benchmark(dataset, 2, zero_stages())
        m = res.means()
        # models run in float32, so agreement is to float32 rounding
        assert m["densesr"].psnr == pytest.approx(m["GS-upscale"].psnr, abs=1e-4)
        assert m["densesr"].ssim == pytest.approx(m["GS-upscale"].ssim, abs=1e-6)
        assert len(res.records) == 8

    def test_csv_deterministic(self, dataset):
        a = to_csv(run_benchmark(dataset, 4, None).records)
        b = to_csv(run_benchmark(dataset, 4, None).records)
        assert a == b
        assert a.splitlines()[0] == "dataset,scale,method,image,psnr_db,ssim"

    def test_report_contains_reference_rows(self, dataset):
        rep = run_benchmark(dataset, 2, None).report
        assert "EDSR Set5 ×2 38.20 / 0.9606" in rep.splitlines()
        assert "Ours Set5 ×2 39.55 / 0.9665" in rep.splitlines()
        assert "RED30 Urban100 ×4 - / -" in rep.splitlines()
        assert "GS-upscale Tiny ×2" in rep

    def test_reference_grid(self):
        rows = format_report().splitlines()
        assert rows[2].split("  ")[0] == "Set5"
        assert len(REFERENCE_TABLE) == 8
        assert ("Set5      ×2     36.54 / 0.9544  36.66 / 0.9542  37.53 / 0.9587  37.66 / 0.9599  "
                "37.74 / 0.9591  38.20 / 0.9606  39.55 / 0.9665") in rows

    def test_empty_dataset(self, tmp_path):
        with pytest.raises(ValueError):
            run_benchmark(tmp_path, 2, None)

    def test_record_validation(self):
        with pytest.raises(ValueError):
            BenchmarkRecord("x", 2, "m", -1.0, 0.5)
        with pytest.raises(ValueError):
            BenchmarkRecord("x", 2, "m", 30.0, 1.5)
        assert BenchmarkRecord("x", 2, "m", 3.0, -0.2).line() == "m x ×2 3.00 / -0.2000"
