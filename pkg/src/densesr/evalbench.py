"""PSNR / SSIM, benchmark runs over ``<dataset>/HR/*.png`` and the published
reference numbers they are reported against."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imagecore import ColorSpace, PlanarImage, convert, read_png, srgb_encode, to_grayscale
from .resample import crop_to_multiple, degrade
from .trainer import identity_stages, super_resolve

PSNR_CAP = 99.99

METHODS = ("A+", "SRCNN", "VDSR", "RED30", "DRRN", "EDSR", "Ours")
DATASETS = ("Set5", "Set14", "B100", "Urban100")

# (dataset, scale) -> one (psnr, ssim) per METHODS entry; None where no number was published
REFERENCE_TABLE: dict[tuple[str, int], tuple] = {
    ("Set5", 2): ((36.54, 0.9544), (36.66, 0.9542), (37.53, 0.9587), (37.66, 0.9599),
                  (37.74, 0.9591), (38.20, 0.9606), (39.55, 0.9665)),
    ("Set5", 4): ((30.28, 0.8603), (30.48, 0.8628), (31.35, 0.8838), (31.51, 0.8869),
                  (31.68, 0.8888), (32.62, 0.8984), (33.62, 0.9032)),
    ("Set14", 2): ((32.28, 0.9056), (32.42, 0.9063), (33.03, 0.9124), (32.94, 0.9144),
                   (33.23, 0.9136), (34.02, 0.9204), (34.65, 0.9264)),
    ("Set14", 4): ((27.32, 0.7491), (27.49, 0.7503), (28.01, 0.7674), (27.86, 0.7718),
                   (28.21, 0.7720), (28.94, 0.7901), (29.72, 0.8001)),
    ("B100", 2): ((31.21, 0.8863), (31.36, 0.8879), (31.90, 0.8960), (31.99, 0.8974),
                  (32.05, 0.8973), (32.37, 0.9018), (33.24, 0.9076)),
    ("B100", 4): ((26.82, 0.7087), (26.90, 0.7101), (27.29, 0.7251), (27.40, 0.7290),
                  (27.38, 0.7284), (27.79, 0.7437), (28.63, 0.7556)),
    ("Urban100", 2): ((29.20, 0.8938), (29.50, 0.8946), (30.76, 0.9140), None,
                      (31.23, 0.9188), (33.10, 0.9363), (32.42, 0.9272)),
    ("Urban100", 4): ((24.32, 0.7183), (24.52, 0.7221), (25.18, 0.7524), None,
                      (25.44, 0.7638), (26.86, 0.8080), (26.70, 0.7823)),
}


@dataclass(frozen=True)
class BenchmarkRecord:
    dataset: str
    scale: int
    method: str
    psnr: float | None
    ssim: float | None
    image: str = "mean"

    def __post_init__(self):
        if self.psnr is not None and not 0 <= self.psnr <= PSNR_CAP:
            raise ValueError(f"psnr out of range: {self.psnr}")
        if self.ssim is not None and not -1 - 1e-9 <= self.ssim <= 1 + 1e-9:
            raise ValueError(f"ssim out of range: {self.ssim}")

    def line(self) -> str:
        """``EDSR Set5 ×2 38.20 / 0.9606``"""
        return f"{self.method} {self.dataset} ×{self.scale} {_pair(self.psnr, self.ssim)}"


def _pair(p, s) -> str:
    return "- / -" if p is None else f"{p:.2f} / {s:.4f}"


def reference_records() -> list[BenchmarkRecord]:
    out = []
    for (ds, sc), row in REFERENCE_TABLE.items():
        for method, cell in zip(METHODS, row):
            p, s = (None, None) if cell is None else cell
            out.append(BenchmarkRecord(ds, sc, method, p, s))
    return out


# -- metrics ---------------------------------------------------------------------

def _plane(x) -> np.ndarray:
    a = x.samples if isinstance(x, PlanarImage) else np.asarray(x)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    return a


def _shaved(a, b, shave: int):
    a, b = _plane(a), _plane(b)
    if a.shape != b.shape:
        raise ValueError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    if shave:
        a = a[..., shave:-shave, shave:-shave]
        b = b[..., shave:-shave, shave:-shave]
    if a.size == 0:
        raise ValueError(f"shave={shave} leaves no pixels")
    return a, b


def psnr(a, b, shave: int = 0) -> float:
    """10*log10(1/MSE) for [0, 1] samples; identical inputs give ``PSNR_CAP``."""
    a, b = _shaved(a, b, shave)
    mse = float(np.mean((a - b) ** 2))
    return PSNR_CAP if mse == 0 else min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _filter_valid(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    a = sliding_window_view(a, w.size, axis=-1) @ w
    return sliding_window_view(a, w.size, axis=-2) @ w


def ssim(a, b, shave: int = 0, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully covered window positions (Gaussian window)."""
    a, b = _shaved(a, b, shave)
    if a.ndim != 2:
        raise ValueError("ssim expects single-channel images")
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape[1]}x{a.shape[0]} is smaller than the {window}px window")
    w = gaussian_window(window, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, w), _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def display_luma(img: PlanarImage) -> np.ndarray:
    """Gamma-encoded luminance plane the metrics are computed on."""
    if img.channels == 1:
        return _plane(convert(img, ColorSpace.SRGB))
    y = to_grayscale(convert(img, ColorSpace.LINEAR)).samples[0]
    return srgb_encode(y)


# -- benchmark -----------------------------------------------------------------------

@dataclass
class BenchmarkResult:
    records: list[BenchmarkRecord]
    report: str

    def means(self) -> dict[str, BenchmarkRecord]:
        return {r.method: r for r in self.records if r.image == "mean"}


def dataset_images(dataset_dir) -> list[Path]:
    root = Path(dataset_dir)
    hr = root / "HR"
    files = sorted((hr if hr.is_dir() else root).glob("*.png"))
    if not files:
        raise ValueError(f"no PNG images found under {hr}")
    return files


def mean_record(records: Sequence[BenchmarkRecord]) -> BenchmarkRecord:
    r0 = records[0]
    return BenchmarkRecord(r0.dataset, r0.scale, r0.method,
                           float(np.mean([r.psnr for r in records])),
                           float(np.mean([r.ssim for r in records])))


def evaluate(sr: PlanarImage, hr: PlanarImage, shave: int) -> tuple[float, float]:
    a, b = display_luma(sr), display_luma(hr)
    return psnr(a, b, shave), ssim(a, b, shave)


def run_benchmark(dataset_dir, scale: int, stages: Mapping[str, object] | None,
                  method: str = "densesr", dataset: str | None = None,
                  shave: int | None = None, baseline: bool = True) -> BenchmarkResult:
    """degrade -> super_resolve -> luminance PSNR/SSIM per image, then the mean.

    The Gaussian-Spline upscale (identity stages) is always measured alongside
    as ``GS-upscale`` unless ``baseline`` is False.
    """
    files = dataset_images(dataset_dir)
    dataset = dataset or Path(dataset_dir).name
    shave = scale if shave is None else shave
    runs = []
    if baseline:
        runs.append(("GS-upscale", identity_stages()))
    if stages is not None:
        runs.append((method, stages))
    if not runs:
        raise ValueError("nothing to benchmark")
    records = []
    for name, st in runs:
        per_image = []
        for f in files:
            hr = crop_to_multiple(read_png(f), scale)
            sr = super_resolve(degrade(hr, scale), scale, st)
            p, s = evaluate(sr, hr, shave)
            per_image.append(BenchmarkRecord(dataset, scale, name, p, s, f.name))
        records += per_image + [mean_record(per_image)]
    return BenchmarkResult(records, format_report(records))


def to_csv(records: Sequence[BenchmarkRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "scale", "method", "image", "psnr_db", "ssim"])
    for r in records:
        w.writerow([r.dataset, r.scale, r.method, r.image,
                    "" if r.psnr is None else f"{r.psnr:.4f}",
                    "" if r.ssim is None else f"{r.ssim:.6f}"])
    return buf.getvalue()


def format_report(measured: Sequence[BenchmarkRecord] = ()) -> str:
    """Grid of reference results (dataset/scale rows, method columns) with the
    measured means appended as extra columns, followed by one line per reference entry."""
    means = [r for r in measured if r.image == "mean"]
    extra = list(dict.fromkeys(r.method for r in means))
    cols = list(METHODS) + extra
    lookup = {(r.dataset, r.scale, r.method): r for r in means}
    keys = list(REFERENCE_TABLE) + sorted({(r.dataset, r.scale) for r in means} - set(REFERENCE_TABLE))
    rows = []
    for ds, sc in keys:
        ref = REFERENCE_TABLE.get((ds, sc))
        cells = []
        for i, m in enumerate(cols):
            if i < len(METHODS):
                cell = ref[i] if ref is not None else None
                cells.append(_pair(*cell) if cell else "- / -")
            else:
                r = lookup.get((ds, sc, m))
                cells.append(_pair(r.psnr, r.ssim) if r else "")
        rows.append([ds, f"×{sc}"] + cells)
    header = ["Dataset", "Scale"] + cols
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header).rstrip(), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*r).rstrip() for r in rows]
    lines += ["", "Reference results (PSNR dB / SSIM):"]
    lines += [r.line() for r in reference_records()]
    if means:
        lines += ["", "Measured (mean over images):"]
        lines += [r.line() for r in means]
    return "\n".join(lines) + "\n"
