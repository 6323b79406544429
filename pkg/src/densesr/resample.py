"""Separable resampling kernels, the Gaussian-Spline anti-ringing upsampler and
the Catmull-Rom degradation used to build LR inputs."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import ndimage

from .imagecore import PlanarImage


class Kernel(enum.Enum):
    CATMULL_ROM = "catrom"
    SPLINE36 = "spline36"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    kind: Kernel
    sigma: float = 0.5  # GAUSSIAN only, in kernel (filter-space) units

    def __post_init__(self):
        object.__setattr__(self, "kind", Kernel(self.kind))
        if self.kind is Kernel.GAUSSIAN and not self.sigma > 0:
            raise ValueError(f"gaussian sigma must be positive, got {self.sigma}")

    @property
    def support_radius(self) -> float:
        if self.kind is Kernel.CATMULL_ROM:
            return 2.0
        if self.kind is Kernel.SPLINE36:
            return 3.0
        return float(math.ceil(3 * self.sigma))


CATMULL_ROM = KernelSpec(Kernel.CATMULL_ROM)
SPLINE36 = KernelSpec(Kernel.SPLINE36)
GAUSSIAN = KernelSpec(Kernel.GAUSSIAN, 0.5)


def _catmull_rom(x):
    x2, x3 = x * x, x * x * x
    near = 1.5 * x3 - 2.5 * x2 + 1.0
    far = -0.5 * x3 + 2.5 * x2 - 4.0 * x + 2.0
    return np.where(x < 1, near, np.where(x < 2, far, 0.0))


def _spline36(x):
    a = x
    b = x - 1
    c = x - 2
    k0 = ((13 / 11 * a - 453 / 209) * a - 3 / 209) * a + 1
    k1 = ((-6 / 11 * b + 270 / 209) * b - 156 / 209) * b
    k2 = ((1 / 11 * c - 45 / 209) * c + 26 / 209) * c
    return np.where(x < 1, k0, np.where(x < 2, k1, np.where(x < 3, k2, 0.0)))


def kernel_eval(spec: KernelSpec, x):
    """Kernel weight at distance ``|x|``; zero outside the support.

    The Gaussian is left unnormalized (peak 1); every resampler renormalizes
    its taps anyway.
    """
    x = np.abs(np.asarray(x, dtype=np.float64))
    if spec.kind is Kernel.CATMULL_ROM:
        out = _catmull_rom(x)
    elif spec.kind is Kernel.SPLINE36:
        out = _spline36(x)
    else:
        out = np.where(x <= spec.support_radius, np.exp(-0.5 * (x / spec.sigma) ** 2), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class AxisPlan:
    """Taps for one axis: ``out[i] = sum_k weights[i, k] * src[index[i, k]]``."""

    src: int
    dst: int
    index: np.ndarray
    weights: np.ndarray

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dst, self.src))
        rows = np.repeat(np.arange(self.dst), self.index.shape[1])
        np.add.at(m, (rows, self.index.ravel()), self.weights.ravel())
        m.setflags(write=False)
        return m


@lru_cache(maxsize=256)
def axis_plan(src: int, dst: int, spec: KernelSpec) -> AxisPlan:
    """Center-aligned taps with filter-space stretching on downscale and
    clamp-to-edge borders."""
    if src < 1 or dst < 1:
        raise ValueError(f"resample sizes must be positive, got {src} -> {dst}")
    scale = src / dst
    stretch = max(1.0, scale)
    radius = spec.support_radius * stretch
    centers = (np.arange(dst) + 0.5) * scale - 0.5
    first = np.floor(centers - radius).astype(int)
    ntaps = int(math.ceil(2 * radius)) + 2
    pos = first[:, None] + np.arange(ntaps)[None, :]
    w = kernel_eval(spec, (pos - centers[:, None]) / stretch)
    w = np.where(np.abs(pos - centers[:, None]) <= radius, w, 0.0)
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(pos, 0, src - 1)
    idx.setflags(write=False)
    w.setflags(write=False)
    return AxisPlan(src, dst, idx, w)


@dataclass(frozen=True)
class ResamplePlan:
    src_w: int
    src_h: int
    dst_w: int
    dst_h: int
    x: AxisPlan
    y: AxisPlan


def make_plan(src_w, src_h, dst_w, dst_h, spec: KernelSpec) -> ResamplePlan:
    return ResamplePlan(src_w, src_h, dst_w, dst_h,
                        axis_plan(src_w, dst_w, spec), axis_plan(src_h, dst_h, spec))


def resample_array(a: np.ndarray, dst_w: int, dst_h: int, spec: KernelSpec) -> np.ndarray:
    """Resample the last two axes of ``a`` (horizontal pass, then vertical)."""
    a = np.asarray(a, dtype=np.float64)
    plan = make_plan(a.shape[-1], a.shape[-2], dst_w, dst_h, spec)
    out = a @ plan.x.matrix.T
    return plan.y.matrix @ out


def resize(img: PlanarImage, dst_w: int, dst_h: int, spec: KernelSpec) -> PlanarImage:
    if dst_w < 1 or dst_h < 1:
        raise ValueError(f"target size must be at least 1x1, got {dst_w}x{dst_h}")
    return img.with_samples(resample_array(img.samples, dst_w, dst_h, spec))


def crop_to_multiple(img: PlanarImage, scale: int) -> PlanarImage:
    h = img.height - img.height % scale
    w = img.width - img.width % scale
    if h == 0 or w == 0:
        raise ValueError(f"image {img.width}x{img.height} is smaller than scale {scale}")
    return img.with_samples(img.samples[:, :h, :w])


def degrade(img_hr: PlanarImage, scale: int, crop: bool = False) -> PlanarImage:
    """Catmull-Rom downscale by an integer factor (the assumed LR degradation)."""
    if scale not in (2, 4, 8, 16):
        raise ValueError(f"degrade scale must be 2, 4, 8 or 16, got {scale}")
    if img_hr.width % scale or img_hr.height % scale:
        if not crop:
            raise ValueError(
                f"{img_hr.width}x{img_hr.height} is not divisible by {scale}; pass crop=True")
        img_hr = crop_to_multiple(img_hr, scale)
    return resize(img_hr, img_hr.width // scale, img_hr.height // scale, CATMULL_ROM)


def gs_upsample_array(a: np.ndarray, scale: int, sigma: float = 0.5) -> np.ndarray:
    if not isinstance(scale, (int, np.integer)) or scale < 2:
        raise ValueError(f"upsample scale must be an integer >= 2, got {scale}")
    a = np.asarray(a, dtype=np.float64)
    h, w = a.shape[-2:]
    sharp = resample_array(a, w * scale, h * scale, SPLINE36)
    soft = resample_array(a, w * scale, h * scale, KernelSpec(Kernel.GAUSSIAN, sigma))
    size = (1,) * (a.ndim - 2) + (3, 3)
    lo = ndimage.minimum_filter(soft, size=size, mode="nearest")
    hi = ndimage.maximum_filter(soft, size=size, mode="nearest")
    return np.clip(sharp, lo, hi)


def upsample_gs(img_lr: PlanarImage, scale: int, sigma: float = 0.5) -> PlanarImage:
    """Spline36 upscale clamped per pixel to the 3x3 min/max of a Gaussian upscale."""
    return img_lr.with_samples(gs_upsample_array(img_lr.samples, scale, sigma))
