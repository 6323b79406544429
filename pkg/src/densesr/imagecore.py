"""Planar float images, PNG I/O and the sRGB / linear / sigmoidal transfers.

Images are stored as ``(channels, height, width)`` float32 arrays tagged with
the colorspace they are encoded in. Every transfer checks the tag of its input
so a pipeline cannot silently apply the same conversion twice.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import png


class ColorSpace(enum.Enum):
    SRGB = "srgb"
    LINEAR = "linear"
    SIGMOIDAL = "sigmoidal"


class SpaceMismatchError(ValueError):
    """An operation received an image tagged with the wrong colorspace."""


class UnsupportedPNGError(ValueError):
    pass


REC709_LUMA = (0.2126, 0.7152, 0.0722)


@dataclass(frozen=True)
class PlanarImage:
    samples: np.ndarray
    space: ColorSpace = ColorSpace.SRGB

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float32)
        if s.ndim == 2:
            s = s[None]
        if s.ndim != 3:
            raise ValueError(f"samples must be (C, H, W), got shape {s.shape}")
        if s.shape[0] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {s.shape[0]}")
        if s.shape[1] < 1 or s.shape[2] < 1:
            raise ValueError(f"image must be at least 1x1, got {s.shape[2]}x{s.shape[1]}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "space", ColorSpace(self.space))

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def height(self) -> int:
        return self.samples.shape[1]

    @property
    def width(self) -> int:
        return self.samples.shape[2]

    def with_samples(self, samples, space: ColorSpace | None = None) -> "PlanarImage":
        return PlanarImage(samples, self.space if space is None else space)

    def __repr__(self):
        return f"PlanarImage({self.width}x{self.height}x{self.channels}, {self.space.name})"


@dataclass(frozen=True)
class SigmoidalParams:
    """Inflection point ``alpha`` and slope ``beta`` of the sigmoidal transfer."""

    alpha: float = 0.5
    beta: float = 8.5

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


DEFAULT_SIGMOIDAL = SigmoidalParams()


def _require(img: PlanarImage, space: ColorSpace, op: str):
    if img.space is not space:
        raise SpaceMismatchError(f"{op} expects a {space.name} image, got {img.space.name}")


def _unit(x) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


# Scalar/array transfer curves, evaluated in float64 with inputs clamped to [0, 1].

def srgb_decode(v):
    v = _unit(v)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def srgb_encode(v):
    v = _unit(v)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * v ** (1 / 2.4) - 0.055)


def _logistic(y, alpha, beta):
    return 1.0 / (1.0 + np.exp(beta * (alpha - y)))


def sigmoidal_decode(y, alpha=0.5, beta=8.5):
    """Sigmoidal-encoded value -> linear light."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    y = _unit(y)
    lo = _logistic(0.0, alpha, beta)
    hi = _logistic(1.0, alpha, beta)
    return (_logistic(y, alpha, beta) - lo) / (hi - lo)


def sigmoidal_encode(x, alpha=0.5, beta=8.5):
    """Linear light -> sigmoidal-encoded value (analytic inverse of ``sigmoidal_decode``)."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    x = _unit(x)
    lo = _logistic(0.0, alpha, beta)
    hi = _logistic(1.0, alpha, beta)
    u = x * (hi - lo) + lo
    out = alpha - np.log(1.0 / u - 1.0) / beta
    # the endpoints are fixed points; pin them against log rounding
    return np.clip(np.where(x == 0, 0.0, np.where(x == 1, 1.0, out)), 0.0, 1.0)


def srgb_to_linear(img: PlanarImage) -> PlanarImage:
    _require(img, ColorSpace.SRGB, "srgb_to_linear")
    return PlanarImage(srgb_decode(img.samples), ColorSpace.LINEAR)


def linear_to_srgb(img: PlanarImage) -> PlanarImage:
    _require(img, ColorSpace.LINEAR, "linear_to_srgb")
    return PlanarImage(srgb_encode(img.samples), ColorSpace.SRGB)


def sigmoidal_to_linear(img: PlanarImage, p: SigmoidalParams = DEFAULT_SIGMOIDAL) -> PlanarImage:
    _require(img, ColorSpace.SIGMOIDAL, "sigmoidal_to_linear")
    return PlanarImage(sigmoidal_decode(img.samples, p.alpha, p.beta), ColorSpace.LINEAR)


def linear_to_sigmoidal(img: PlanarImage, p: SigmoidalParams = DEFAULT_SIGMOIDAL) -> PlanarImage:
    _require(img, ColorSpace.LINEAR, "linear_to_sigmoidal")
    return PlanarImage(sigmoidal_encode(img.samples, p.alpha, p.beta), ColorSpace.SIGMOIDAL)


def convert(img: PlanarImage, to: ColorSpace, p: SigmoidalParams = DEFAULT_SIGMOIDAL) -> PlanarImage:
    """Walk the SRGB <-> LINEAR <-> SIGMOIDAL chain until ``img`` is in ``to``."""
    to = ColorSpace(to)
    while img.space is not to:
        if img.space is ColorSpace.SRGB:
            img = srgb_to_linear(img)
        elif img.space is ColorSpace.SIGMOIDAL:
            img = sigmoidal_to_linear(img, p)
        elif to is ColorSpace.SIGMOIDAL:
            img = linear_to_sigmoidal(img, p)
        else:
            img = linear_to_srgb(img)
    return img


def to_grayscale(img: PlanarImage, coeffs=REC709_LUMA) -> PlanarImage:
    """Weighted channel sum; apply it to LINEAR images for physical luminance."""
    if img.channels != 3:
        raise ValueError(f"to_grayscale needs a 3-channel image, got {img.channels}")
    w = np.asarray(coeffs, dtype=np.float64).reshape(3, 1, 1)
    y = (img.samples.astype(np.float64) * w).sum(axis=0, keepdims=True)
    return PlanarImage(y, img.space)


# -- PNG ---------------------------------------------------------------------

def read_png(path, space: ColorSpace = ColorSpace.SRGB) -> PlanarImage:
    """Read an 8/16-bit grayscale or RGB PNG (palette images are expanded)."""
    try:
        width, height, rows, info = png.Reader(filename=str(path)).asDirect()
        data = np.vstack([np.asarray(r, dtype=np.float64) for r in rows])
    except png.Error as e:
        raise UnsupportedPNGError(f"{path}: {e}") from e
    if info.get("alpha"):
        raise UnsupportedPNGError(f"{path}: alpha channels are not supported")
    planes = info["planes"]
    if planes not in (1, 3):
        raise UnsupportedPNGError(f"{path}: unsupported PNG layout with {planes} planes")
    maxval = float(2 ** info["bitdepth"] - 1)
    data = data.reshape(height, width, planes).transpose(2, 0, 1) / maxval
    return PlanarImage(np.clip(data, 0.0, 1.0), space)


def quantize(samples, bit_depth: int = 8) -> np.ndarray:
    """Clamp to [0, 1] and round half up onto the integer grid of ``bit_depth``."""
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    maxval = 2 ** bit_depth - 1
    q = np.floor(np.clip(np.asarray(samples, dtype=np.float64), 0.0, 1.0) * maxval + 0.5)
    return q.astype(np.uint16 if bit_depth == 16 else np.uint8)


def write_png(img: PlanarImage, path, bit_depth: int = 8):
    q = quantize(img.samples, bit_depth)
    c, h, w = q.shape
    rows = q.transpose(1, 2, 0).reshape(h, w * c)
    writer = png.Writer(width=w, height=h, greyscale=(c == 1), bitdepth=bit_depth)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        writer.write(f, rows.tolist())
