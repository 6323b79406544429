"""The op set the network needs: same-size conv (1x1 / 3x3), relu, add,
channel concat and the logcosh loss. Activations are ``(N, C, H, W)``."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, record

PADDINGS = ("zeros", "edge")
_LOG2 = math.log(2.0)


def _im2col3(x: np.ndarray, padding: str) -> np.ndarray:
    """(N, C, H, W) -> (N, C*9, H*W), rows ordered (c, dy, dx) like a flattened weight."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="constant" if padding == "zeros" else "edge")
    cols = np.empty((n, c, 3, 3, h, w), dtype=x.dtype)
    for dy in range(3):
        for dx in range(3):
            cols[:, :, dy, dx] = xp[:, :, dy:dy + h, dx:dx + w]
    return cols.reshape(n, c * 9, h * w)


def _col2im3(cols: np.ndarray, shape, padding: str) -> np.ndarray:
    n, c, h, w = shape
    cols = cols.reshape(n, c, 3, 3, h, w)
    gp = np.zeros((n, c, h + 2, w + 2), dtype=cols.dtype)
    for dy in range(3):
        for dx in range(3):
            gp[:, :, dy:dy + h, dx:dx + w] += cols[:, :, dy, dx]
    if padding == "edge":
        gp[:, :, :, 1] += gp[:, :, :, 0]
        gp[:, :, :, -2] += gp[:, :, :, -1]
        gp[:, :, 1, :] += gp[:, :, 0, :]
        gp[:, :, -2, :] += gp[:, :, -1, :]
    return np.ascontiguousarray(gp[:, :, 1:-1, 1:-1])


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: str = "zeros") -> Tensor:
    """Cross-correlation with a 1x1 or 3x3 kernel; output keeps H and W."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input and weight, got {x.shape} and {w.shape}")
    n, cin, h, wd = x.shape
    cout, wcin, kh, kw = w.shape
    if wcin != cin:
        raise ValueError(f"conv2d channel mismatch: input has {cin}, weight expects {wcin}")
    if (kh, kw) not in ((1, 1), (3, 3)):
        raise ValueError(f"unsupported kernel size {kh}x{kw}; only 1x1 and 3x3")
    if padding not in PADDINGS:
        raise ValueError(f"unknown padding {padding!r}")
    if b is not None and b.shape != (cout,):
        raise ValueError(f"bias shape {b.shape} does not match {cout} output channels")

    wmat = w.data.reshape(cout, cin * kh * kw)
    cols = x.data.reshape(n, cin, h * wd) if kh == 1 else _im2col3(x.data, padding)
    out = np.matmul(wmat, cols)
    if b is not None:
        out += b.data[None, :, None]
    out = Tensor(out.reshape(n, cout, h, wd))
    del cols

    def _backward(g):
        gm = g.reshape(n, cout, h * wd)
        cols = x.data.reshape(n, cin, h * wd) if kh == 1 else _im2col3(x.data, padding)
        gw = gx = gb = None
        if w.requires_grad:
            acc = np.zeros_like(wmat)
            for i in range(n):
                acc += gm[i] @ cols[i].T
            gw = acc.reshape(w.shape)
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gm)
            gx = gcols.reshape(x.shape) if kh == 1 else _col2im3(gcols, x.shape, padding)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    inputs = (x, w) if b is None else (x, w, b)
    return record("conv2d", inputs, out, _backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0).astype(x.dtype, copy=False))
    return record("relu", (x,), out, lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.data > 0
    scale = np.where(mask, 1.0, slope).astype(x.dtype)
    out = Tensor(x.data * scale)
    return record("leaky_relu", (x,), out, lambda g: (g * scale,))


ACTIVATIONS = {"relu": relu, "leaky_relu": leaky_relu}


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return record("add", (a, b), Tensor(a.data + b.data), lambda g: (g, g))


def concat_channels(tensors) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat_channels needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors:
        if t.data.ndim != 4 or (t.shape[0], *t.shape[2:]) != (ref[0], *ref[2:]):
            raise ValueError(f"concat_channels mismatch: {t.shape} vs {ref}")
    if len(tensors) == 1:
        return tensors[0]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1))
    splits = np.cumsum([t.shape[1] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, splits, axis=1))

    return record("concat", tensors, out, _backward)


def logcosh(d) -> np.ndarray:
    """Overflow-free elementwise log(cosh(d))."""
    a = np.abs(np.asarray(d, dtype=np.float64))
    return a + np.log1p(np.exp(-2.0 * a)) - _LOG2


def logcosh_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean log-cosh error, reduced in float64."""
    if pred.shape != target.shape:
        raise ValueError(f"logcosh_loss shape mismatch: {pred.shape} vs {target.shape}")
    d = pred.data.astype(np.float64) - target.data
    out = Tensor(np.array(logcosh(d).mean()), dtype=np.float64)
    count = d.size

    def _backward(g):
        gd = np.tanh(d) * (float(g) / count)
        return gd.astype(pred.dtype), (-gd).astype(target.dtype)

    return record("logcosh", (pred, target), out, _backward)
