"""Central finite-difference checks for the op set, in float64.

Used by the test suite and by ``densesr gradcheck``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .tensor import Graph, Tensor, backward, record


@dataclass
class CheckResult:
    name: str
    rel_err: float
    checked: int
    skipped: int

    def passed(self, tol: float = 1e-4) -> bool:
        return self.rel_err < tol and self.skipped <= max(1, self.checked // 10)


def project(t: Tensor, r: np.ndarray) -> Tensor:
    """sum(t * r): turns any tensor into a scalar with a known gradient."""
    out = Tensor(np.array(np.sum(t.data.astype(np.float64) * r)), dtype=np.float64)
    return record("project", (t,), out, lambda g: ((float(g) * r).astype(t.dtype),))


def _kinks(g: Graph) -> list[np.ndarray]:
    return [n.output.data > 0 for n in g.nodes if n.op in ("relu", "leaky_relu")]


def _same(a, b) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def check(name: str, fn: Callable[[], Tensor], leaves: list[Tensor], h: float = 1e-3) -> CheckResult:
    """Compare analytic leaf grads of the scalar ``fn()`` with central differences.

    Coordinates whose perturbation flips a relu mask are skipped and counted.
    """
    for t in leaves:
        t.requires_grad = True
        t.grad = None
    with Graph() as g:
        loss = fn()
    base = _kinks(g)
    backward(g, loss)
    worst = 0.0
    checked = skipped = 0
    for t in leaves:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = np.zeros_like(t.data)
        valid = np.ones(t.data.shape, dtype=bool)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            vals = []
            for sign in (1, -1):
                flat[i] = orig + sign * h
                with Graph() as gp:
                    vals.append(fn().item())
                if not _same(base, _kinks(gp)):
                    valid.flat[i] = False
            flat[i] = orig
            numeric.flat[i] = (vals[0] - vals[1]) / (2 * h)
        checked += int(valid.sum())
        skipped += int((~valid).sum())
        if valid.any():
            a, n = analytic[valid], numeric[valid]
            scale = max(np.abs(a).max(), np.abs(n).max(), 1e-8)
            worst = max(worst, float(np.abs(a - n).max() / scale))
    return CheckResult(name, worst, checked, skipped)


def _rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), dtype=np.float64)


def op_checks(seed: int = 0) -> list[CheckResult]:
    """One finite-difference check per op and conv variant."""
    rng = np.random.default_rng(seed)
    results = []
    for k in (1, 3):
        for padding in ops.PADDINGS:
            for bias in (False, True):
                x, w = _rand(rng, 2, 3, 5, 6), _rand(rng, 4, 3, k, k)
                b = _rand(rng, 4) if bias else None
                r = rng.standard_normal((2, 4, 5, 6))
                leaves = [x, w] + ([b] if bias else [])
                results.append(check(f"conv2d k={k} pad={padding} bias={bias}",
                                     lambda x=x, w=w, b=b, p=padding, r=r: project(ops.conv2d(x, w, b, p), r),
                                     leaves))
    for name, fn in (("relu", ops.relu), ("leaky_relu", ops.leaky_relu)):
        x = _rand(rng, 2, 3, 4, 4)
        r = rng.standard_normal(x.shape)
        results.append(check(name, lambda x=x, r=r, fn=fn: project(fn(x), r), [x]))
    a, b = _rand(rng, 2, 3, 4, 4), _rand(rng, 2, 3, 4, 4)
    r = rng.standard_normal(a.shape)
    results.append(check("add", lambda: project(ops.add(a, b), r), [a, b]))
    c1, c2, c3 = _rand(rng, 2, 1, 4, 5), _rand(rng, 2, 3, 4, 5), _rand(rng, 2, 2, 4, 5)
    r6 = rng.standard_normal((2, 6, 4, 5))
    results.append(check("concat_channels", lambda: project(ops.concat_channels([c1, c2, c3]), r6),
                         [c1, c2, c3]))
    p, q = _rand(rng, 2, 2, 4, 4), _rand(rng, 2, 2, 4, 4)
    results.append(check("logcosh_loss", lambda: ops.logcosh_loss(p, q), [p, q]))
    return results


def random_composition(rng: np.random.Generator, max_ops: int = 5):
    """Build a random chain of <= ``max_ops`` ops ending in logcosh; returns (fn, leaves, label)."""
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 5))
    h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    x = _rand(rng, n, c, h, w)
    leaves = [x]
    steps, kinds = [], []
    for _ in range(int(rng.integers(1, max_ops + 1))):
        kind = str(rng.choice(["conv3", "conv1", "relu", "leaky_relu", "add", "concat"]))
        if kind in ("conv3", "conv1"):
            k = 3 if kind == "conv3" else 1
            cout = int(rng.integers(1, 5))
            wt = Tensor(rng.standard_normal((cout, c, k, k)) / np.sqrt(c * k * k), dtype=np.float64)
            bt = _rand(rng, cout) if rng.random() < 0.5 else None
            pad = str(rng.choice(ops.PADDINGS))
            leaves += [wt] + ([bt] if bt is not None else [])
            steps.append(lambda t, wt=wt, bt=bt, pad=pad: ops.conv2d(t, wt, bt, pad))
            c = cout
        elif kind in ("relu", "leaky_relu"):
            steps.append(getattr(ops, kind))
        elif kind == "add":
            other = _rand(rng, n, c, h, w)
            leaves.append(other)
            steps.append(lambda t, o=other: ops.add(t, o))
        else:
            extra = int(rng.integers(1, 4))
            other = _rand(rng, n, extra, h, w)
            leaves.append(other)
            first = rng.random() < 0.5
            steps.append(lambda t, o=other, first=first:
                         ops.concat_channels([o, t] if first else [t, o]))
            c += extra
        kinds.append(kind)
    target = _rand(rng, n, c, h, w)
    leaves.append(target)
    label = "->".join(kinds)

    def fn():
        t = x
        for s in steps:
            t = s(t)
        return ops.logcosh_loss(t, target)

    return fn, leaves, label


def composition_checks(count: int = 50, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        fn, leaves, label = random_composition(rng)
        out.append(check(f"composition {i}: {label}", fn, leaves))
    return out
