"""Tensors and the tape that records operations for reverse-mode differentiation.

Operations only record onto a :class:`Graph` while one is active::

    with Graph() as g:
        loss = logcosh_loss(model(x), y)
    backward(g, loss)

Outside a graph every op is a plain numpy computation, which is what
inference uses.
"""

from __future__ import annotations

import contextvars
from typing import Callable, Sequence

import numpy as np

_ACTIVE: contextvars.ContextVar["Graph | None"] = contextvars.ContextVar("graph", default=None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"


class Node:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: Callable):
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward


class Graph:
    """Topologically ordered tape of the ops run while it was active."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._produced: set[int] = set()
        self._token = None
        self.consumed = False

    def __enter__(self):
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.reset(self._token)
        self._token = None

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: Callable):
        self.nodes.append(Node(op, inputs, output, backward))
        self._produced.add(id(output))
        output.requires_grad = True

    def produced(self, t: Tensor) -> bool:
        return id(t) in self._produced

    def backward(self, loss: Tensor):
        if self.consumed:
            raise RuntimeError("graph was already differentiated; run the forward pass again")
        if not self.produced(loss):
            raise RuntimeError("loss was not computed on this graph; run the forward pass first")
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
        pending = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = pending.pop(id(node.output), None)
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in self._produced:
                    prev = pending.get(key)
                    pending[key] = gi if prev is None else prev + gi
                elif t.grad is None:
                    t.grad = np.array(gi, dtype=t.dtype, copy=True)
                else:
                    t.grad += gi
        self.nodes.clear()
        self._produced.clear()
        self.consumed = True


def active_graph() -> Graph | None:
    return _ACTIVE.get()


def record(op: str, inputs: Sequence[Tensor], output: Tensor, backward: Callable) -> Tensor:
    """Register ``output`` on the active graph if any input takes part in differentiation."""
    g = _ACTIVE.get()
    if g is not None and any(t.requires_grad for t in inputs):
        g.record(op, inputs, output, backward)
    return output


def backward(graph: Graph, loss: Tensor):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf tensor."""
    graph.backward(loss)
