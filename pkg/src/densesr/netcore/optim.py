from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.lr > 0 or not self.eps > 0:
            raise ValueError("lr and eps must be positive")


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name, plus the step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, cfg: AdamConfig = AdamConfig(),
              t: int | None = None) -> AdamState:
    """One bias-corrected ADAM update, applied in place to ``params`` (name -> array).

    ``t`` defaults to ``state.t + 1``. Missing grads are treated as zero.
    """
    t = state.t + 1 if t is None else t
    if t < 1:
        raise ValueError(f"adam step index must be >= 1, got {t}")
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ValueError(f"grad shape {g.shape} does not match parameter {name!r} {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if m.shape != p.shape or v.shape != p.shape:
            raise ValueError(f"optimizer state for {name!r} has shape {m.shape}, expected {p.shape}")
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p -= (cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)).astype(p.dtype, copy=False)
    state.t = t
    return state
