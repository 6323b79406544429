"""The densely connected high-order residual network, its parameter layout and
the on-disk checkpoint format.

Unit ``n`` owns an encoder and a decoder (``L_n`` conv3x3+activation layers of
``F_n`` filters each) and a 1x1 dimensionality-reduction block. With ``E_0``
the input image::

    E_n = Enc_n(E_0 | concat(D_1..D_{n-1}))        # dense; D_{n-1} otherwise
    D_n = E_n + Dec_n(concat(E_0..E_n))            # dense; E_n otherwise
    R_K = D_K,  R_n = D_n + DimRed_{n+1}(R_{n+1})
    out = E_0 + DimRed_1(R_1)                      # 1 filter, no bias, no activation
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .netcore import ACTIVATIONS, PADDINGS, AdamState, Tensor, add, concat_channels, conv2d


@dataclass(frozen=True)
class ResidualUnitSpec:
    order: int
    filters: int
    layers: int

    def __post_init__(self):
        if self.filters < 1 or self.layers < 1:
            raise ValueError(f"unit {self.order}: filters and layers must be positive")


TABLE1 = (
    ResidualUnitSpec(1, 64, 2),
    ResidualUnitSpec(2, 128, 2),
    ResidualUnitSpec(3, 256, 4),
    ResidualUnitSpec(4, 512, 4),
    ResidualUnitSpec(5, 512, 4),
)


@dataclass(frozen=True)
class ModelConfig:
    units: tuple = TABLE1
    dense: bool = True
    activation: str = "relu"
    padding: str = "zeros"

    def __post_init__(self):
        units = tuple(u if isinstance(u, ResidualUnitSpec) else ResidualUnitSpec(**u) for u in self.units)
        object.__setattr__(self, "units", units)
        if not 1 <= len(units) <= 5:
            raise ValueError(f"a model has 1 to 5 residual units, got {len(units)}")
        if [u.order for u in units] != list(range(1, len(units) + 1)):
            raise ValueError("unit orders must be consecutive from 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.padding not in PADDINGS:
            raise ValueError(f"unknown padding {self.padding!r}")

    @classmethod
    def full(cls, **kw) -> "ModelConfig":
        return cls(TABLE1, **kw)

    @classmethod
    def lite(cls, **kw) -> "ModelConfig":
        return cls(TABLE1[:3], **kw)

    @classmethod
    def from_widths(cls, widths, **kw) -> "ModelConfig":
        """``[(F_1, L_1), (F_2, L_2), ...]`` -> config."""
        return cls(tuple(ResidualUnitSpec(i + 1, f, l) for i, (f, l) in enumerate(widths)), **kw)

    def to_dict(self) -> dict:
        return {"units": [asdict(u) for u in self.units], "dense": self.dense,
                "activation": self.activation, "padding": self.padding}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(tuple(ResidualUnitSpec(**u) for u in d["units"]), bool(d["dense"]),
                   d.get("activation", "relu"), d.get("padding", "zeros"))

    @property
    def receptive_radius(self) -> int:
        """Pixels of context one output needs on each side (longest chain of 3x3 convs)."""
        return sum(2 * u.layers for u in self.units)


PRESETS = {"full": ModelConfig.full, "lite": ModelConfig.lite}


def unit_channels(cfg: ModelConfig) -> list[dict]:
    """Input/output widths of every block, derived from the unit specs and the wiring."""
    f = [u.filters for u in cfg.units]
    out = []
    for i, u in enumerate(cfg.units):
        if i == 0:
            enc_in = 1
        else:
            enc_in = sum(f[:i]) if cfg.dense else f[i - 1]
        dec_in = 1 + sum(f[:i + 1]) if cfg.dense else f[i]
        out.append({"order": u.order, "enc_in": enc_in, "dec_in": dec_in, "filters": u.filters,
                    "dimred_out": 1 if i == 0 else f[i - 1]})
    return out


def layer_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple]":
    shapes = OrderedDict()
    for u, ch in zip(cfg.units, unit_channels(cfg)):
        for block, cin in (("enc", ch["enc_in"]), ("dec", ch["dec_in"])):
            for i in range(u.layers):
                shapes[f"u{u.order}.{block}.{i}.weight"] = (u.filters, cin if i == 0 else u.filters, 3, 3)
                shapes[f"u{u.order}.{block}.{i}.bias"] = (u.filters,)
        shapes[f"u{u.order}.dimred.weight"] = (ch["dimred_out"], u.filters, 1, 1)
        if u.order > 1:
            shapes[f"u{u.order}.dimred.bias"] = (ch["dimred_out"],)
    return shapes


def param_count(cfg: ModelConfig) -> int:
    return int(sum(np.prod(s) for s in layer_shapes(cfg).values()))


class SRModel:
    """Parameters plus the forward wiring; resolution preserving, 1 channel in and out."""

    def __init__(self, cfg: ModelConfig, params: "OrderedDict[str, Tensor]"):
        self.cfg = cfg
        self.params = params
        self._act = ACTIVATIONS[cfg.activation]

    def __repr__(self):
        return f"SRModel(units={len(self.cfg.units)}, dense={self.cfg.dense}, params={param_count(self.cfg)})"

    def __call__(self, x) -> Tensor:
        return forward(self, x)

    def _block(self, t: Tensor, prefix: str, layers: int) -> Tensor:
        p = self.params
        for i in range(layers):
            t = self._act(conv2d(t, p[f"{prefix}.{i}.weight"], p[f"{prefix}.{i}.bias"], self.cfg.padding))
        return t

    def _dimred(self, t: Tensor, order: int) -> Tensor:
        p = self.params
        if order == 1:
            return conv2d(t, p["u1.dimred.weight"])
        return self._act(conv2d(t, p[f"u{order}.dimred.weight"], p[f"u{order}.dimred.bias"]))

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data) for k, v in self.params.items())

    def load_state_dict(self, arrays):
        expected = layer_shapes(self.cfg)
        for name, shape in expected.items():
            if name not in arrays:
                raise CheckpointError(f"layer {name!r} is missing from the weights")
            if tuple(arrays[name].shape) != shape:
                raise CheckpointError(
                    f"layer {name!r} has shape {tuple(arrays[name].shape)}, model expects {shape}")
        extra = sorted(set(arrays) - set(expected))
        if extra:
            raise CheckpointError(f"layer {extra[0]!r} does not exist in this model config")
        for name in expected:
            self.params[name].data = np.array(arrays[name], dtype=np.float32)

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def grads(self) -> dict:
        return {k: v.grad for k, v in self.params.items() if v.grad is not None}

    def arrays(self) -> dict:
        return {k: v.data for k, v in self.params.items()}


def build_model(cfg: ModelConfig, seed: int | None = 0, init: str = "he",
                zero_last: bool = True) -> SRModel:
    """Allocate parameters: He-normal conv weights and zero biases, or all zeros.

    With ``zero_last`` the final 1x1 projection starts at zero, so an untrained
    model is the identity map and training begins from the interpolated input.
    """
    if init not in ("he", "zeros"):
        raise ValueError(f"unknown init {init!r}")
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in layer_shapes(cfg).items():
        if init == "zeros" or name.endswith(".bias") or (zero_last and name == "u1.dimred.weight"):
            arr = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = shape[1] * shape[2] * shape[3]
            arr = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
        params[name] = Tensor(arr, requires_grad=True, name=name)
    return SRModel(cfg, params)


def forward(model: SRModel, x) -> Tensor:
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=np.float32))
    if x.data.ndim == 2:
        x = Tensor(x.data[None, None])
    if x.data.ndim != 4 or x.shape[1] != 1:
        raise ValueError(f"model input must be (N, 1, H, W), got {x.shape}")
    cfg = model.cfg
    enc_outs, dec_outs = [x], []
    for n, u in enumerate(cfg.units, start=1):
        if n == 1:
            enc_in = x
        elif cfg.dense:
            enc_in = concat_channels(dec_outs)
        else:
            enc_in = dec_outs[-1]
        e = model._block(enc_in, f"u{n}.enc", u.layers)
        enc_outs.append(e)
        dec_in = concat_channels(enc_outs) if cfg.dense else e
        dec_outs.append(add(e, model._block(dec_in, f"u{n}.dec", u.layers)))
    r = dec_outs[-1]
    for n in range(len(cfg.units), 1, -1):
        r = add(dec_outs[n - 2], model._dimred(r, n))
    return add(x, model._dimred(r, 1))


def forward_tiled(model: SRModel, x: np.ndarray, tile: int = 96, margin: int | None = None) -> np.ndarray:
    """Inference on overlapping tiles, keeping each tile's center.

    With ``margin`` >= the receptive-field radius the result equals a
    whole-image forward pass up to float rounding.
    """
    a = np.asarray(x, dtype=np.float32)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[None, None]
    m = model.cfg.receptive_radius if margin is None else margin
    h, w = a.shape[-2:]
    out = np.empty_like(a)
    for y0 in range(0, h, tile):
        y1 = min(y0 + tile, h)
        ya, yb = max(0, y0 - m), min(h, y1 + m)
        for x0 in range(0, w, tile):
            x1 = min(x0 + tile, w)
            xa, xb = max(0, x0 - m), min(w, x1 + m)
            res = forward(model, a[:, :, ya:yb, xa:xb]).data
            out[:, :, y0:y1, x0:x1] = res[:, :, y0 - ya:y1 - ya, x0 - xa:x1 - xa]
    return out[0, 0] if squeeze else out


# -- checkpoints ---------------------------------------------------------------

MAGIC = b"DHRSRCKP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sII")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: SRModel
    global_mean: float = 0.0
    step: int = 0
    role: str | None = None
    adam: AdamState | None = None
    extra: dict = field(default_factory=dict)

    @property
    def config(self) -> ModelConfig:
        return self.model.cfg


def save_checkpoint(model: SRModel, path, *, global_mean: float = 0.0, step: int = 0,
                    role: str | None = None, adam: AdamState | None = None, extra: dict | None = None):
    """Write ``MAGIC | version | header length | JSON header | raw little-endian f4 blobs``."""
    blobs = [(name, t.data) for name, t in model.params.items()]
    if adam is not None:
        blobs += [(f"adam.m/{k}", v) for k, v in adam.m.items()]
        blobs += [(f"adam.v/{k}", v) for k, v in adam.v.items()]
    index, offset = [], 0
    for name, arr in blobs:
        nbytes = int(arr.size) * 4
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": nbytes})
        offset += nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "config": model.cfg.to_dict(),
        "global_mean": float(global_mean),
        "step": int(step),
        "role": role,
        "optimizer": None if adam is None else {"kind": "adam", "t": adam.t},
        "extra": extra or {},
        "blobs": index,
    }
    text = json.dumps(header, indent=1, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(text)))
        f.write(text)
        for _, arr in blobs:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_header(path) -> tuple[dict, int]:
    with open(path, "rb") as f:
        head = f.read(_PREFIX.size)
        if len(head) < _PREFIX.size:
            raise CheckpointError(f"{path}: truncated checkpoint header")
        magic, version, length = _PREFIX.unpack(head)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic {magic!r})")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
        text = f.read(length)
    if len(text) < length:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    return json.loads(text.decode("utf-8")), _PREFIX.size + length


def load_checkpoint(path, config: ModelConfig | None = None) -> Checkpoint:
    """Read a checkpoint; with ``config`` given, refuse weights that do not fit it."""
    header, start = read_header(path)
    raw = Path(path).read_bytes()[start:]
    arrays = {}
    for b in header["blobs"]:
        chunk = raw[b["offset"]:b["offset"] + b["nbytes"]]
        if len(chunk) != b["nbytes"]:
            raise CheckpointError(f"{path}: truncated data for blob {b['name']!r}")
        arrays[b["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(b["shape"]).astype(np.float32)
    stored = ModelConfig.from_dict(header["config"])
    cfg = stored if config is None else config
    model = build_model(cfg, init="zeros")
    weights = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    model.load_state_dict(weights)
    adam = None
    if header.get("optimizer"):
        adam = AdamState(
            m={k[len("adam.m/"):]: v for k, v in arrays.items() if k.startswith("adam.m/")},
            v={k[len("adam.v/"):]: v for k, v in arrays.items() if k.startswith("adam.v/")},
            t=int(header["optimizer"]["t"]))
    return Checkpoint(model, float(header["global_mean"]), int(header["step"]), header.get("role"),
                      adam, header.get("extra", {}))
