"""Augmentation, patch sampling, the training loop and the reuse-plus-patch cascade."""

from __future__ import annotations

import csv
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .archmodel import Checkpoint, SRModel, forward_tiled, load_checkpoint, save_checkpoint
from .imagecore import (DEFAULT_SIGMOIDAL, ColorSpace, PlanarImage, SigmoidalParams, convert,
                        sigmoidal_decode, sigmoidal_encode, to_grayscale)
from .netcore import AdamConfig, AdamState, Graph, Tensor, adam_step, backward, logcosh_loss
from .resample import crop_to_multiple, degrade, gs_upsample_array

log = logging.getLogger(__name__)


class AugmentOp(enum.Enum):
    ID = "id"
    ROT90 = "rot90"
    ROT180 = "rot180"
    ROT270 = "rot270"
    TRANSPOSE_MAIN = "transpose_main"
    TRANSPOSE_ANTI = "transpose_anti"


AUGMENTATIONS = tuple(AugmentOp)


def augment_array(a: np.ndarray, op: AugmentOp) -> np.ndarray:
    """Apply a pixel permutation to the last two axes."""
    op = AugmentOp(op)
    if op is AugmentOp.ID:
        return a
    if op is AugmentOp.ROT90:
        return np.rot90(a, 1, axes=(-2, -1))
    if op is AugmentOp.ROT180:
        return np.rot90(a, 2, axes=(-2, -1))
    if op is AugmentOp.ROT270:
        return np.rot90(a, 3, axes=(-2, -1))
    if op is AugmentOp.TRANSPOSE_MAIN:
        return np.swapaxes(a, -1, -2)
    return np.swapaxes(a[..., ::-1, ::-1], -1, -2)


def augment(img: PlanarImage, op: AugmentOp) -> PlanarImage:
    return img.with_samples(np.ascontiguousarray(augment_array(img.samples, op)))


@dataclass(frozen=True)
class TrainConfig:
    patch_size: int = 159
    batch: int = 6
    adam: AdamConfig = AdamConfig()
    steps: int = 1000
    seed: int = 0
    global_mean: float | None = None
    log_every: int = 50
    eval_every: int = 0
    checkpoint_every: int = 0
    stop_psnr: float | None = None

    def __post_init__(self):
        if self.patch_size < 1 or self.batch < 1 or self.steps < 0:
            raise ValueError("patch_size and batch must be >= 1 and steps >= 0")

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        """Small-patch preset for CPU runs."""
        return cls(**{"patch_size": 64, **kw})


# -- data ----------------------------------------------------------------------

def prepare_hr(img, params: SigmoidalParams = DEFAULT_SIGMOIDAL) -> np.ndarray:
    """Image -> 2-D sigmoidal luminance. Plain arrays are taken as already prepared."""
    if not isinstance(img, PlanarImage):
        a = np.asarray(img, dtype=np.float64)
        return a[0] if a.ndim == 3 else a
    if img.space is ColorSpace.SIGMOIDAL and img.channels == 1:
        return img.samples[0].astype(np.float64)
    lin = convert(img, ColorSpace.LINEAR, params)
    if lin.channels == 3:
        lin = to_grayscale(lin)
    return sigmoidal_encode(lin.samples[0], params.alpha, params.beta)


def compute_global_mean(images: Iterable[np.ndarray]) -> float:
    total, count = 0.0, 0
    for a in images:
        a = np.asarray(a, dtype=np.float64)
        total += float(a.sum())
        count += a.size
    if count == 0:
        raise ValueError("cannot compute a mean over an empty training set")
    return total / count


def degrade_array(a: np.ndarray, scale: int) -> np.ndarray:
    return degrade(PlanarImage(a), scale).samples[0].astype(np.float64)


def make_pairs(hr_set: Sequence, scale: int = 2) -> list[tuple[np.ndarray, np.ndarray]]:
    """(upsampled LR, HR) full-image pairs at HR size: upsample_gs(degrade(HR))."""
    pairs = []
    for img in hr_set:
        hr = prepare_hr(img)
        hr = crop_to_multiple(PlanarImage(hr), scale).samples[0].astype(np.float64)
        lr = degrade_array(hr, scale)
        up = lr
        for _ in range(int(round(math.log2(scale)))):
            up = gs_upsample_array(up, 2)
        pairs.append((up, hr))
    return pairs


def _pair_stream(pairs, cfg: TrainConfig, mean: float, rng: np.random.Generator):
    p = cfg.patch_size
    usable = []
    for i, (inp, tgt) in enumerate(pairs):
        if inp.shape != tgt.shape:
            raise ValueError(f"pair {i}: input {inp.shape} and target {tgt.shape} differ")
        if min(tgt.shape) < p:
            warnings.warn(f"training image {i} ({tgt.shape[1]}x{tgt.shape[0]}) is smaller than "
                          f"patch size {p}; skipped")
            continue
        usable.append((inp, tgt))
    if not usable:
        raise ValueError(f"no training image is at least {p}x{p}")
    while True:
        inp, tgt = usable[int(rng.integers(len(usable)))]
        y = int(rng.integers(tgt.shape[0] - p + 1))
        x = int(rng.integers(tgt.shape[1] - p + 1))
        op = AUGMENTATIONS[int(rng.integers(len(AUGMENTATIONS)))]
        yield (augment_array(inp[y:y + p, x:x + p], op) - mean,
               augment_array(tgt[y:y + p, x:x + p], op) - mean)


def sample_pairs(hr_set: Sequence, scale: int, cfg: TrainConfig,
                 mean: float | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless seeded stream of mean-subtracted, randomly augmented patch pairs."""
    pairs = make_pairs(hr_set, scale)
    if mean is None:
        mean = cfg.global_mean if cfg.global_mean is not None else \
            compute_global_mean(t for _, t in pairs)
    return _pair_stream(pairs, cfg, mean, np.random.default_rng(cfg.seed))


def fixed_patch_set(pairs, patch_size: int, count: int, seed: int = 0):
    """``count`` fixed random crops, each expanded to its 6 augmentations."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        inp, tgt = pairs[k % len(pairs)]
        y = int(rng.integers(tgt.shape[0] - patch_size + 1))
        x = int(rng.integers(tgt.shape[1] - patch_size + 1))
        crop = (inp[y:y + patch_size, x:x + patch_size], tgt[y:y + patch_size, x:x + patch_size])
        out += [tuple(np.ascontiguousarray(augment_array(c, op)) for c in crop) for op in AUGMENTATIONS]
    return out


def cycle_stream(samples, mean: float, seed: int = 0):
    """Visit every sample once per epoch in a seeded shuffled order."""
    rng = np.random.default_rng(seed)
    while True:
        for i in rng.permutation(len(samples)):
            inp, tgt = samples[i]
            yield inp - mean, tgt - mean


def batches(stream, batch: int):
    while True:
        xs, ys = zip(*(next(stream) for _ in range(batch)))
        yield (np.stack(xs)[:, None].astype(np.float32), np.stack(ys)[:, None].astype(np.float32))


# -- training --------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, lr: float, grad_norm: float, loss: float):
        super().__init__(f"non-finite loss {loss} at step {step} (lr={lr}, grad norm={grad_norm})")
        self.step, self.lr, self.grad_norm, self.loss = step, lr, grad_norm, loss


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    return 99.99 if mse == 0 else min(99.99, 10.0 * math.log10(peak * peak / mse))


@dataclass
class TraceRow:
    step: int
    loss: float
    train_psnr: float
    eval_psnr: float | None = None


@dataclass
class TrainResult:
    model: SRModel
    adam: AdamState
    global_mean: float
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return self.adam.t

    def write_trace(self, path):
        write_trace(self.trace, path)


def write_trace(trace: Sequence[TraceRow], path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss", "train_psnr"])
        for r in trace:
            w.writerow([r.step, repr(r.loss), repr(r.train_psnr)])


def set_psnr(model: SRModel, samples, mean: float, batch: int = 6) -> float:
    """PSNR of the model over a whole (input, target) sample set, inference mode."""
    se, n = 0.0, 0
    for i in range(0, len(samples), batch):
        chunk = samples[i:i + batch]
        x = np.stack([s[0] for s in chunk])[:, None].astype(np.float32) - np.float32(mean)
        y = np.stack([s[1] for s in chunk])[:, None].astype(np.float64) - mean
        d = model(x).data.astype(np.float64) - y
        se += float((d * d).sum())
        n += d.size
    return psnr_from_mse(se / n)


def train(model: SRModel, pair_stream, cfg: TrainConfig, *, global_mean: float = 0.0,
          adam: AdamState | None = None, out=None, role: str | None = None,
          evaluate: Callable[[SRModel], float] | None = None,
          on_step: Callable[[TraceRow], None] | None = None) -> TrainResult:
    """Forward, logcosh, backward and one ADAM update per mini-batch.

    ``pair_stream`` yields single (input, target) pairs which are grouped into
    batches of ``cfg.batch``. The loss trace records each step's pre-update
    loss and the batch PSNR.
    """
    adam = AdamState() if adam is None else adam
    result = TrainResult(model, adam, global_mean)
    it = batches(iter(pair_stream), cfg.batch)
    params = model.arrays()
    start = adam.t
    for step in range(start, start + cfg.steps):
        x, y = next(it)
        model.zero_grad()
        with Graph() as g:
            pred = model(Tensor(x))
            loss = logcosh_loss(pred, Tensor(y))
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(step, cfg.adam.lr, float("nan"), value)
        backward(g, loss)
        grads = model.grads()
        gnorm = math.sqrt(sum(float((gr.astype(np.float64) ** 2).sum()) for gr in grads.values()))
        if not math.isfinite(gnorm):
            raise TrainingDiverged(step, cfg.adam.lr, gnorm, value)
        d = pred.data.astype(np.float64) - y
        row = TraceRow(step, value, psnr_from_mse(float((d * d).mean())))
        adam_step(params, grads, adam, cfg.adam)
        if evaluate is not None and cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            row.eval_psnr = evaluate(model)
        result.trace.append(row)
        if on_step is not None:
            on_step(row)
        if cfg.log_every and step % cfg.log_every == 0:
            log.info("step %d loss %.6g psnr %.2f dB", step, value, row.train_psnr)
        if out is not None and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(model, out, global_mean=global_mean, step=adam.t, role=role, adam=adam)
        if cfg.stop_psnr is not None and row.eval_psnr is not None and row.eval_psnr > cfg.stop_psnr:
            break
    if out is not None:
        save_checkpoint(model, out, global_mean=global_mean, step=adam.t, role=role, adam=adam)
    return result


def train_main(model: SRModel, hr_set: Sequence, cfg: TrainConfig, scale: int = 2, **kw) -> TrainResult:
    """Train the 2x main model on (upsample_gs(degrade(HR)), HR) patches."""
    pairs = make_pairs(hr_set, scale)
    mean = cfg.global_mean if cfg.global_mean is not None else compute_global_mean(t for _, t in pairs)
    stream = _pair_stream(pairs, cfg, mean, np.random.default_rng(cfg.seed))
    return train(model, stream, cfg, global_mean=mean, role=kw.pop("role", "F2"), **kw)


# -- cascade -----------------------------------------------------------------------

def _log2_scale(scale: int) -> int:
    k = int(round(math.log2(scale))) if scale >= 2 else 0
    if k < 1 or 2 ** k != scale:
        raise ValueError(f"unsupported scale {scale}; use a power of two (2, 4, 8)")
    return k


def _full(scale: int, roles) -> list[str]:
    if scale == 2:
        return ["F2"]
    chain = _chain(scale // 2, roles)
    top = f"P{scale}"
    return chain + [top] if top in roles else chain


def _chain(scale: int, roles) -> list[str]:
    """Composition fed to the patch model of scale ``2 * scale``."""
    lower = [f"P{2 ** j}" for j in range(2, _log2_scale(scale) + 1) if f"P{2 ** j}" in roles]
    return _full(scale, roles) + ["F2"] + lower


def cascade_plan(scale: int, roles: Iterable[str] = ("F2", "P4")) -> list[str]:
    """Stage order for an ``scale``-times reconstruction using the available models.

    ``F2`` stages double the resolution; ``P*`` stages correct at the current one.
    F2 and, from 4x up, P4 are required; higher patch models are used when present.
    """
    _log2_scale(scale)
    roles = set(roles)
    if "F2" not in roles:
        raise ValueError("the cascade needs an F2 model")
    if scale >= 4 and "P4" not in roles:
        raise ValueError(f"a {scale}x reconstruction needs a P4 model")
    return _full(scale, roles)


def patch_training_plan(role: str) -> list[str]:
    """Composition whose output the patch model ``role`` is trained to correct."""
    scale = int(role[1:]) if role[:1] == "P" and role[1:].isdigit() else 0
    k = _log2_scale(scale) if scale else 0
    if k < 2:
        raise ValueError(f"not a patch stage: {role!r}")
    return _chain(scale // 2, {f"P{2 ** j}" for j in range(2, k)})


@dataclass
class Stage:
    """A frozen model plus the normalization mean it was trained with."""

    role: str
    model: SRModel
    global_mean: float = 0.0
    tile: int = 64

    def apply(self, luma: np.ndarray) -> np.ndarray:
        x = np.asarray(luma, dtype=np.float32) - np.float32(self.global_mean)
        return forward_tiled(self.model, x, tile=self.tile).astype(np.float64) + self.global_mean

    @classmethod
    def from_checkpoint(cls, path, role: str | None = None, tile: int = 64) -> "Stage":
        ck: Checkpoint = load_checkpoint(path)
        if role is not None and ck.role is not None and ck.role.upper() != role.upper():
            raise ValueError(f"{path} holds a {ck.role} model, not {role}")
        return cls((role or ck.role or "F2").upper(), ck.model, ck.global_mean, tile)


def apply_plan(luma: np.ndarray, plan: Sequence[str], stages: Mapping[str, object] | None,
               sigma: float = 0.5) -> np.ndarray:
    """Run ``plan`` on a 2-D sigmoidal luminance array. ``stages=None`` skips the models."""
    out = np.asarray(luma, dtype=np.float64)
    for role in plan:
        if role == "F2":
            out = gs_upsample_array(out, 2, sigma)
        if stages is not None:
            if role not in stages:
                raise ValueError(f"missing checkpoint for stage {role}")
            out = np.asarray(stages[role].apply(out), dtype=np.float64)
    return out


def train_patch_stage(role: str, lower_stages: Mapping[str, object], hr_set: Sequence,
                      cfg: TrainConfig, model: SRModel, **kw) -> TrainResult:
    """Train patch model ``role`` against HR with the lower stages frozen."""
    plan = patch_training_plan(role)
    missing = sorted({r for r in plan} - set(lower_stages))
    if missing:
        raise ValueError(f"missing lower-stage checkpoint(s): {', '.join(missing)}")
    scale = int(role[1:])
    pairs = []
    for img in hr_set:
        hr = crop_to_multiple(PlanarImage(prepare_hr(img)), scale).samples[0].astype(np.float64)
        pairs.append((apply_plan(degrade_array(hr, scale), plan, lower_stages), hr))
    mean = cfg.global_mean if cfg.global_mean is not None else compute_global_mean(t for _, t in pairs)
    stream = _pair_stream(pairs, cfg, mean, np.random.default_rng(cfg.seed))
    return train(model, stream, cfg, global_mean=mean, role=role, **kw)


def super_resolve(img_lr: PlanarImage, scale: int, stages: Mapping[str, object],
                  params: SigmoidalParams = DEFAULT_SIGMOIDAL, sigma: float = 0.5) -> PlanarImage:
    """Upscale an image through the cascade; returns it in the input's colorspace.

    Luminance goes through the models in sigmoidal space. Colour images are
    upscaled per channel with the Gaussian-Spline resampler and receive the
    models' luminance detail as a linear-light offset.
    """
    plan = cascade_plan(scale, stages.keys())
    lin = convert(img_lr, ColorSpace.LINEAR, params)
    a, b = params.alpha, params.beta
    if lin.channels == 1:
        luma = sigmoidal_encode(lin.samples[0], a, b)
        out = sigmoidal_decode(apply_plan(luma, plan, stages, sigma), a, b)[None]
    else:
        luma = sigmoidal_encode(to_grayscale(lin).samples[0], a, b)
        detail = sigmoidal_decode(apply_plan(luma, plan, stages, sigma), a, b) \
            - sigmoidal_decode(apply_plan(luma, plan, None, sigma), a, b)
        rgb = sigmoidal_encode(lin.samples, a, b)
        for _ in range(plan.count("F2")):
            rgb = gs_upsample_array(rgb, 2, sigma)
        out = sigmoidal_decode(rgb, a, b) + detail[None]
    result = PlanarImage(np.clip(out, 0.0, 1.0), ColorSpace.LINEAR)
    return convert(result, img_lr.space, params)


def identity_stages(roles: Iterable[str] = ("F2", "P4")) -> dict:
    """Stages that return their input unchanged; the pure Gaussian-Spline baseline."""
    return {r: _Identity() for r in roles}


class _Identity:
    def apply(self, luma):
        return luma


def load_stages(paths: Sequence, tile: int = 64) -> dict[str, Stage]:
    """Checkpoints in cascade order: F2, P4, P8, ..."""
    roles = ["F2"] + [f"P{2 ** k}" for k in range(2, 2 + max(0, len(paths) - 1))]
    return {r: Stage.from_checkpoint(p, r, tile) for r, p in zip(roles, paths)}
