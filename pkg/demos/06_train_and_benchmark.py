"""
Training a small model and benchmarking it
==========================================

Trains a narrow network on crops of the photos bundled with scikit-image,
then measures it against the Gaussian-Spline baseline on held-out photos and
prints the report with the published reference rows. Takes a few minutes on
one core; pass a step count as the first argument to change the budget.
"""

import os
import sys
import tempfile

import numpy as np
from skimage import data as skdata

from densesr.archmodel import ModelConfig, build_model
from densesr.evalbench import run_benchmark
from densesr.imagecore import ColorSpace, PlanarImage, write_png
from densesr.trainer import Stage, TrainConfig, train_main

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300


def photo(a):
    a = a.transpose(2, 0, 1) if a.ndim == 3 else a[None]
    return PlanarImage(a[:3].astype(np.float64) / 255, ColorSpace.SRGB)


train_set = [photo(f()) for f in
             (skdata.camera, skdata.astronaut, skdata.chelsea, skdata.brick, skdata.grass)]
held_out = [photo(f()) for f in (skdata.coffee, skdata.moon)]

cfg = ModelConfig.from_widths([(16, 2), (32, 2)])
print(f"training {steps} steps of a {len(cfg.units)}-unit model on {len(train_set)} photos ...")
res = train_main(build_model(cfg, seed=0), train_set, TrainConfig(patch_size=48, steps=steps, log_every=0))
print(f"loss {res.trace[0].loss:.5f} -> {np.mean([r.loss for r in res.trace[-20:]]):.5f}")

with tempfile.TemporaryDirectory() as tmp:
    hr_dir = os.path.join(tmp, "HeldOut", "HR")
    os.makedirs(hr_dir)
    for i, im in enumerate(held_out):
        crop = PlanarImage(im.samples[:, 100:228, 100:228], im.space)
        write_png(crop, os.path.join(hr_dir, f"{i}.png"))
    stage = Stage("F2", res.model, res.global_mean)
    bench = run_benchmark(os.path.join(tmp, "HeldOut"), 2, {"F2": stage}, method="small-net")
print()
print(bench.report)
