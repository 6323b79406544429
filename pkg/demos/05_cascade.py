"""
Reuse plus patch
================

Larger factors reuse the 2x model F2 and add small patch models: 4x is
P4(F2(F2(x))) and 8x appends another F2 and P4. Stub stages that log their
calls make the order visible, then a real (untrained) cascade runs end to end.
"""

import numpy as np

from densesr.archmodel import ModelConfig, build_model
from densesr.imagecore import ColorSpace, PlanarImage
from densesr.trainer import Stage, apply_plan, cascade_plan, patch_training_plan, super_resolve

for s in (2, 4, 8):
    print(f"{s}x plan: {cascade_plan(s)}")
print("8x with a P8 model:", cascade_plan(8, ("F2", "P4", "P8")))
for role in ("P4", "P8", "P16"):
    print(f"{role} is trained to correct: {patch_training_plan(role)}")


class Logger:
    def __init__(self, role):
        self.role = role

    def apply(self, luma):
        print(f"  {self.role} sees a {luma.shape[1]}x{luma.shape[0]} image")
        return luma


print("\n8x with logging stubs on a 10x10 input:")
apply_plan(np.zeros((10, 10)), cascade_plan(8), {r: Logger(r) for r in ("F2", "P4")})

# untrained stages are identities, so the result is the plain Gaussian-Spline upscale
cfg = ModelConfig.from_widths([(8, 1), (8, 1)])
stages = {r: Stage(r, build_model(cfg, seed=i), 0.45) for i, r in enumerate(("F2", "P4"))}
lr = PlanarImage(np.random.default_rng(0).random((3, 12, 16)), ColorSpace.SRGB)
sr = super_resolve(lr, 4, stages)
print(f"\n4x colour result: {sr.channels} channels, {sr.width}x{sr.height}, space {sr.space.value}")
