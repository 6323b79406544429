"""
The densely connected high-order residual network
=================================================

Each residual unit has an encoder, a decoder wrapped in a skip connection, and
a 1x1 reduction that folds its result into the unit below. Dense wiring feeds
every encoder output to each decoder and every lower decoder output to each
encoder.
"""

import numpy as np

from densesr.archmodel import ModelConfig, build_model, forward, forward_tiled, param_count, unit_channels

for name, cfg in (("full", ModelConfig.full()), ("lite", ModelConfig.lite())):
    print(f"{name}: {len(cfg.units)} units, {param_count(cfg):,} parameters, "
          f"receptive radius {cfg.receptive_radius}px")

print("\nblock input widths (dense):")
for ch in unit_channels(ModelConfig.full()):
    print(f"  unit {ch['order']}: encoder in {ch['enc_in']:>4}, decoder in {ch['dec_in']:>4}, "
          f"F={ch['filters']}")

print("\nwithout dense wiring:")
for ch in unit_channels(ModelConfig.full(dense=False)):
    print(f"  unit {ch['order']}: encoder in {ch['enc_in']:>4}, decoder in {ch['dec_in']:>4}")

# an untrained model is the identity: every branch starts at zero
x = np.random.default_rng(0).standard_normal((1, 1, 24, 24)).astype(np.float32)
model = build_model(ModelConfig.from_widths([(8, 2), (16, 2)]), seed=0)
print("\nfresh model is identity:", np.array_equal(forward(model, x).data, x))

# tiled inference agrees with a whole-image pass once tiles overlap by the receptive radius
model = build_model(ModelConfig.from_widths([(8, 2), (16, 2)]), seed=0, zero_last=False)
img = np.random.default_rng(1).standard_normal((70, 50)).astype(np.float32)
whole = forward(model, img).data[0, 0]
tiled = forward_tiled(model, img, tile=24)
print("tiled vs whole max diff:", float(np.abs(tiled - whole).max()))
