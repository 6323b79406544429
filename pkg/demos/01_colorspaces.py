"""
Working colorspaces
===================

Images enter as sRGB, are linearized, and are then mapped into the sigmoidal
space where all resampling and learning happens. This script walks one gray
ramp through the chain and shows why the sigmoidal space is symmetric.
"""

import numpy as np

from densesr.imagecore import (ColorSpace, PlanarImage, convert, sigmoidal_decode, sigmoidal_encode,
                               srgb_decode)

# a 0..1 ramp, stored as sRGB like any PNG would be
ramp = PlanarImage(np.linspace(0, 1, 11)[None, None, :], ColorSpace.SRGB)

lin = convert(ramp, ColorSpace.LINEAR)
sig = convert(ramp, ColorSpace.SIGMOIDAL)
print("sRGB      ", np.round(ramp.samples[0, 0], 3))
print("linear    ", np.round(lin.samples[0, 0], 3))
print("sigmoidal ", np.round(sig.samples[0, 0], 3))

# mid-gray in sRGB is about 21% linear light
print("\nsrgb_decode(0.5) =", round(float(srgb_decode(0.5)), 4))

# the sigmoidal curve treats dark and bright tones alike: f(y) + f(1 - y) = 1
y = np.linspace(0, 1, 10001)
print("max |f(y) + f(1-y) - 1| =", np.abs(sigmoidal_decode(y) + sigmoidal_decode(1 - y) - 1).max())

# and it inverts analytically
x = np.random.default_rng(0).random(10000)
print("max roundtrip error      =", np.abs(sigmoidal_decode(sigmoidal_encode(x)) - x).max())

# a steeper curve (larger beta) compresses the extremes harder
for beta in (4.0, 8.5, 12.0):
    print(f"beta={beta:>4}: linear 0.05 -> sigmoidal {float(sigmoidal_encode(0.05, 0.5, beta)):.3f}")
