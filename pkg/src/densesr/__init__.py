"""Single-image super-resolution with a densely connected high-order residual network."""

from .archmodel import (Checkpoint, ModelConfig, ResidualUnitSpec, SRModel, build_model, forward,
                        forward_tiled, load_checkpoint, param_count, save_checkpoint)
from .imagecore import (ColorSpace, PlanarImage, SigmoidalParams, linear_to_sigmoidal, linear_to_srgb,
                        read_png, sigmoidal_to_linear, srgb_to_linear, to_grayscale, write_png)
from .resample import KernelSpec, degrade, resize, upsample_gs
from .trainer import (AugmentOp, Stage, TrainConfig, augment, cascade_plan, sample_pairs,
                      super_resolve, train, train_patch_stage)
from .evalbench import psnr, run_benchmark, ssim

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "ModelConfig",
    "ResidualUnitSpec",
    "SRModel",
    "build_model",
    "forward",
    "forward_tiled",
    "load_checkpoint",
    "param_count",
    "save_checkpoint",
    "ColorSpace",
    "PlanarImage",
    "SigmoidalParams",
    "linear_to_sigmoidal",
    "linear_to_srgb",
    "read_png",
    "sigmoidal_to_linear",
    "srgb_to_linear",
    "to_grayscale",
    "write_png",
    "KernelSpec",
    "degrade",
    "resize",
    "upsample_gs",
    "AugmentOp",
    "Stage",
    "TrainConfig",
    "augment",
    "cascade_plan",
    "sample_pairs",
    "super_resolve",
    "train",
    "train_patch_stage",
    "psnr",
    "run_benchmark",
    "ssim",
]
