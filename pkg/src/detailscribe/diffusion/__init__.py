"""Noise-schedule math, forward noising, partial re-denoising, and backends."""

from detailscribe.diffusion.backends import (
    BackendError,
    DiffusionBackend,
    ExternalBackend,
    MockBackend,
)
from detailscribe.diffusion.imageio import load_png, save_png
from detailscribe.diffusion.latent import (
    LatentImage,
    NoiseSource,
    StepOutOfRange,
    ZeroNoise,
    denoise_from,
    generate,
    noise_to_step,
)
from detailscribe.diffusion.schedule import InvalidArgument, NoiseSchedule, make_schedule

__all__ = [
    "BackendError",
    "DiffusionBackend",
    "ExternalBackend",
    "InvalidArgument",
    "LatentImage",
    "MockBackend",
    "NoiseSchedule",
    "NoiseSource",
    "StepOutOfRange",
    "ZeroNoise",
    "denoise_from",
    "generate",
    "load_png",
    "make_schedule",
    "noise_to_step",
    "save_png",
]
