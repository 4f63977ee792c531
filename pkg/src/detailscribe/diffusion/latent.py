"""Latent images, forward noising, and partial re-denoising.

The forward step mixes a clean image with one fresh standard-normal draw:

    I_t = sqrt(alpha_bar_t) * I_0 + sqrt(1 - alpha_bar_t) * eps

Re-denoising hands the reverse trajectory from step t' down to 0 to a
backend, conditioned on a (possibly refined) prompt. Setting t' near T
regenerates almost everything; small t' barely moves the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from detailscribe import DetailScribeError
from detailscribe.diffusion.schedule import NoiseSchedule

MISSING_SEED = -1


class StepOutOfRange(DetailScribeError):
    """Step index outside the schedule, or an operation got the wrong endpoint."""


@dataclass(frozen=True)
class LatentImage:
    """A (channels, height, width) real tensor at a known diffusion step.

    step 0 is clean; step T is pure noise. ``provenance`` carries the seeds
    and step counts needed to replay how this tensor was produced.
    """

    data: np.ndarray
    step: int
    prompt_tag: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise StepOutOfRange(f"expected (C, H, W) data, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise StepOutOfRange("latent data contains non-finite entries")
        if self.step < 0:
            raise StepOutOfRange(f"negative step {self.step}")


class NormalSource(Protocol):
    """Anything that yields standard-normal tensors on demand."""

    seed: int

    def draw(self, shape: tuple[int, ...]) -> np.ndarray: ...


class NoiseSource:
    """Counter-based seeded normal stream.

    Each draw runs an independent Philox stream keyed by (seed, draw index),
    so a recorded (seed, index) pair pins down the exact tensor regardless of
    draw sizes before it.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self.draws = 0

    def draw(self, shape: tuple[int, ...]) -> np.ndarray:
        key = [self.seed & 0xFFFFFFFFFFFFFFFF, self.draws]
        self.draws += 1
        rng = np.random.Generator(np.random.Philox(key=key))
        return rng.standard_normal(shape)


class ZeroNoise:
    """Test double: all draws are exactly zero."""

    seed = MISSING_SEED

    def draw(self, shape: tuple[int, ...]) -> np.ndarray:
        return np.zeros(shape, dtype=np.float64)


def noise_to_step(
    image: LatentImage,
    t_prime: int,
    schedule: NoiseSchedule,
    noise: NormalSource,
) -> LatentImage:
    """Forward-noise a clean image up to step ``t_prime``.

    Draws epsilon exactly once from ``noise`` and records the source seed and
    draw index in the result's provenance. ``t_prime = 0`` returns the input
    data unchanged, bit for bit.
    """
    if image.step != 0:
        raise StepOutOfRange(f"forward noising starts from a clean image, got step {image.step}")
    if not (0 <= t_prime <= schedule.T):
        raise StepOutOfRange(f"t'={t_prime} outside [0, {schedule.T}]")
    if t_prime == 0:
        return replace(
            image,
            data=image.data.copy(),
            provenance={**image.provenance, "noise_seed": noise.seed, "noise_draw": None},
        )
    draw_index = getattr(noise, "draws", None)
    eps = noise.draw(image.data.shape)
    alpha_bar = schedule.alpha_bar[t_prime]
    data = np.sqrt(alpha_bar) * image.data + np.sqrt(1.0 - alpha_bar) * eps
    return LatentImage(
        data=data,
        step=t_prime,
        prompt_tag=image.prompt_tag,
        provenance={
            **image.provenance,
            "noise_seed": noise.seed,
            "noise_draw": draw_index,
            "alpha_bar_t_prime": alpha_bar,
        },
    )


def denoise_from(latent: LatentImage, prompt: str, backend) -> LatentImage:
    """Run the backend's reverse trajectory from the latent's step down to 0.

    The result is a clean image tagged with ``prompt``; its provenance counts
    exactly ``latent.step`` reverse steps for cost accounting.
    """
    t_prime = latent.step
    if t_prime < 1:
        raise StepOutOfRange("re-denoising needs a noised latent (step >= 1)")
    seed = latent.provenance.get("noise_seed", MISSING_SEED)
    data = backend.redenoise(latent.data, prompt, t_prime, seed)
    return LatentImage(
        data=data,
        step=0,
        prompt_tag=prompt,
        provenance={**latent.provenance, "reverse_steps": t_prime},
    )


def generate(prompt: str, seed: int, backend, schedule: NoiseSchedule) -> LatentImage:
    """Generate a clean image from pure seeded noise at step T."""
    data = backend.txt2img(prompt, seed, schedule.T)
    return LatentImage(
        data=data,
        step=0,
        prompt_tag=prompt,
        provenance={"seed": seed, "reverse_steps": schedule.T},
    )
