"""Refinement-augmented text-to-image generation toolkit.

Generate an image, decompose the prompt into interaction components, let a
multimodal model critique the result against that checklist, then partially
re-noise the image and re-denoise it under the refined prompt. Ships with a
deterministic mock diffusion backend and scripted chat clients so the whole
pipeline, benchmark, and evaluation stack run offline.
"""

__version__ = "0.1.0"


class DetailScribeError(Exception):
    """Base class for all toolkit errors."""
