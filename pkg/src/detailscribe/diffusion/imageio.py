"""PNG import/export for latent tensors.

Pixel bytes map linearly between [0, 255] and [-1, 1]; values outside that
range clip on export. PNG is for viewing and serving; pipelines that need
the exact float tensor keep a .npy sidecar next to each PNG.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image


def array_to_png_bytes(data: np.ndarray) -> bytes:
    if data.ndim != 3 or data.shape[0] not in (1, 3):
        raise ValueError(f"expected (1|3, H, W) tensor, got shape {data.shape}")
    clipped = np.clip(data, -1.0, 1.0)
    pixels = np.round((clipped + 1.0) * 127.5).astype(np.uint8)
    if pixels.shape[0] == 1:
        img = Image.fromarray(pixels[0], mode="L")
    else:
        img = Image.fromarray(np.moveaxis(pixels, 0, -1), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_array(blob: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(blob))
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = np.moveaxis(arr[:, :, :3], -1, 0)
    return arr / 127.5 - 1.0


def save_png(data: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(array_to_png_bytes(data))


def load_png(path: str | Path) -> np.ndarray:
    return png_bytes_to_array(Path(path).read_bytes())
