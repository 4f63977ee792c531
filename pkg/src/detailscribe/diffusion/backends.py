"""Image-generation backends: the deterministic mock and an HTTP adapter.

The mock realizes the re-denoising trade-off as an exactly testable law.
Each prompt owns a fixed pseudo-random target tensor; every reverse step
pulls the current tensor a fraction of the way toward it:

    step t -> t-1:   x <- x + (target(prompt) - x) / (t + 1)

so starting the reverse pass at step t' lands on the closed form

    final = target(prompt) + (x_t' - target(prompt)) / (t' + 1).

Large t' means the target (the refined prompt) dominates; small t' leaves
the starting image nearly untouched.
"""

from __future__ import annotations

import base64
import hashlib
import io
import threading
from abc import ABC, abstractmethod

import numpy as np

from detailscribe import DetailScribeError
from detailscribe.diffusion.latent import NoiseSource


class BackendError(DetailScribeError):
    """The generation backend failed or returned an unusable payload."""


class DiffusionBackend(ABC):
    """Text-to-image backend capable of full generation and partial re-denoising.

    Implementations must be deterministic given (prompt, seed, start latent,
    t'). ``image_shape`` is (channels, height, width); ``max_steps`` is None
    when any step count is supported.
    """

    name: str = "backend"
    image_shape: tuple[int, int, int] = (3, 64, 64)
    max_steps: int | None = None

    @abstractmethod
    def txt2img(self, prompt: str, seed: int, steps: int) -> np.ndarray:
        """Generate a clean image from pure seeded noise with ``steps`` reverse steps."""

    @abstractmethod
    def redenoise(self, data: np.ndarray, prompt: str, t_prime: int, seed: int) -> np.ndarray:
        """Run the reverse trajectory from step ``t_prime`` down to 0."""

    def check_steps(self, steps: int) -> None:
        if steps < 1:
            raise BackendError(f"need at least one reverse step, got {steps}")
        if self.max_steps is not None and steps > self.max_steps:
            raise BackendError(f"{self.name} supports at most {self.max_steps} steps")


def _prompt_target_seed(prompt: str) -> int:
    """Stable 64-bit hash of whitespace-normalized prompt text."""
    normalized = " ".join(prompt.split())
    digest = hashlib.blake2b(normalized.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class MockBackend(DiffusionBackend):
    """Closed-form mock backend; the whole offline test story rests on it."""

    name = "mock"

    def __init__(self, image_shape: tuple[int, int, int] = (3, 64, 64)) -> None:
        self.image_shape = image_shape
        self._targets: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def target(self, prompt: str) -> np.ndarray:
        """Unit-variance pseudo-random tensor owned by this prompt."""
        key = " ".join(prompt.split())
        with self._lock:
            cached = self._targets.get(key)
            if cached is None:
                rng = np.random.Generator(np.random.Philox(key=_prompt_target_seed(prompt)))
                cached = rng.standard_normal(self.image_shape)
                cached.setflags(write=False)
                self._targets[key] = cached
        return cached

    def txt2img(self, prompt: str, seed: int, steps: int) -> np.ndarray:
        self.check_steps(steps)
        eps = NoiseSource(seed).draw(self.image_shape)
        return self.redenoise(eps, prompt, steps, seed)

    def redenoise(self, data: np.ndarray, prompt: str, t_prime: int, seed: int) -> np.ndarray:
        self.check_steps(t_prime)
        if data.shape != self.image_shape:
            raise BackendError(f"latent shape {data.shape} != backend shape {self.image_shape}")
        target = self.target(prompt)
        x = np.array(data, dtype=np.float64)
        for t in range(t_prime, 0, -1):
            x += (target - x) / (t + 1)
        return x


class ExternalBackend(DiffusionBackend):
    """Adapter for a separately hosted generation service.

    Speaks POST {base}/txt2img {prompt, seed, steps} and POST
    {base}/redenoise {image_b64, prompt, t_prime, seed}, both answering
    {"image_b64": <png>}. Requests are serialized through one lock; the
    GPU-backed service is assumed single-tenant.
    """

    name = "external"

    def __init__(
        self,
        base_url: str,
        image_shape: tuple[int, int, int] = (3, 1024, 1024),
        timeout: float = 600.0,
        session=None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.image_shape = image_shape
        self.timeout = timeout
        self._session = session
        self._lock = threading.Lock()

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        session = self._session or requests
        with self._lock:
            try:
                resp = session.post(
                    f"{self.base_url}{path}", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise BackendError(f"generation service unreachable: {exc}") from exc
        if getattr(resp, "status_code", 200) >= 400:
            raise BackendError(f"generation service returned {resp.status_code}")
        body = resp.json()
        if "image_b64" not in body:
            raise BackendError("generation service response is missing image_b64")
        return body

    def _decode(self, body: dict) -> np.ndarray:
        from detailscribe.diffusion.imageio import png_bytes_to_array

        data = png_bytes_to_array(base64.b64decode(body["image_b64"]))
        if data.shape != self.image_shape:
            raise BackendError(f"service image shape {data.shape} != {self.image_shape}")
        return data

    def txt2img(self, prompt: str, seed: int, steps: int) -> np.ndarray:
        self.check_steps(steps)
        body = self._post("/txt2img", {"prompt": prompt, "seed": seed, "steps": steps})
        return self._decode(body)

    def redenoise(self, data: np.ndarray, prompt: str, t_prime: int, seed: int) -> np.ndarray:
        from detailscribe.diffusion.imageio import array_to_png_bytes

        self.check_steps(t_prime)
        image_b64 = base64.b64encode(array_to_png_bytes(data)).decode("ascii")
        body = self._post(
            "/redenoise",
            {"image_b64": image_b64, "prompt": prompt, "t_prime": t_prime, "seed": seed},
        )
        return self._decode(body)
