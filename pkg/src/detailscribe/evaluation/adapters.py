"""Pluggable image-text scorers.

Pretrained metrics (CLIPScore, ImageReward, BLIP-VQA) run behind adapters:
either an HTTP scoring service or any in-process callable. The mock verifier
is normative for offline runs: the negated L2 distance between the image and
the mock backend's target tensor for the prompt, so a perfectly on-target
image scores 0 and everything else scores below it.
"""

from __future__ import annotations

import base64
import threading
from abc import ABC, abstractmethod

import numpy as np

from detailscribe import DetailScribeError
from detailscribe.diffusion.backends import MockBackend
from detailscribe.evaluation.scores import METRIC_NATIVE, MetricScore


class AdapterError(DetailScribeError):
    """A configured scorer failed while scoring."""


class SkippedMetric(DetailScribeError):
    """The requested scorer is not configured; record the skip and move on."""


class ScoreAdapter(ABC):
    metric: str = "adapter"

    @abstractmethod
    def score(self, data: np.ndarray, prompt: str) -> float:
        """Scalar alignment score for (image tensor, prompt); higher is better."""


class MockVerifier(ScoreAdapter):
    """score(x, p) = -||x - target(p)||2 against the mock backend's target."""

    metric = "mock-verifier"

    def __init__(self) -> None:
        self._backends: dict[tuple[int, int, int], MockBackend] = {}
        self._lock = threading.Lock()

    def target(self, prompt: str, shape: tuple[int, int, int]) -> np.ndarray:
        with self._lock:
            backend = self._backends.get(shape)
            if backend is None:
                backend = MockBackend(image_shape=shape)
                self._backends[shape] = backend
        return backend.target(prompt)

    def score(self, data: np.ndarray, prompt: str) -> float:
        target = self.target(prompt, tuple(data.shape))
        return -float(np.linalg.norm(data - target))


class CallableAdapter(ScoreAdapter):
    """Wrap any callable (data, prompt) -> float as a scorer."""

    def __init__(self, metric: str, fn) -> None:
        self.metric = metric
        self._fn = fn

    def score(self, data: np.ndarray, prompt: str) -> float:
        try:
            return float(self._fn(data, prompt))
        except Exception as exc:
            raise AdapterError(f"{self.metric} plugin failed: {exc}") from exc


class HttpScoreAdapter(ScoreAdapter):
    """Adapter for an external scoring service.

    POST {url} with {"image_b64": <png>, "text": <prompt>}, answering
    {"score": <float>}.
    """

    def __init__(self, metric: str, url: str, timeout: float = 120.0, session=None) -> None:
        self.metric = metric
        self.url = url
        self.timeout = timeout
        self._session = session

    def score(self, data: np.ndarray, prompt: str) -> float:
        import requests

        from detailscribe.diffusion.imageio import array_to_png_bytes

        session = self._session or requests
        payload = {
            "image_b64": base64.b64encode(array_to_png_bytes(data)).decode("ascii"),
            "text": prompt,
        }
        try:
            resp = session.post(self.url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise AdapterError(f"{self.metric} service unreachable: {exc}") from exc
        if getattr(resp, "status_code", 200) >= 400:
            raise AdapterError(f"{self.metric} service returned {resp.status_code}")
        body = resp.json()
        if "score" not in body:
            raise AdapterError(f"{self.metric} service response has no 'score'")
        return float(body["score"])


def score_with_adapter(
    data: np.ndarray,
    prompt: str,
    adapter: ScoreAdapter | None,
    image_id: str = "",
    prompt_id: str = "",
) -> MetricScore:
    """Score one image with one adapter, wrapped as a MetricScore.

    A missing adapter raises SkippedMetric so callers can record the gap
    without crashing a batch.
    """
    if adapter is None:
        raise SkippedMetric("scorer not configured")
    value = adapter.score(data, prompt)
    return MetricScore(
        image_id=image_id,
        prompt_id=prompt_id,
        metric=adapter.metric,
        value=float(value),
        scale=METRIC_NATIVE,
    )
