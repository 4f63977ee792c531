"""Score and rating records plus their JSONL persistence."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from detailscribe import DetailScribeError

LIKERT_SCALE = "likert-1-5"
METRIC_NATIVE = "metric-native"

KNOWN_METRICS = ("mllm-likert", "clipscore", "imagereward", "blip-vqa", "mock-verifier")


class ScoreValueError(DetailScribeError):
    pass


@dataclass(frozen=True)
class MetricScore:
    """One metric's value for one image."""

    image_id: str
    prompt_id: str
    metric: str
    value: float
    scale: str = METRIC_NATIVE
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.metric == "mllm-likert" and self.value not in (1, 2, 3, 4, 5):
            raise ScoreValueError(f"mllm-likert score must be in 1..5, got {self.value}")

    def to_dict(self) -> dict:
        d = {
            "image_id": self.image_id,
            "prompt_id": self.prompt_id,
            "metric": self.metric,
            "value": self.value,
            "scale": self.scale,
        }
        d.update(self.extra)
        return d


@dataclass(frozen=True)
class LikertRating:
    """One human annotator's 1-5 alignment rating for one image."""

    image_id: str
    annotator_id: str
    score: int
    timestamp: str = ""

    def __post_init__(self) -> None:
        if self.score not in (1, 2, 3, 4, 5):
            raise ScoreValueError(f"likert score must be in 1..5, got {self.score}")

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "annotator_id": self.annotator_id,
            "score": self.score,
            "timestamp": self.timestamp,
        }


def save_scores(scores: Iterable[MetricScore], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in scores:
            f.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


def load_scores(path: str | Path) -> list[MetricScore]:
    scores = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            extra = {
                k: v
                for k, v in obj.items()
                if k not in ("image_id", "prompt_id", "metric", "value", "scale")
            }
            scores.append(
                MetricScore(
                    image_id=obj["image_id"],
                    prompt_id=str(obj["prompt_id"]),
                    metric=obj["metric"],
                    value=float(obj["value"]),
                    scale=obj.get("scale", METRIC_NATIVE),
                    extra=extra,
                )
            )
    return scores


def load_ratings(path: str | Path) -> list[LikertRating]:
    ratings = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            ratings.append(
                LikertRating(
                    image_id=obj["image_id"],
                    annotator_id=obj["annotator_id"],
                    score=int(obj["score"]),
                    timestamp=obj.get("timestamp", ""),
                )
            )
    return ratings


def latest_ratings(ratings: Iterable[LikertRating]) -> list[LikertRating]:
    """Collapse an append-only rating log to its effective entries.

    The annotation service lets a re-submission supersede an earlier score,
    so only the last entry per (annotator, image) counts.
    """
    latest: dict[tuple[str, str], LikertRating] = {}
    for rating in ratings:
        latest[(rating.annotator_id, rating.image_id)] = rating
    return list(latest.values())
