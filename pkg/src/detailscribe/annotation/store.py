"""Append-only rating log.

Every submission appends one JSONL line; nothing is ever rewritten. The
effective rating for (annotator, image) is the latest entry, so corrections
are plain re-submissions and a restart reconstructs the exact study state
from the log alone.
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path

from detailscribe import DetailScribeError
from detailscribe.evaluation.scores import LikertRating


class ScoreOutOfRange(DetailScribeError):
    pass


class UnknownImage(DetailScribeError):
    pass


class RatingStore:
    def __init__(self, log_path: str | Path) -> None:
        self.log_path = Path(log_path)
        self._lock = threading.Lock()
        self._entries: list[LikertRating] = []
        if self.log_path.exists():
            with open(self.log_path, encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    self._entries.append(
                        LikertRating(
                            image_id=obj["image_id"],
                            annotator_id=obj["annotator_id"],
                            score=int(obj["score"]),
                            timestamp=obj.get("timestamp", ""),
                        )
                    )

    def append(self, annotator_id: str, image_id: str, score: int) -> LikertRating:
        if score not in (1, 2, 3, 4, 5):
            raise ScoreOutOfRange(f"score must be in 1..5, got {score}")
        rating = LikertRating(
            image_id=image_id,
            annotator_id=annotator_id,
            score=score,
            timestamp=datetime.now(timezone.utc).isoformat(),
        )
        with self._lock:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(rating.to_dict(), ensure_ascii=False) + "\n")
            self._entries.append(rating)
        return rating

    @property
    def log_length(self) -> int:
        with self._lock:
            return len(self._entries)

    def effective(self) -> dict[tuple[str, str], LikertRating]:
        """Latest rating per (annotator, image); earlier entries stay in the log."""
        with self._lock:
            snapshot = list(self._entries)
        latest: dict[tuple[str, str], LikertRating] = {}
        for rating in snapshot:
            latest[(rating.annotator_id, rating.image_id)] = rating
        return latest

    def effective_ratings(self) -> list[LikertRating]:
        return list(self.effective().values())

    def scores_for(self, annotator_id: str) -> dict[str, int]:
        return {
            image_id: rating.score
            for (annotator, image_id), rating in self.effective().items()
            if annotator == annotator_id
        }
