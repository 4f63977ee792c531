"""Blinded human-rating service: task assignment plus an append-only log."""

from detailscribe.annotation.store import (
    RatingStore,
    ScoreOutOfRange,
    UnknownImage,
)
from detailscribe.annotation.study import RatingTask, Study
from detailscribe.annotation.service import create_app

__all__ = [
    "RatingStore",
    "RatingTask",
    "ScoreOutOfRange",
    "Study",
    "UnknownImage",
    "create_app",
]
