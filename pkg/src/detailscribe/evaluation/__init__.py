"""Automatic scoring, human/metric agreement, and report tables."""

from detailscribe.evaluation.adapters import (
    AdapterError,
    HttpScoreAdapter,
    MockVerifier,
    ScoreAdapter,
    SkippedMetric,
    score_with_adapter,
)
from detailscribe.evaluation.agreement import AgreementReport, MissingScore, pairwise_agreement
from detailscribe.evaluation.judge import JudgeParseError, mllm_likert
from detailscribe.evaluation.report import ReportTables, aggregate_report
from detailscribe.evaluation.scores import (
    LikertRating,
    MetricScore,
    latest_ratings,
    load_ratings,
    load_scores,
    save_scores,
)

__all__ = [
    "AdapterError",
    "AgreementReport",
    "HttpScoreAdapter",
    "JudgeParseError",
    "LikertRating",
    "latest_ratings",
    "MetricScore",
    "MissingScore",
    "MockVerifier",
    "ReportTables",
    "ScoreAdapter",
    "SkippedMetric",
    "aggregate_report",
    "load_ratings",
    "load_scores",
    "mllm_likert",
    "pairwise_agreement",
    "save_scores",
    "score_with_adapter",
]
