"""Human/metric preference agreement over image pairs.

For each pair the human preference is the sign of the difference of mean
human scores; pairs the humans tie on are excluded. A metric earns 1 for
matching the human sign, 0.5 for a tie of its own, 0 otherwise. Because only
signs of differences enter, the statistic is invariant under any strictly
increasing transform of the metric's scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from detailscribe import DetailScribeError
from detailscribe.evaluation.scores import LikertRating, MetricScore

TIE_POLICY_NOTE = (
    "tie policy: pairs with tied mean human scores are excluded; "
    "metric ties count 0.5"
)


class MissingScore(DetailScribeError):
    """A paired image lacks a human rating or a metric score."""


@dataclass(frozen=True)
class AgreementReport:
    metric: str
    pairs_total: int
    pairs_used: int
    agreement_fraction: float
    note: str = TIE_POLICY_NOTE

    def __post_init__(self) -> None:
        if self.pairs_used > self.pairs_total:
            raise ValueError("pairs_used cannot exceed pairs_total")
        if not (0.0 <= self.agreement_fraction <= 1.0):
            raise ValueError("agreement_fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "pairs_total": self.pairs_total,
            "pairs_used": self.pairs_used,
            "agreement_fraction": self.agreement_fraction,
            "note": self.note,
        }


def mean_human_scores(ratings: Iterable[LikertRating]) -> dict[str, float]:
    """Mean rating per image id. fsum keeps the mean order-independent."""
    by_image: dict[str, list[int]] = {}
    for r in ratings:
        by_image.setdefault(r.image_id, []).append(r.score)
    return {img: math.fsum(scores) / len(scores) for img, scores in by_image.items()}


def pairwise_agreement(
    human: Iterable[LikertRating],
    metric: Iterable[MetricScore],
    pairing: Sequence[tuple[str, str]],
) -> AgreementReport:
    """Fraction of pairs on which a metric's preference matches the humans'."""
    metric_scores = list(metric)
    names = {s.metric for s in metric_scores}
    if len(names) > 1:
        raise MissingScore(f"pass one metric at a time, got {sorted(names)}")
    metric_name = names.pop() if names else "unknown"
    value_of = {s.image_id: s.value for s in metric_scores}
    human_of = mean_human_scores(human)

    pairs_used = 0
    agreement = 0.0
    for a, b in pairing:
        for img in (a, b):
            if img not in human_of:
                raise MissingScore(f"image {img} has no human rating")
            if img not in value_of:
                raise MissingScore(f"image {img} has no {metric_name} score")
        human_sign = _sign(human_of[a] - human_of[b])
        if human_sign == 0:
            continue
        pairs_used += 1
        metric_sign = _sign(value_of[a] - value_of[b])
        if metric_sign == human_sign:
            agreement += 1.0
        elif metric_sign == 0:
            agreement += 0.5
    fraction = agreement / pairs_used if pairs_used else 0.0
    return AgreementReport(
        metric=metric_name,
        pairs_total=len(pairing),
        pairs_used=pairs_used,
        agreement_fraction=fraction,
    )


def build_pairing(image_methods: dict[str, str], image_prompts: dict[str, str]) -> list[tuple[str, str]]:
    """All unordered pairs of different methods' images for the same prompt.

    Pairs are ordered deterministically: by prompt id, then by image id.
    """
    by_prompt: dict[str, list[str]] = {}
    for image_id in sorted(image_methods):
        prompt_id = image_prompts.get(image_id)
        if prompt_id is not None:
            by_prompt.setdefault(prompt_id, []).append(image_id)
    pairs = []
    for prompt_id in sorted(by_prompt):
        images = by_prompt[prompt_id]
        for i, a in enumerate(images):
            for b in images[i + 1 :]:
                if image_methods[a] != image_methods[b]:
                    pairs.append((a, b))
    return pairs


def _sign(x: float) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0
