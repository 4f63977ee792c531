"""Judging, adapters, agreement statistics, and report aggregation."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from detailscribe.clients import ScriptedChatClient
from detailscribe.dataset import PromptRecord
from detailscribe.diffusion import MockBackend, generate, make_schedule
from detailscribe.evaluation import (
    JudgeParseError,
    LikertRating,
    MetricScore,
    MissingScore,
    MockVerifier,
    SkippedMetric,
    aggregate_report,
    mllm_likert,
    pairwise_agreement,
    score_with_adapter,
)
from detailscribe.evaluation.judge import build_judge_request
from detailscribe.evaluation.scores import LIKERT_SCALE

PNG = b"\x89PNG fake"


def _record(scenario="functional", subclass="tool-manipulation"):
    return PromptRecord(topic="cat-sail", prompt="A cat sails.", scenario=scenario, subclass=subclass)


# --- judge -----------------------------------------------------------------


def test_judge_parses_score():
    judge = ScriptedChatClient(["Looks nearly perfect. response: <4>"])
    score = mllm_likert(PNG, _record(), judge, image_id="i", prompt_id="0")
    assert score.value == 4.0
    assert score.metric == "mllm-likert"
    assert score.scale == LIKERT_SCALE


def test_judge_out_of_range_rejected():
    judge = ScriptedChatClient(["<6>"] * 3)
    with pytest.raises(JudgeParseError):
        mllm_likert(PNG, _record(), judge)


def test_judge_retries_then_succeeds():
    judge = ScriptedChatClient(["no score at all", "<3>"])
    score = mllm_likert(PNG, _record(), judge)
    assert score.value == 3.0
    assert len(judge.requests) == 2


def test_rubric_selection_by_scenario():
    functional = build_judge_request(PNG, _record("functional", "tool-manipulation"))
    multi = build_judge_request(PNG, _record("multi-subject", "interaction"))
    compositional = build_judge_request(PNG, _record("compositional", "abstract-layouts"))
    assert "Please rate the text-image alignment score" in functional.text()
    assert "Please rate the text-image alignment score" in multi.text()
    assert "identify objects and their spatial layout" in compositional.text()
    assert "identify objects and their spatial layout" not in functional.text()


def test_judge_request_substitutes_prompt_and_topic():
    record = _record()
    text = build_judge_request(PNG, record).text()
    assert record.prompt in text
    assert record.topic in text


# --- adapters ---------------------------------------------------------------


def test_mock_verifier_self_distance_zero():
    backend = MockBackend((3, 8, 8))
    verifier = MockVerifier()
    score = score_with_adapter(backend.target("p"), "p", verifier, image_id="a", prompt_id="0")
    assert score.value == 0.0
    assert score.metric == "mock-verifier"


def test_unconfigured_adapter_is_skipped():
    with pytest.raises(SkippedMetric):
        score_with_adapter(np.zeros((3, 8, 8)), "p", None)


def test_mock_verifier_prefers_matching_prompt():
    backend = MockBackend((3, 8, 8))
    schedule = make_schedule("linear", 50)
    verifier = MockVerifier()
    on_prompt = generate("a red fox", 1, backend, schedule)
    off_prompt = generate("a blue whale", 1, backend, schedule)
    assert verifier.score(on_prompt.data, "a red fox") > verifier.score(
        off_prompt.data, "a red fox"
    )


# --- agreement ---------------------------------------------------------------


def _ratings(scores_by_image, annotator="a1"):
    return [
        LikertRating(image_id=img, annotator_id=annotator, score=s)
        for img, s in scores_by_image.items()
    ]


def _metric(values_by_image, metric="mock-verifier"):
    return [
        MetricScore(image_id=img, prompt_id="0", metric=metric, value=v)
        for img, v in values_by_image.items()
    ]


def test_agreement_identical_order_is_one():
    images = [f"i{k}" for k in range(11)]
    human = _ratings({img: 1 + k % 5 for k, img in enumerate(images)})
    metric = _metric({img: float(1 + k % 5) for k, img in enumerate(images)})
    pairs = [(images[k], images[k + 1]) for k in range(10) if (k % 5) != (k + 1) % 5]
    report = pairwise_agreement(human, metric, pairs)
    assert report.agreement_fraction == 1.0
    assert report.pairs_used == len(pairs)


def test_agreement_inverted_is_zero():
    human = _ratings({"a": 5, "b": 1})
    metric = _metric({"a": 0.0, "b": 9.0})
    report = pairwise_agreement(human, metric, [("a", "b")])
    assert report.agreement_fraction == 0.0


def test_agreement_human_tie_excluded():
    human = _ratings({"a": 3, "b": 3, "c": 5})
    metric = _metric({"a": 1.0, "b": 2.0, "c": 3.0})
    report = pairwise_agreement(human, metric, [("a", "b"), ("a", "c")])
    assert report.pairs_total == 2
    assert report.pairs_used == 1
    assert report.agreement_fraction == 1.0


def test_agreement_metric_tie_is_half():
    human = _ratings({"a": 5, "b": 1})
    metric = _metric({"a": 2.0, "b": 2.0})
    report = pairwise_agreement(human, metric, [("a", "b")])
    assert report.agreement_fraction == 0.5


def test_latest_ratings_collapses_supersessions():
    from detailscribe.evaluation import latest_ratings

    log = [
        LikertRating(image_id="x", annotator_id="a", score=2, timestamp="t1"),
        LikertRating(image_id="x", annotator_id="a", score=5, timestamp="t2"),
        LikertRating(image_id="x", annotator_id="b", score=1, timestamp="t3"),
    ]
    effective = latest_ratings(log)
    assert len(effective) == 2
    assert {(r.annotator_id, r.score) for r in effective} == {("a", 5), ("b", 1)}


def test_agreement_missing_score_raises():
    human = _ratings({"a": 5, "b": 1})
    metric = _metric({"a": 1.0})
    with pytest.raises(MissingScore):
        pairwise_agreement(human, metric, [("a", "b")])
    with pytest.raises(MissingScore):
        pairwise_agreement(_ratings({"a": 5}), _metric({"a": 1.0, "b": 2.0}), [("a", "b")])


def brute_force_agreement(human, metric, pairs):
    """Independent pair-by-pair recount used as the oracle."""
    totals: dict[str, list[int]] = {}
    for rating in human:
        totals.setdefault(rating.image_id, []).append(rating.score)
    hmean = {}
    for image_id in totals:
        s = 0
        for v in totals[image_id]:
            s += v
        hmean[image_id] = s / len(totals[image_id])
    mval = {}
    for score in metric:
        mval[score.image_id] = score.value
    used = 0
    total = 0.0
    for a, b in pairs:
        if hmean[a] == hmean[b]:
            continue
        used += 1
        human_says_a = hmean[a] > hmean[b]
        if mval[a] == mval[b]:
            total += 0.5
        elif (mval[a] > mval[b]) == human_says_a:
            total += 1.0
    return used, (total / used if used else 0.0)


def _random_study(rng):
    images = [f"im{k}" for k in range(rng.randint(4, 12))]
    human = []
    for annotator in range(rng.randint(1, 3)):
        for img in images:
            human.append(
                LikertRating(image_id=img, annotator_id=f"a{annotator}", score=rng.randint(1, 5))
            )
    grid = [i / 8 for i in range(-16, 17)]  # dyadic values keep transforms exact
    metric = [
        MetricScore(image_id=img, prompt_id="0", metric="m", value=rng.choice(grid))
        for img in images
    ]
    pairs = []
    for _ in range(rng.randint(1, 15)):
        a, b = rng.sample(images, 2)
        pairs.append((a, b))
    return human, metric, pairs


def test_agreement_matches_brute_force_on_random_studies():
    rng = random.Random(991)
    for _ in range(300):
        human, metric, pairs = _random_study(rng)
        report = pairwise_agreement(human, metric, pairs)
        used, fraction = brute_force_agreement(human, metric, pairs)
        assert report.pairs_used == used
        assert report.agreement_fraction == fraction
        assert 0.0 <= report.agreement_fraction <= 1.0


def test_agreement_invariant_under_monotone_transforms():
    rng = random.Random(17)
    transforms = [lambda x: 2 * x + 3, lambda x: x**3, math.exp]
    for _ in range(50):
        human, metric, pairs = _random_study(rng)
        base = pairwise_agreement(human, metric, pairs)
        for f in transforms:
            mapped = [
                MetricScore(
                    image_id=s.image_id, prompt_id=s.prompt_id, metric=s.metric, value=f(s.value)
                )
                for s in metric
            ]
            assert (
                pairwise_agreement(human, mapped, pairs).agreement_fraction
                == base.agreement_fraction
            )


# --- report -----------------------------------------------------------------


TABLE3 = {
    "sd": (4.228, 1.323, 0.902, 0.336),
    "gpt-rewrite": (4.116, 1.193, 0.880, 0.268),
    "gpt-refine": (4.141, 1.255, 0.880, 0.300),
    "inf-scale": (4.126, 1.354, 0.922, 0.365),
    "external": (4.519, 1.222, 0.860, 0.312),
    "detailscribe": (4.570, 1.460, 0.923, 0.381),
}

AUTO_METRICS = ("mllm-likert", "imagereward", "clipscore", "blip-vqa")


def table3_fixture_scores() -> tuple[list[MetricScore], dict[str, str]]:
    """Integer-valid likert scores plus native metric values whose means equal
    the published-style table exactly."""
    scores: list[MetricScore] = []
    methods: dict[str, str] = {}
    for method, (likert_mean, imreward, clips, bvqa) in TABLE3.items():
        fives = round((likert_mean - 4.0) * 1000)
        for i in range(1000):
            image_id = f"{method}-img-{i}"
            methods[image_id] = method
            scores.append(
                MetricScore(
                    image_id=image_id,
                    prompt_id="0",
                    metric="mllm-likert",
                    value=5.0 if i < fives else 4.0,
                    scale=LIKERT_SCALE,
                )
            )
        anchor = f"{method}-img-0"
        for metric, value in zip(AUTO_METRICS[1:], (imreward, clips, bvqa)):
            scores.append(
                MetricScore(image_id=anchor, prompt_id="0", metric=metric, value=value)
            )
    return scores, methods


def _reference_records():
    return [
        PromptRecord(topic="t", prompt="p", scenario="functional", subclass="tool-manipulation")
    ]


def test_report_replays_table_values():
    scores, methods = table3_fixture_scores()
    tables = aggregate_report(scores, [], _reference_records(), methods)
    row = dict(zip(tables.metrics, tables.row("overall", "detailscribe")))
    assert f"{row['mllm-likert']:.3f}" == "4.570"
    assert f"{row['imagereward']:.3f}" == "1.460"
    assert f"{row['clipscore']:.3f}" == "0.923"
    assert f"{row['blip-vqa']:.3f}" == "0.381"
    text = tables.render_text()
    line = next(l for l in text.splitlines() if l.startswith("detailscribe"))
    assert line.split()[1:5] == ["4.570", "1.460", "0.923", "0.381"]


def test_report_single_method_single_scenario():
    scores = [
        MetricScore(image_id="x", prompt_id="0", metric="clipscore", value=0.5),
        MetricScore(image_id="y", prompt_id="0", metric="clipscore", value=0.7),
    ]
    tables = aggregate_report(scores, [], _reference_records(), {"x": "sd", "y": "sd"})
    assert tables.means["overall"]["sd"]["clipscore"] == pytest.approx(0.6)
    assert tables.means["functional"]["sd"]["clipscore"] == pytest.approx(0.6)


def test_report_human_aggregation_is_annotator_first():
    ratings = [
        LikertRating(image_id="x", annotator_id="a", score=5),
        LikertRating(image_id="y", annotator_id="a", score=5),
        LikertRating(image_id="x", annotator_id="b", score=1),
        LikertRating(image_id="y", annotator_id="b", score=1),
    ]
    tables = aggregate_report(
        [], ratings, _reference_records(), {"x": "sd", "y": "sd"}, {"x": "0", "y": "0"}
    )
    assert tables.means["overall"]["sd"]["human"] == 3.0


def test_report_permutation_invariant():
    scores, methods = table3_fixture_scores()
    shuffled = list(scores)
    random.Random(5).shuffle(shuffled)
    a = aggregate_report(scores, [], _reference_records(), methods)
    b = aggregate_report(shuffled, [], _reference_records(), methods)
    assert a.means == b.means


def test_report_csv_and_figures(tmp_path):
    scores, methods = table3_fixture_scores()
    tables = aggregate_report(scores, [], _reference_records(), methods)
    tables.write_csv(tmp_path / "report.csv")
    content = (tmp_path / "report.csv").read_text()
    assert "detailscribe" in content and "4.570" in content
    figures = tables.write_figures(tmp_path)
    assert figures and all(p.exists() for p in figures)
