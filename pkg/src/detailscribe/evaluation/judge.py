"""Multimodal-model Likert judging.

The judge sees the image plus a scenario-specific rubric and must answer
with a 1-5 score in angle brackets. Interaction-style scenarios (functional,
multi-subject) use the interaction rubric; compositional prompts use the
spatial-layout rubric.
"""

from __future__ import annotations

import logging
import re

from detailscribe import DetailScribeError
from detailscribe.clients import ChatClient, ChatRequest, ImagePart, Message, TextPart
from detailscribe.dataset import PromptRecord
from detailscribe.evaluation.scores import LIKERT_SCALE, MetricScore

logger = logging.getLogger(__name__)


class JudgeParseError(DetailScribeError):
    """The judge never produced a usable in-range score."""


INTERACTION_RUBRIC = """\
The above images were generated with the prompt: {prompt}.
Please rate the text-image alignment score of each image from 1 to 5, focusing on {topic} and follow the criteria:

1: poor interaction, subject(s) not acting correctly.
2: subject(s) incorrect/inaccurate.
3: critical part missing (e.g., missing critical tools or patterns to complete {topic}).
4: nearly perfect but some subparts need further improvement (e.g., needs to refine appearance of tools or limbs, subject is not {topic} correctly).
5: image perfectly depicts {topic}.

Return the score in angle brackets <>. For example, if the image is nearly perfect and got score 4, response: <4>"""

SPATIAL_RUBRIC = """\
You are my assistant to identify objects and their spatial layout in the image. According to the image, evaluate if the text {prompt} is correctly portrayed in the image.

Give a score from 1 to 5 according to the criteria:
5: correct spatial layout ({topic}) in the image for all objects mentioned in the text.
4: basically, spatial layout of objects matches the text.
3: spatial layout not aligned properly with the text.
2: image not aligned properly with the text.
1: image almost irrelevant to the text.

Return the score in angle brackets <>. For example, if the image's spatial layout of objects matches the text and got score 4, response: <4>"""


def rubric_for_scenario(scenario: str) -> str:
    """Spatial rubric for compositional prompts, interaction rubric otherwise."""
    return SPATIAL_RUBRIC if scenario == "compositional" else INTERACTION_RUBRIC


def build_judge_request(
    image_png: bytes, record: PromptRecord, model_id: str = "", temperature: float = 0.0
) -> ChatRequest:
    body = rubric_for_scenario(record.scenario).format(
        prompt=record.prompt, topic=record.topic
    )
    return ChatRequest(
        messages=(
            Message(
                role="user",
                parts=(
                    ImagePart(media_type="image/png", data=image_png),
                    TextPart(body),
                ),
            ),
        ),
        temperature=temperature,
        model_id=model_id,
    )


_SCORE_SPAN = re.compile(r"<\s*(\d+)\s*>")


def parse_judge_score(text: str) -> int:
    spans = _SCORE_SPAN.findall(text)
    if not spans:
        raise JudgeParseError(f"no <score> span in judge response: {text!r}")
    value = int(spans[-1])
    if value not in (1, 2, 3, 4, 5):
        raise JudgeParseError(f"judge score {value} outside 1..5")
    return value


def mllm_likert(
    image_png: bytes,
    record: PromptRecord,
    judge: ChatClient,
    image_id: str = "",
    prompt_id: str = "",
    max_attempts: int = 3,
) -> MetricScore:
    """Judge one image against its prompt, retrying unparseable answers."""
    request = build_judge_request(image_png, record, model_id=judge.model_id)
    last_error: JudgeParseError | None = None
    for attempt in range(1, max_attempts + 1):
        response = judge.complete(request)
        try:
            value = parse_judge_score(response.text)
        except JudgeParseError as exc:
            last_error = exc
            logger.warning("judge attempt %d unparseable: %s", attempt, exc)
            continue
        return MetricScore(
            image_id=image_id,
            prompt_id=prompt_id,
            metric="mllm-likert",
            value=float(value),
            scale=LIKERT_SCALE,
        )
    raise JudgeParseError(f"no valid judge score after {max_attempts} attempts: {last_error}")
