"""Image critique: request construction and response validation.

The critic sees the generated image plus the decomposition checklist, lists
what is wrong, and rewrites the prompt. Two hard rules shape the rewrite:
its first sentence must stay the original prompt, and it must stay short
(compliant at <= 70 words, tolerated to 90, rejected past that).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from detailscribe import DetailScribeError
from detailscribe.clients import ChatClient, ChatRequest, ImagePart, Message, TextPart
from detailscribe.schema import ConceptSchema, render_schema

logger = logging.getLogger(__name__)

WORD_LIMIT_SOFT = 70
WORD_LIMIT_HARD = 90


class CritiqueParseError(DetailScribeError):
    """A critique response failed validation; the call should be retried."""


class MissingRefinedPrompt(CritiqueParseError):
    """No angle-bracket span to take the refined prompt from."""


class FirstSentenceChanged(CritiqueParseError):
    """The refined prompt no longer starts with the original prompt."""


class OverLengthPrompt(CritiqueParseError):
    """The refined prompt exceeds the hard word limit."""


class CritiqueFailed(DetailScribeError):
    """No valid critique within the retry budget; carries the last parse error."""

    def __init__(self, message: str, last_error: CritiqueParseError | None = None) -> None:
        super().__init__(message)
        self.last_error = last_error


@dataclass(frozen=True)
class Critique:
    """Parsed critique: ranked issues plus the validated refined prompt."""

    issues: tuple[dict, ...]
    ranking: tuple[int, ...]
    refined_prompt: str
    raw_response: str
    attempts: int = 1

    def to_dict(self) -> dict:
        return {
            "issues": [dict(i) for i in self.issues],
            "ranking": list(self.ranking),
            "refined_prompt": self.refined_prompt,
            "raw_response": self.raw_response,
            "attempts": self.attempts,
        }


CRITIQUE_TEMPLATE = """\
This is an image generated with the prompt: {prompt}. But this image looks bizarre. Examine the image carefully follow the concept of {topic} attached below and other components in the image. For each abnormal part, describe what is wrong with it, then give a concise description on how to correct it.

Components: {components}

Do not simply rely on the components described above, but also exam whether an object looks complete.
First, write your answer in a numbered list,
Then, rank the issues by their degree of impact on presenting the concept.
Last, summarize the correction instructions in order, and write a new description with the first sentence to be {prompt} followed by correction instructions.

Do not change the first sentence.
Be concise, no more than 70 words, but make sure not to miss any information that needs to be corrected.
Provide the new description in angle brackets <>.
The components described in the original prompt are essential, do not question the concepts in the original prompt."""


def build_critique_request(
    prompt: str,
    topic: str,
    schema: ConceptSchema | None,
    image_png: bytes,
    model_id: str = "",
    temperature: float = 0.0,
) -> ChatRequest:
    """Render the critique template and attach the image.

    ``schema=None`` leaves the components section empty (the decomposition
    ablation); otherwise the schema is embedded in its canonical rendering.
    """
    components = render_schema(schema) if schema is not None else ""
    body = CRITIQUE_TEMPLATE.format(prompt=prompt, topic=topic, components=components)
    return ChatRequest(
        messages=(
            Message(
                role="user",
                parts=(TextPart(body), ImagePart(media_type="image/png", data=image_png)),
            ),
        ),
        temperature=temperature,
        model_id=model_id,
    )


def normalize_text(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip()


_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


def first_sentence(text: str) -> str:
    """Text up to the first '.', '!' or '?' that is followed by space or end."""
    m = _SENTENCE_END.search(text)
    if m is None:
        return text
    return text[: m.end()]


def _comparable(text: str) -> str:
    return normalize_text(text).rstrip(".")


def word_count(text: str) -> int:
    return len(normalize_text(text).split())


_BRACKET_SPAN = re.compile(r"<([^<>]*)>")
_ISSUE_LINE = re.compile(r"^\s*(\d+)[.):]\s+(.*\S)\s*$")
_RANKING_LINE = re.compile(r"^\s*rank(?:ing)?\b[^\d]*((?:\d+[,\s>]*)+)$", re.IGNORECASE)


def _parse_issues(text: str) -> tuple[dict, ...]:
    issues = []
    for line in text.splitlines():
        m = _ISSUE_LINE.match(line)
        if not m:
            continue
        body = m.group(2)
        correction = ""
        split = re.split(r"\b[Cc]orrection:?\s*", body, maxsplit=1)
        description = split[0].strip(" ;,-")
        if len(split) > 1:
            correction = split[1].strip()
        issues.append({"description": description, "correction": correction})
    return tuple(issues)


def _parse_ranking(text: str, n_issues: int) -> tuple[int, ...]:
    for line in text.splitlines():
        m = _RANKING_LINE.match(line)
        if not m:
            continue
        order = [int(x) - 1 for x in re.findall(r"\d+", m.group(1))]
        if sorted(order) == list(range(n_issues)):
            return tuple(order)
    return tuple(range(n_issues))


def parse_critique_response(text: str, original_prompt: str) -> Critique:
    """Extract and validate a critique from raw model output.

    The refined prompt is the last top-level angle-bracket span. Issue-list
    and ranking parsing are best effort and never fail; the three declared
    errors are the only exits besides success.
    """
    spans = [s for s in _BRACKET_SPAN.findall(text) if s.strip()]
    if not spans:
        raise MissingRefinedPrompt("no non-empty angle-bracket span in response")
    refined = normalize_text(spans[-1])

    if _comparable(first_sentence(refined)) != _comparable(original_prompt):
        raise FirstSentenceChanged(
            f"refined prompt starts {first_sentence(refined)!r}, expected {original_prompt!r}"
        )
    words = word_count(refined)
    if words > WORD_LIMIT_HARD:
        raise OverLengthPrompt(f"refined prompt has {words} words (hard limit {WORD_LIMIT_HARD})")
    if words > WORD_LIMIT_SOFT:
        logger.warning(
            "refined prompt has %d words, over the %d-word target", words, WORD_LIMIT_SOFT
        )

    narrative = text[: text.rfind("<")]
    issues = _parse_issues(narrative)
    ranking = _parse_ranking(narrative, len(issues))
    return Critique(issues=issues, ranking=ranking, refined_prompt=refined, raw_response=text)


def critique_image(
    image_png: bytes,
    prompt: str,
    topic: str,
    schema: ConceptSchema | None,
    client: ChatClient,
    max_attempts: int = 3,
) -> Critique:
    """Build, send, and parse a critique, retrying on validation failures."""
    request = build_critique_request(
        prompt, topic, schema, image_png, model_id=client.model_id
    )
    last_error: CritiqueParseError | None = None
    for attempt in range(1, max_attempts + 1):
        response = client.complete(request)
        try:
            critique = parse_critique_response(response.text, prompt)
            return Critique(
                issues=critique.issues,
                ranking=critique.ranking,
                refined_prompt=critique.refined_prompt,
                raw_response=critique.raw_response,
                attempts=attempt,
            )
        except CritiqueParseError as exc:
            last_error = exc
            logger.warning("critique attempt %d rejected: %s", attempt, exc)
    raise CritiqueFailed(
        f"no valid critique after {max_attempts} attempts: {last_error}", last_error
    )
