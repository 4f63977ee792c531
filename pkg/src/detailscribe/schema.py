"""Concept decomposition schemas.

A user prompt is broken down into a named concept plus an ordered list of
interaction components, written in the textual form

    (concept: polar-bear-cut-cake) = (paw hold knife) + (knife cut through cake) + (cake rest on plate)

The components act as a checklist for the image critique step. Parsing is
deliberately tolerant of the noise chat models wrap around that core shape.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from detailscribe import DetailScribeError
from detailscribe.clients import ChatClient, ChatRequest, text_message

logger = logging.getLogger(__name__)


class MalformedSchema(DetailScribeError):
    """The text does not contain a well-formed decomposition."""


class DecompositionFailed(DetailScribeError):
    """The model never produced a parseable decomposition within the retry budget."""


def normalize_concept(name: str) -> str:
    """Lowercase a concept name and join internal whitespace with hyphens."""
    return re.sub(r"\s+", "-", name.strip().lower())


@dataclass(frozen=True)
class ConceptSchema:
    """A concept name plus its ordered interaction components."""

    concept: str
    components: tuple[str, ...]
    source_prompt: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "concept", normalize_concept(self.concept))
        cleaned = tuple(c.strip() for c in self.components)
        if not self.concept:
            raise MalformedSchema("concept name is empty")
        if not cleaned:
            raise MalformedSchema("schema has no components")
        for c in cleaned:
            if not c:
                raise MalformedSchema("empty component")
            if "(" in c or ")" in c:
                raise MalformedSchema(f"component contains parenthesis: {c!r}")
        object.__setattr__(self, "components", cleaned)

    def to_dict(self) -> dict:
        return {
            "concept": self.concept,
            "components": list(self.components),
            "source_prompt": self.source_prompt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConceptSchema":
        return cls(
            concept=d["concept"],
            components=tuple(d["components"]),
            source_prompt=d.get("source_prompt", ""),
        )


_HEAD_RE = re.compile(r"\(\s*concept\s*:\s*([^()]+?)\s*\)\s*=", re.IGNORECASE)


def parse_schema(text: str, source_prompt: str = "") -> ConceptSchema:
    """Parse decomposition text into a :class:`ConceptSchema`.

    Accepts arbitrary whitespace around ``=``, ``+`` and the parentheses, and
    ignores any prose before the head or after the last component (model
    responses routinely carry both). Raises :class:`MalformedSchema` when the
    head is missing, a component is unbalanced, or no component follows.
    """
    heads = list(_HEAD_RE.finditer(text))
    if not heads:
        raise MalformedSchema("no '(concept: NAME) =' head found")
    if len(heads) > 1:
        raise MalformedSchema("multiple '(concept: NAME) =' heads found")
    head = heads[0]
    concept = head.group(1)

    components: list[str] = []
    pos = head.end()
    while True:
        m = re.match(r"\s*\(", text[pos:])
        if not m:
            break
        open_pos = pos + m.end() - 1
        close_pos = text.find(")", open_pos + 1)
        if close_pos < 0:
            raise MalformedSchema("unbalanced parenthesis in component list")
        components.append(text[open_pos + 1 : close_pos])
        pos = close_pos + 1
        plus = re.match(r"\s*\+", text[pos:])
        if not plus:
            break
        pos += plus.end()
        # a '+' promises another component
        if not re.match(r"\s*\(", text[pos:]):
            raise MalformedSchema("dangling '+' without a component")
    if not components:
        raise MalformedSchema("no components after '='")
    normalized = tuple(re.sub(r"\s+", " ", c).strip() for c in components)
    return ConceptSchema(concept=concept, components=normalized, source_prompt=source_prompt)


def render_schema(schema: ConceptSchema) -> str:
    """Render the canonical single-line form, inverse of :func:`parse_schema`."""
    comps = " + ".join(f"({c})" for c in schema.components)
    return f"(concept: {schema.concept}) = {comps}"


DECOMPOSITION_TEMPLATE = """\
We can decompose each abstract concept into interactions defined by contact points and contact objects.
For example,
(concept: cooking)=
(hand hold the handle of a ladle) + (ladle stir the ingredient in the pot) + (pot is on a stove)

Please do the same for the following concepts in the same format without explanation.
Keep the program simple. Use only the most necessary parts of the schema that can be mapped to objects in an image. Describe only the interactions that can happen simultaneously.

{concepts}"""


def build_decomposition_request(
    prompt: str,
    topic: str,
    model_id: str = "",
    temperature: float = 0.0,
) -> ChatRequest:
    """Render the one-shot decomposition request for a single (topic, prompt)."""
    concepts = f"1.  Topic: {topic}\n    Prompt: {prompt}"
    body = DECOMPOSITION_TEMPLATE.format(concepts=concepts)
    return ChatRequest(
        messages=(text_message("user", body),),
        temperature=temperature,
        model_id=model_id,
    )


def decompose(
    prompt: str,
    topic: str,
    client: ChatClient,
    max_attempts: int = 3,
) -> tuple[ConceptSchema, int]:
    """Ask the chat model to decompose ``prompt`` and parse its answer.

    Retries the identical request up to ``max_attempts`` times while the
    response fails to parse. Returns the schema together with the number of
    attempts actually spent, for trace bookkeeping.
    """
    if not prompt.strip():
        raise DecompositionFailed("prompt is empty")
    request = build_decomposition_request(prompt, topic, model_id=client.model_id)
    last_error: MalformedSchema | None = None
    for attempt in range(1, max_attempts + 1):
        response = client.complete(request)
        try:
            schema = parse_schema(response.text, source_prompt=prompt)
            return schema, attempt
        except MalformedSchema as exc:
            last_error = exc
            logger.warning("decomposition attempt %d unparseable: %s", attempt, exc)
    raise DecompositionFailed(
        f"no parseable decomposition after {max_attempts} attempts: {last_error}"
    )
