"""Rule-based offline chat client.

Answers every pipeline template deterministically from the request text
alone, so full benchmark runs, evaluation, and dataset generation work with
no network and stay reproducible under any worker count. Assumes the
single-sentence prompts the bundled dataset uses.
"""

from __future__ import annotations

import re

from detailscribe.clients import ChatClient, ChatRequest, ChatResponse, ClientError
from detailscribe.schema import normalize_concept

REFINE_CLAUSE = (
    "Ensure every described interaction shows correct contact points and "
    "complete, well-formed parts."
)

_DECOMPOSE_HEAD = "We can decompose each abstract concept"
_CRITIQUE_HEAD = "This is an image generated with the prompt: "
_REWRITE_HEAD = "Rewrite the following text-to-image prompt"
_JUDGE_MARK = "Return the score in angle brackets"
_TOPICS_MARK = "different but similar concepts"
_COMPLETION_MARK = "Write down your answer in this format"

_CRITIQUE_PROMPT = re.compile(
    r"generated with the prompt: (.*?)\. But this image looks bizarre\.", re.DOTALL
)
_DECOMPOSE_TARGET = re.compile(r"1\.\s+Topic: (.*?)\n\s*Prompt: (.*?)$", re.DOTALL)
_REWRITE_PROMPT = re.compile(r"Prompt: (.*?)$", re.DOTALL)
_COMPLETION_TOPIC = re.compile(r'\{"topic": (.*?), "prompt"')


def refined_prompt_for(prompt: str) -> str:
    """The canned critic's rewrite: the prompt plus one fixed correction clause."""
    base = " ".join(prompt.split())
    if not base.endswith((".", "!", "?")):
        base += "."
    return f"{base} {REFINE_CLAUSE}"


class CannedClient(ChatClient):
    """Deterministic stand-in for both the text and multimodal hosted models."""

    def __init__(self, model_id: str = "canned", multimodal: bool = True) -> None:
        self.model_id = model_id
        self.multimodal = multimodal
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.requests.append(request)
        if request.has_images() and not self.multimodal:
            raise ClientError("client is text-only but the request carries an image")
        text = request.text()
        if text.startswith(_DECOMPOSE_HEAD):
            return ChatResponse(text=self._decompose(text))
        if text.startswith(_CRITIQUE_HEAD):
            return ChatResponse(text=self._critique(text))
        if text.startswith(_REWRITE_HEAD):
            return ChatResponse(text=self._rewrite(text))
        if _JUDGE_MARK in text:
            return ChatResponse(text="The image depicts the concept well. <4>")
        if _TOPICS_MARK in text:
            return ChatResponse(
                text="stack stones, fold paper boat, braid rope, carve gourd, polish lantern"
            )
        if _COMPLETION_MARK in text:
            return ChatResponse(text=self._completion(text))
        raise ClientError("canned client does not recognize this request shape")

    @staticmethod
    def _decompose(text: str) -> str:
        m = _DECOMPOSE_TARGET.search(text)
        if not m:
            raise ClientError("decomposition request carries no target concept")
        topic = normalize_concept(m.group(1))
        words = topic.replace("-", " ")
        return (
            f"(concept: {topic}) = ({words} is clearly depicted) + "
            "(subject makes correct contact with the object) + "
            "(background supports the scene)"
        )

    @staticmethod
    def _critique(text: str) -> str:
        m = _CRITIQUE_PROMPT.search(text)
        if not m:
            raise ClientError("critique request carries no prompt")
        refined = refined_prompt_for(m.group(1))
        return (
            "1. The key interaction looks incomplete. Correction: draw the contact clearly.\n"
            "2. A supporting part is malformed. Correction: complete the missing part.\n"
            "Ranking: 1, 2\n"
            f"<{refined}>"
        )

    @staticmethod
    def _rewrite(text: str) -> str:
        m = _REWRITE_PROMPT.search(text)
        if not m:
            raise ClientError("rewrite request carries no prompt")
        return refined_prompt_for(m.group(1))

    @staticmethod
    def _completion(text: str) -> str:
        m = _COMPLETION_TOPIC.search(text)
        if not m:
            raise ClientError("completion request carries no topic")
        topic = normalize_concept(m.group(1).strip('"'))
        words = topic.replace("-", " ")
        return (
            f'{{"topic": "{topic}", "prompt": "An anime of a fox engaged in '
            f'{words} beside a quiet pond."}}'
        )
