"""The InterActing prompt dataset: generation, loading, validation, sampling.

Records live in JSONL, one {"topic", "prompt", "scenario", "subclass"}
object per line. A reference copy with the canonical per-subclass counts is
bundled at data/interacting.jsonl in the repository root.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from detailscribe import DetailScribeError
from detailscribe.clients import ChatClient, ChatRequest, text_message
from detailscribe.schema import normalize_concept

logger = logging.getLogger(__name__)

SCENARIOS = ("functional", "multi-subject", "compositional")

SUBCLASSES_BY_SCENARIO = {
    "functional": ("tool-manipulation", "physical-contact"),
    "multi-subject": ("interaction",),
    "compositional": ("abstract-layouts", "geometric-patterns"),
}

SCENARIO_BY_SUBCLASS = {
    sub: scen for scen, subs in SUBCLASSES_BY_SCENARIO.items() for sub in subs
}

# canonical reference distribution the bundled file must reproduce
REFERENCE_COUNTS = {
    "total": 1000,
    "functional": 600,
    "multi-subject": 200,
    "compositional": 200,
    "tool-manipulation": 227,
    "physical-contact": 373,
    "interaction": 200,
    "abstract-layouts": 183,
    "geometric-patterns": 17,
}


class ParseError(DetailScribeError):
    """A dataset file line failed validation."""

    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class InvalidArgument(DetailScribeError):
    pass


class EmptyTopicList(DetailScribeError):
    pass


class MalformedCompletion(DetailScribeError):
    pass


class TopicMismatch(DetailScribeError):
    pass


@dataclass(frozen=True)
class PromptRecord:
    """One dataset entry. Topics normalize to lowercase hyphenated form."""

    topic: str
    prompt: str
    scenario: str
    subclass: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "topic", normalize_concept(self.topic))
        if not self.prompt.strip():
            raise ParseError("prompt is empty")
        if self.scenario not in SCENARIOS:
            raise ParseError(f"unknown scenario {self.scenario!r}")
        if self.subclass not in SUBCLASSES_BY_SCENARIO[self.scenario]:
            raise ParseError(
                f"subclass {self.subclass!r} inconsistent with scenario {self.scenario!r}"
            )

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "prompt": self.prompt,
            "scenario": self.scenario,
            "subclass": self.subclass,
        }


def reference_dataset_path() -> Path:
    """Path of the bundled reference copy (repository checkout layout)."""
    return Path(__file__).resolve().parents[2] / "data" / "interacting.jsonl"


TOPIC_TEMPLATES = {
    ("functional", "tool-manipulation"): """\
Given a tool manipulation action, we can create some novel and previously unseen scene or cartoon that can be present by an image. For example,

Concept: Cut-Cake
Tool: knife
Image description: n anime of a polar bear carefully cutting a berry cake.

Think of concepts similar to cut-cake, carve-wood, cut-pizza, paint-portrait. Provide 150 different but similar concepts, separate them by comma ','.
All lowercase please.""",
    ("functional", "physical-contact"): """\
Given an action has direct physical contact, we can create some novel and previously unseen scene or cartoon that can be present by an image. For example,

Concept: sculpting-snow
Image description: A rabbit carefully sculpts a tiny snow bunny with its paws, adding details like ears and whiskers to the figure.

Think of concepts similar to stacking, holding. Provide 150 different but similar concepts, separate them by comma ','.
All lowercase please.""",
    ("multi-subject", "interaction"): """\
Given a verb of 2 subjects' interaction, we can create some novel and previously unseen scene or cartoon that can be present by an image. For example,

Concept: High-Fiving
Image description: A dolphin and a seal leap from the water, high-fiving with their flippers.

Think of concepts similar to High-Fiving, Lifting-Togethe, huddling-for Warmth. Provide 100 different but similar concepts, separate them by comma ','.
All lowercase please.""",
    ("compositional", "abstract-layouts"): """\
Given an abstract concept, we can create some novel scene that can be present by an image. For example,

Concept: tic-tac-toe
Image description: A tic-tac-toe composed by tomato and cucumber as the players symbols.

Think of concepts similar to tic-tac-toe, atom, triangle, tree. Provide 300 different but similar concepts, separate them by comma ','.
All lowercase please.""",
}
# both compositional subclasses share one topic template; the requested
# subclass labels whatever comes back
TOPIC_TEMPLATES[("compositional", "geometric-patterns")] = TOPIC_TEMPLATES[
    ("compositional", "abstract-layouts")
]

COMPLETION_TEMPLATES = {
    "functional": """\
Come up with a description of an animal {content}, the description should be similar as the following example and uncommon to be observed. Do not use passive voice.
Double check the description to focus on major relation, which is {content}.
Write down your answer in this format: {{"topic": {content}, "prompt": description}}
For example:
interaction: "taking photos"
Entities: squirrel
Description: A squirrel taking photos with a camera.
Then, the output should be: {{"topic": "taking-photos", "prompt": "A squirrel taking photos with a camera."}}""",
    "multi-subject": """\
Come up with a description of two animals doing {content}, the description should be similar as the following example and uncommon to be observed. Do not use passive voice.
Double check the description to focus on major relation, which is {content}.
Write down your answer in this format: {{"topic": {content}, "prompt": description}}
The description must contains the exact {content} word.
For example:
Concept: "High-Fiving"
Description: A dolphin and a seal leap from the water, high-fiving with their flippers.
Then, the output should be: {{"topic": "High-Fiving", "prompt": "A dolphin and a seal leap from the water, high-fiving with their flippers."}}""",
    "compositional": """\
Come up with a description of a scene which is a novel combination of {content}, the description should be similar as the following example and uncommon to be observed. Do not use passive voice.
Double check the description to focus on major relation, which is {content}.
Write down your answer in this format: {{"topic": {content}, "prompt": description}}
For example:
Concept: "tic-tac-toe"
Description: A tic-tac-toe composed by tomato and cucumber as the players symbols.
Then, the output should be: {{"topic": "tic-tac-toe", "prompt": "A tic-tac-toe composed by tomato and cucumber as the players symbols."}}""",
}


def generate_topics(scenario: str, subclass: str, client: ChatClient) -> list[str]:
    """Ask the model for topic ideas; returns deduplicated lowercase topics."""
    template = TOPIC_TEMPLATES.get((scenario, subclass))
    if template is None:
        raise InvalidArgument(f"no topic template for ({scenario!r}, {subclass!r})")
    request = ChatRequest(
        messages=(text_message("user", template),), model_id=client.model_id
    )
    response = client.complete(request)
    topics: list[str] = []
    seen: set[str] = set()
    for raw in response.text.split(","):
        topic = normalize_concept(raw)
        if topic and topic not in seen:
            seen.add(topic)
            topics.append(topic)
    if not topics:
        raise EmptyTopicList("response contained no topics")
    return topics


_JSON_OBJECT = re.compile(r"\{.*\}", re.DOTALL)


def complete_prompt(
    topic: str, scenario: str, client: ChatClient, subclass: str | None = None
) -> PromptRecord:
    """Expand a topic into a full prompt via the scenario's completion template."""
    template = COMPLETION_TEMPLATES.get(scenario)
    if template is None:
        raise InvalidArgument(f"no completion template for scenario {scenario!r}")
    if subclass is None:
        subclass = SUBCLASSES_BY_SCENARIO[scenario][0]
    request = ChatRequest(
        messages=(text_message("user", template.format(content=topic)),),
        model_id=client.model_id,
    )
    response = client.complete(request)
    m = _JSON_OBJECT.search(response.text)
    if not m:
        raise MalformedCompletion(f"no JSON object in completion: {response.text!r}")
    try:
        obj = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        raise MalformedCompletion(f"completion is not valid JSON: {exc}") from exc
    if "topic" not in obj or "prompt" not in obj:
        raise MalformedCompletion("completion object must carry 'topic' and 'prompt'")
    echoed = normalize_concept(str(obj["topic"]))
    if echoed != normalize_concept(topic):
        raise TopicMismatch(f"asked for {topic!r}, model answered for {echoed!r}")
    return PromptRecord(
        topic=echoed, prompt=str(obj["prompt"]), scenario=scenario, subclass=subclass
    )


def load_dataset(path: str | Path) -> list[PromptRecord]:
    """Read a JSONL dataset, validating each record. Raises ParseError with the line number."""
    records: list[PromptRecord] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", line=lineno) from exc
            try:
                records.append(
                    PromptRecord(
                        topic=obj["topic"],
                        prompt=obj["prompt"],
                        scenario=obj["scenario"],
                        subclass=obj["subclass"],
                    )
                )
            except (KeyError, TypeError) as exc:
                raise ParseError(f"missing field: {exc}", line=lineno) from exc
            except ParseError as exc:
                raise ParseError(str(exc), line=lineno) from exc
    return records


def save_dataset(records: Iterable[PromptRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class StatReport:
    """Observed versus reference per-scenario and per-subclass counts."""

    counts: dict
    expected: dict
    deviations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.deviations


def validate_statistics(records: Sequence[PromptRecord]) -> StatReport:
    """Count scenario/subclass occurrences and flag deviations from the reference."""
    counts = {key: 0 for key in REFERENCE_COUNTS}
    counts["total"] = len(records)
    for r in records:
        counts[r.scenario] += 1
        counts[r.subclass] += 1
    deviations = tuple(
        f"{key}: expected {REFERENCE_COUNTS[key]}, found {counts[key]}"
        for key in REFERENCE_COUNTS
        if counts[key] != REFERENCE_COUNTS[key]
    )
    return StatReport(counts=counts, expected=dict(REFERENCE_COUNTS), deviations=deviations)


def scenario_quotas(records: Sequence[PromptRecord], n: int) -> dict[str, int]:
    """Per-scenario sample quotas: floored proportional shares, remainder to the
    largest scenario (spilling to the next largest when a scenario is full)."""
    sizes = {s: sum(1 for r in records if r.scenario == s) for s in SCENARIOS}
    total = len(records)
    quotas = {s: (n * sizes[s]) // total if total else 0 for s in SCENARIOS}
    remainder = n - sum(quotas.values())
    by_size = sorted(SCENARIOS, key=lambda s: -sizes[s])
    while remainder > 0:
        for s in by_size:
            if quotas[s] < sizes[s]:
                quotas[s] += 1
                remainder -= 1
                break
        else:
            raise InvalidArgument("cannot place remainder; scenarios exhausted")
        if remainder == 0:
            break
    return quotas


def sample_eval_subset(
    records: Sequence[PromptRecord], n: int, seed: int
) -> list[PromptRecord]:
    """Stratified sample of n records, proportional to scenario sizes.

    Deterministic for a given seed; output keeps the input record order.
    """
    if n > len(records):
        raise InvalidArgument(f"cannot sample {n} from {len(records)} records")
    if n < 0:
        raise InvalidArgument("n must be >= 0")
    quotas = scenario_quotas(records, n)
    rng = random.Random(seed)
    chosen: set[int] = set()
    for scenario in SCENARIOS:
        indexed = [i for i, r in enumerate(records) if r.scenario == scenario]
        chosen.update(rng.sample(indexed, quotas[scenario]))
    return [records[i] for i in sorted(chosen)]
