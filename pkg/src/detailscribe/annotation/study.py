"""Task assignment for a blinded rating study.

One task shows all final images for one prompt, in an order that is a
deterministic function of (annotator id, prompt id, session seed). Method
identities stay server-side; the payload exposes only opaque image ids and
neutral labels.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from detailscribe.annotation.store import RatingStore, UnknownImage
from detailscribe.runsindex import RunImage, RunsIndex

# the five score guidelines shown to every annotator
RATING_GUIDELINES = """\
1: The image is completely irrelevant to the prompt.
2: The image contains some relevant objects, but they exhibit severe issues (e.g., distortion or missing parts).
3: The image includes most relevant objects, but some elements implied by the prompt are missing (e.g., missing critical tools or patterns to complete the interaction).
4: The image captures most relevant objects and infers additional ones successfully, but there are minor issues with object relationships (e.g. improvement to appearance of tools, subpart, or limbs needed.)
5: The image accurately and naturally reflects the prompt description."""

LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


@dataclass(frozen=True)
class RatingTask:
    task_id: str
    prompt: str
    guidelines: str
    images: tuple[dict, ...]  # {"image_id", "label", "url"} in shuffled order
    ratings: dict  # annotator's current effective scores for these images
    position: int
    total: int

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "prompt": self.prompt,
            "guidelines": self.guidelines,
            "images": [dict(i) for i in self.images],
            "ratings": dict(self.ratings),
            "position": self.position,
            "total": self.total,
        }


class Study:
    def __init__(self, index: RunsIndex, session_seed: int) -> None:
        self.index = index
        self.session_seed = session_seed
        self.by_prompt: dict[int, list[RunImage]] = index.finals_by_prompt()
        self.prompt_ids = sorted(self.by_prompt)
        self._image_ids = {
            img.image_id for images in self.by_prompt.values() for img in images
        }

    @property
    def total_prompts(self) -> int:
        return len(self.prompt_ids)

    def image(self, image_id: str) -> RunImage:
        img = self.index.get(image_id)
        if img is None or image_id not in self._image_ids:
            raise UnknownImage(f"image {image_id} is not part of this study")
        return img

    def shuffled_images(self, annotator_id: str, prompt_id: int) -> list[RunImage]:
        """Deterministic annotator-specific order for one prompt's images."""
        images = sorted(self.by_prompt[prompt_id], key=lambda i: i.image_id)
        rng = random.Random(f"{self.session_seed}:{annotator_id}:{prompt_id}")
        rng.shuffle(images)
        return images

    def next_task(self, annotator_id: str, store: RatingStore) -> RatingTask | None:
        """Earliest prompt with images this annotator has not rated; None when done."""
        rated = store.scores_for(annotator_id)
        for position, prompt_id in enumerate(self.prompt_ids):
            images = self.by_prompt[prompt_id]
            if all(img.image_id in rated for img in images):
                continue
            shuffled = self.shuffled_images(annotator_id, prompt_id)
            payload = tuple(
                {
                    "image_id": img.image_id,
                    "label": LABELS[i % len(LABELS)],
                    "url": f"/api/image/{img.image_id}",
                }
                for i, img in enumerate(shuffled)
            )
            return RatingTask(
                task_id=f"task-{prompt_id:04d}",
                prompt=images[0].prompt,
                guidelines=RATING_GUIDELINES,
                images=payload,
                ratings={
                    img.image_id: rated[img.image_id]
                    for img in images
                    if img.image_id in rated
                },
                position=position,
                total=self.total_prompts,
            )
        return None

    def progress(self, store: RatingStore) -> dict:
        """Server-side aggregate; the only place method coverage is visible."""
        effective = store.effective()
        per_annotator: dict[str, int] = {}
        coverage: dict[str, int] = {}
        for (annotator_id, image_id), _rating in effective.items():
            per_annotator[annotator_id] = per_annotator.get(annotator_id, 0) + 1
            img = self.index.get(image_id)
            if img is not None:
                coverage[img.method] = coverage.get(img.method, 0) + 1
        return {
            "annotators": {
                a: {"rated": n, "total": len(self._image_ids)}
                for a, n in sorted(per_annotator.items())
            },
            "method_coverage": dict(sorted(coverage.items())),
            "effective_ratings": len(effective),
            "log_entries": store.log_length,
            "prompts": self.total_prompts,
        }
