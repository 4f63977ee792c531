"""Index over a runs directory tree.

Walks runs/<method>/<topic>/<seed>/metadata.json and assigns every stored
image an opaque content-addressed id (a hash of its run-relative path), so
downstream consumers — scoring, agreement, the annotation service — can
reference images without leaking which method produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from detailscribe import DetailScribeError

FINAL_KIND = "final"


class RunsIndexError(DetailScribeError):
    pass


def image_id_for(relative_path: str) -> str:
    digest = hashlib.blake2b(relative_path.encode("utf-8"), digest_size=8).hexdigest()
    return f"img-{digest}"


@dataclass(frozen=True)
class RunImage:
    image_id: str
    method: str
    topic: str
    seed: int
    record_index: int
    prompt: str
    scenario: str
    kind: str
    png_path: Path
    npy_path: Path | None


class RunsIndex:
    def __init__(self, images: list[RunImage], runs_dir: Path) -> None:
        self.runs_dir = runs_dir
        self.images = {img.image_id: img for img in images}
        if len(self.images) != len(images):
            raise RunsIndexError("image id collision while indexing runs")

    def __len__(self) -> int:
        return len(self.images)

    def get(self, image_id: str) -> RunImage | None:
        return self.images.get(image_id)

    def finals(self) -> list[RunImage]:
        """Final images ordered by (record_index, method, seed)."""
        images = [img for img in self.images.values() if img.kind == FINAL_KIND]
        images.sort(key=lambda i: (i.record_index, i.method, i.seed))
        return images

    def finals_by_prompt(self) -> dict[int, list[RunImage]]:
        grouped: dict[int, list[RunImage]] = {}
        for img in self.finals():
            grouped.setdefault(img.record_index, []).append(img)
        return grouped

    def methods(self) -> list[str]:
        return sorted({img.method for img in self.images.values()})

    def image_methods(self) -> dict[str, str]:
        return {img.image_id: img.method for img in self.images.values()}

    def image_prompts(self) -> dict[str, str]:
        return {img.image_id: str(img.record_index) for img in self.images.values()}


def scan_runs(runs_dir: str | Path) -> RunsIndex:
    """Build the index; traces with a failure marker still index (their final
    image, when present, is the documented fallback)."""
    root = Path(runs_dir)
    if not root.is_dir():
        raise RunsIndexError(f"runs directory {root} does not exist")
    images: list[RunImage] = []
    for meta_path in sorted(root.glob("*/*/*/metadata.json")):
        run_dir = meta_path.parent
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise RunsIndexError(f"unreadable metadata {meta_path}: {exc}") from exc
        record = meta.get("record", {})
        for kind, png_name in meta.get("images", {}).items():
            png_path = run_dir / png_name
            if not png_path.exists():
                raise RunsIndexError(f"metadata references missing image {png_path}")
            npy_name = meta.get("arrays", {}).get(kind)
            npy_path = run_dir / npy_name if npy_name else None
            if npy_path is not None and not npy_path.exists():
                npy_path = None
            relative = str(png_path.relative_to(root))
            images.append(
                RunImage(
                    image_id=image_id_for(relative),
                    method=meta.get("method", "unknown"),
                    topic=record.get("topic", ""),
                    seed=int(meta.get("seeds", {}).get("record_seed", 0)),
                    record_index=int(meta.get("record_index", -1)),
                    prompt=record.get("prompt", ""),
                    scenario=record.get("scenario", ""),
                    kind=kind,
                    png_path=png_path,
                    npy_path=npy_path,
                )
            )
    return RunsIndex(images, root)
