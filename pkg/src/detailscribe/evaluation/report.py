"""Per-method, per-scenario report tables with CSV, text, and figure output.

Automatic metrics average per method (within each scenario and overall).
Human ratings aggregate annotator-first: each annotator's mean per method,
then the mean across annotators. All sums go through math.fsum, so table
values are exactly independent of input order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from detailscribe.dataset import SCENARIOS, PromptRecord
from detailscribe.evaluation.scores import LikertRating, MetricScore

HUMAN_METRIC = "human"

METRIC_ORDER = (
    HUMAN_METRIC,
    "mllm-likert",
    "imagereward",
    "clipscore",
    "blip-vqa",
    "mock-verifier",
)

METHOD_ORDER = ("sd", "gpt-rewrite", "gpt-refine", "inf-scale", "external", "detailscribe")

OVERALL = "overall"


def _ordered(values: set[str], preferred: Sequence[str]) -> list[str]:
    known = [v for v in preferred if v in values]
    return known + sorted(values - set(preferred))


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


@dataclass
class ReportTables:
    """means[scenario][method][metric]; scenario 'overall' spans everything."""

    means: dict[str, dict[str, dict[str, float]]]
    methods: list[str]
    metrics: list[str]
    notes: list[str] = field(default_factory=list)

    def row(self, scenario: str, method: str) -> list[float | None]:
        cells = self.means.get(scenario, {}).get(method, {})
        return [cells.get(metric) for metric in self.metrics]

    def render_text(self) -> str:
        lines: list[str] = []
        for scenario in [OVERALL] + [s for s in self.means if s != OVERALL]:
            lines.append(f"[{scenario}]")
            header = ["method"] + list(self.metrics)
            rows = [header]
            for method in self.methods:
                cells = [method]
                for value in self.row(scenario, method):
                    cells.append("-" if value is None else f"{value:.3f}")
                rows.append(cells)
            widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
            for r in rows:
                lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
            lines.append("")
        for note in self.notes:
            lines.append(f"note: {note}")
        return "\n".join(lines).rstrip() + "\n"

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["scenario", "method"] + list(self.metrics))
            for scenario in [OVERALL] + [s for s in self.means if s != OVERALL]:
                for method in self.methods:
                    row = [scenario, method]
                    for value in self.row(scenario, method):
                        row.append("" if value is None else f"{value:.3f}")
                    writer.writerow(row)

    def write_figures(self, out_dir: str | Path) -> list[Path]:
        """One bar chart per metric (overall means), rendered to PNG files."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        overall = self.means.get(OVERALL, {})
        for metric in self.metrics:
            methods = [m for m in self.methods if overall.get(m, {}).get(metric) is not None]
            if not methods:
                continue
            values = [overall[m][metric] for m in methods]
            fig, ax = plt.subplots(figsize=(6, 3.2))
            ax.bar(range(len(methods)), values, color="#4878cf")
            ax.set_xticks(range(len(methods)))
            ax.set_xticklabels(methods, rotation=20, ha="right", fontsize=8)
            ax.set_ylabel(metric)
            ax.set_title(f"{metric} by method (overall)")
            fig.tight_layout()
            path = out / f"fig_{metric}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            written.append(path)
        return written


def aggregate_report(
    scores: Sequence[MetricScore],
    ratings: Sequence[LikertRating],
    records: Sequence[PromptRecord],
    image_methods: Mapping[str, str],
    image_prompts: Mapping[str, str] | None = None,
) -> ReportTables:
    """Build per-method means for every metric, split by scenario and overall.

    ``image_methods`` maps image id to method label; ``image_prompts`` maps
    image id to a prompt id (index into ``records``) and is needed only when
    human ratings are present.
    """
    image_prompts = dict(image_prompts or {})

    def scenario_of_prompt(prompt_id: str) -> str | None:
        try:
            return records[int(prompt_id)].scenario
        except (ValueError, IndexError):
            return None

    metric_names: set[str] = set()
    method_names: set[str] = set()

    # groups[(scenario, method, metric)] -> list of values
    groups: dict[tuple[str, str, str], list[float]] = {}
    for s in scores:
        method = image_methods.get(s.image_id)
        if method is None:
            continue
        metric_names.add(s.metric)
        method_names.add(method)
        scenario = scenario_of_prompt(s.prompt_id)
        for bucket in {OVERALL, scenario} - {None}:
            groups.setdefault((bucket, method, s.metric), []).append(s.value)

    # humans aggregate annotator-first within each bucket
    human_groups: dict[tuple[str, str], dict[str, list[int]]] = {}
    for r in ratings:
        method = image_methods.get(r.image_id)
        if method is None:
            continue
        method_names.add(method)
        metric_names.add(HUMAN_METRIC)
        prompt_id = image_prompts.get(r.image_id)
        scenario = scenario_of_prompt(prompt_id) if prompt_id is not None else None
        for bucket in {OVERALL, scenario} - {None}:
            by_annotator = human_groups.setdefault((bucket, method), {})
            by_annotator.setdefault(r.annotator_id, []).append(r.score)

    means: dict[str, dict[str, dict[str, float]]] = {}
    for (scenario, method, metric), values in groups.items():
        means.setdefault(scenario, {}).setdefault(method, {})[metric] = _mean(values)
    for (scenario, method), by_annotator in human_groups.items():
        annotator_means = [_mean([float(v) for v in vals]) for _, vals in sorted(by_annotator.items())]
        means.setdefault(scenario, {}).setdefault(method, {})[HUMAN_METRIC] = _mean(
            annotator_means
        )

    ordered_scenarios = [OVERALL] + [s for s in SCENARIOS if s in means]
    means = {s: means[s] for s in ordered_scenarios if s in means}
    return ReportTables(
        means=means,
        methods=_ordered(method_names, METHOD_ORDER),
        metrics=_ordered(metric_names, METRIC_ORDER),
    )
