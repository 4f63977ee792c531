"""Generation strategies and trace bookkeeping.

Five methods share one trace format: plain generation (sd), prompt rewriting
without image feedback (gpt-rewrite), image-conditioned prompt refinement
with full regeneration (gpt-refine), best-of-k noise search (inf-scale), and
the decompose-critique-redenoise loop (detailscribe). Every run leaves a
self-describing directory: metadata.json, schema.json, per-round critiques,
and PNG images with lossless .npy sidecars.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from detailscribe import DetailScribeError
from detailscribe.clients import ChatClient, ChatRequest, text_message
from detailscribe.critique import Critique, CritiqueFailed, critique_image
from detailscribe.dataset import PromptRecord
from detailscribe.diffusion import (
    DiffusionBackend,
    LatentImage,
    NoiseSchedule,
    NoiseSource,
    denoise_from,
    generate,
    noise_to_step,
)
from detailscribe.diffusion.imageio import array_to_png_bytes
from detailscribe.schema import ConceptSchema, decompose

logger = logging.getLogger(__name__)

METHODS = ("sd", "gpt-rewrite", "gpt-refine", "inf-scale", "detailscribe")

# decorrelates per-round re-noising (and the refine baseline's regeneration)
ROUND_SEED_STRIDE = 1000


class VerifierError(DetailScribeError):
    """The candidate verifier failed to score an image."""


class ConfigError(DetailScribeError):
    pass


REWRITE_TEMPLATE = """\
Rewrite the following text-to-image prompt into a more detailed version. Name the entities, their key parts, and exactly how they touch or interact, so an image model can follow it. Keep the original subject and intent. Answer with the rewritten prompt only, no more than 70 words.

Prompt: {prompt}"""


@dataclass
class PipelineConfig:
    """Knobs shared by every method; validated against the schedule in use."""

    method: str = "detailscribe"
    t_prime: int | None = None  # None resolves to T - 2
    rounds: int = 1
    k_noises: int = 2
    seed: int = 0
    use_decomposition: bool = True
    max_client_attempts: int = 3
    # on critique failure keep the latest image as final instead of raising
    critique_fallback: bool = True

    def validate(self, schedule: NoiseSchedule) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.k_noises < 1:
            raise ConfigError("k_noises must be >= 1")
        t = self.resolve_t_prime(schedule)
        if not (1 <= t <= schedule.T):
            raise ConfigError(f"t'={t} outside [1, T={schedule.T}]")

    def resolve_t_prime(self, schedule: NoiseSchedule) -> int:
        if self.t_prime is not None:
            return self.t_prime
        return max(1, schedule.T - 2)

    def to_dict(self, schedule: NoiseSchedule) -> dict:
        return {
            "method": self.method,
            "t_prime": self.resolve_t_prime(schedule),
            "rounds": self.rounds,
            "k_noises": self.k_noises,
            "seed": self.seed,
            "use_decomposition": self.use_decomposition,
            "schedule_kind": schedule.kind,
            "T": schedule.T,
        }


@dataclass
class Services:
    """Everything a runner needs besides the record and config."""

    backend: DiffusionBackend
    schedule: NoiseSchedule
    llm: ChatClient
    mllm: ChatClient
    verifier: object | None = None  # needs .score(data, prompt) -> float


@dataclass
class GenerationTrace:
    """Full provenance of one pipeline run."""

    record: PromptRecord
    record_index: int
    method: str
    config: dict
    seeds: dict
    schema: ConceptSchema | None = None
    critiques: list[Critique] = field(default_factory=list)
    refined_prompts: list[str] = field(default_factory=list)
    images: dict[str, str] = field(default_factory=dict)
    arrays: dict[str, str] = field(default_factory=dict)
    candidate_scores: list[float] = field(default_factory=list)
    reverse_step_total: int = 0
    attempts: dict[str, int] = field(default_factory=dict)
    failure: dict | None = None
    timing: dict = field(default_factory=dict)
    run_dir: Path | None = None

    def metadata(self) -> dict:
        return {
            "record": self.record.to_dict(),
            "record_index": self.record_index,
            "method": self.method,
            "config": self.config,
            "seeds": self.seeds,
            "schema_file": "schema.json" if self.schema is not None else None,
            "critique_files": [f"critique_round{i + 1}.json" for i in range(len(self.critiques))],
            "refined_prompts": list(self.refined_prompts),
            "images": dict(self.images),
            "arrays": dict(self.arrays),
            "candidate_scores": list(self.candidate_scores),
            "reverse_step_total": self.reverse_step_total,
            "attempts": dict(self.attempts),
            "failure": self.failure,
            "timing": self.timing,
        }

    def save(self) -> None:
        assert self.run_dir is not None
        self.run_dir.mkdir(parents=True, exist_ok=True)
        if self.schema is not None:
            _write_json(self.run_dir / "schema.json", self.schema.to_dict())
        for i, critique in enumerate(self.critiques):
            _write_json(self.run_dir / f"critique_round{i + 1}.json", critique.to_dict())
        _write_json(self.run_dir / "metadata.json", self.metadata())

    def _store_image(self, name: str, latent: LatentImage, filename: str) -> None:
        assert self.run_dir is not None
        self.run_dir.mkdir(parents=True, exist_ok=True)
        png = f"{filename}.png"
        npy = f"{filename}.npy"
        (self.run_dir / png).write_bytes(array_to_png_bytes(latent.data))
        np.save(self.run_dir / npy, latent.data)
        self.images[name] = png
        self.arrays[name] = npy


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def trace_dir(out_dir: str | Path, method: str, topic: str, seed: int) -> Path:
    return Path(out_dir) / method / topic / str(seed)


def _new_trace(
    record: PromptRecord,
    record_index: int,
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    record_seed: int,
) -> GenerationTrace:
    return GenerationTrace(
        record=record,
        record_index=record_index,
        method=cfg.method,
        config=cfg.to_dict(services.schedule),
        seeds={"record_seed": record_seed},
        run_dir=trace_dir(out_dir, cfg.method, record.topic, record_seed),
    )


def _finish(trace: GenerationTrace, started_at: str, t0: float) -> GenerationTrace:
    trace.timing = {"started_at": started_at, "wall_seconds": round(time.monotonic() - t0, 6)}
    trace.save()
    return trace


def _fail(
    trace: GenerationTrace, started_at: str, t0: float, stage: str, error: Exception
) -> None:
    trace.failure = {"stage": stage, "error": str(error)}
    _finish(trace, started_at, t0)


def run_detailscribe(
    record: PromptRecord,
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    record_index: int = 0,
) -> GenerationTrace:
    """Decompose, generate, then critique-noise-redenoise for each round."""
    cfg.validate(services.schedule)
    started_at = _utcnow()
    t0 = time.monotonic()
    record_seed = cfg.seed + record_index
    t_prime = cfg.resolve_t_prime(services.schedule)
    trace = _new_trace(record, record_index, cfg, services, out_dir, record_seed)

    try:
        if cfg.use_decomposition:
            schema, tries = decompose(
                record.prompt, record.topic, services.llm, cfg.max_client_attempts
            )
            trace.schema = schema
            trace.attempts["decompose"] = tries
        else:
            schema = None

        initial = generate(record.prompt, record_seed, services.backend, services.schedule)
        trace._store_image("initial", initial, "initial")
        trace.reverse_step_total += services.schedule.T

        current = initial
        round_seeds = []
        for round_i in range(1, cfg.rounds + 1):
            png = array_to_png_bytes(current.data)
            try:
                critique = critique_image(
                    png,
                    record.prompt,
                    record.topic,
                    schema,
                    services.mllm,
                    cfg.max_client_attempts,
                )
            except CritiqueFailed as exc:
                if not cfg.critique_fallback:
                    _fail(trace, started_at, t0, f"critique_round_{round_i}", exc)
                    raise
                logger.warning("critique failed, keeping current image: %s", exc)
                trace.failure = {"stage": f"critique_round_{round_i}", "error": str(exc)}
                break
            trace.critiques.append(critique)
            trace.refined_prompts.append(critique.refined_prompt)
            trace.attempts[f"critique_round_{round_i}"] = critique.attempts

            noise_seed = record_seed + ROUND_SEED_STRIDE * round_i
            round_seeds.append(noise_seed)
            noisy = noise_to_step(
                current, t_prime, services.schedule, NoiseSource(noise_seed)
            )
            current = denoise_from(noisy, critique.refined_prompt, services.backend)
            trace.reverse_step_total += t_prime
            trace._store_image(f"round_{round_i}", current, f"round{round_i}")

        trace.seeds["rounds"] = round_seeds
        trace._store_image("final", current, "final")
        return _finish(trace, started_at, t0)
    except CritiqueFailed:
        raise
    except DetailScribeError as exc:
        _fail(trace, started_at, t0, "pipeline", exc)
        raise


def run_sd(
    record: PromptRecord,
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    record_index: int = 0,
) -> GenerationTrace:
    """Base model only: a single generation from pure noise."""
    cfg.validate(services.schedule)
    started_at = _utcnow()
    t0 = time.monotonic()
    record_seed = cfg.seed + record_index
    trace = _new_trace(record, record_index, cfg, services, out_dir, record_seed)
    try:
        image = generate(record.prompt, record_seed, services.backend, services.schedule)
        trace.reverse_step_total = services.schedule.T
        trace._store_image("initial", image, "initial")
        trace._store_image("final", image, "final")
        return _finish(trace, started_at, t0)
    except DetailScribeError as exc:
        _fail(trace, started_at, t0, "generate", exc)
        raise


def run_baseline_rewrite(
    record: PromptRecord,
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    record_index: int = 0,
) -> GenerationTrace:
    """Rewrite the prompt without seeing any image, then generate once."""
    cfg.validate(services.schedule)
    started_at = _utcnow()
    t0 = time.monotonic()
    record_seed = cfg.seed + record_index
    trace = _new_trace(record, record_index, cfg, services, out_dir, record_seed)
    try:
        request = ChatRequest(
            messages=(text_message("user", REWRITE_TEMPLATE.format(prompt=record.prompt)),),
            model_id=services.llm.model_id,
        )
        rewritten = services.llm.complete(request).text.strip()
        trace.refined_prompts.append(rewritten)
        final = generate(rewritten, record_seed, services.backend, services.schedule)
        trace.reverse_step_total = services.schedule.T
        trace._store_image("final", final, "final")
        return _finish(trace, started_at, t0)
    except DetailScribeError as exc:
        _fail(trace, started_at, t0, "rewrite", exc)
        raise


def run_baseline_refine(
    record: PromptRecord,
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    record_index: int = 0,
) -> GenerationTrace:
    """Critique the initial image, then regenerate from pure noise."""
    cfg.validate(services.schedule)
    started_at = _utcnow()
    t0 = time.monotonic()
    record_seed = cfg.seed + record_index
    trace = _new_trace(record, record_index, cfg, services, out_dir, record_seed)
    try:
        initial = generate(record.prompt, record_seed, services.backend, services.schedule)
        trace.reverse_step_total = services.schedule.T
        trace._store_image("initial", initial, "initial")
        try:
            critique = critique_image(
                array_to_png_bytes(initial.data),
                record.prompt,
                record.topic,
                None,
                services.mllm,
                cfg.max_client_attempts,
            )
        except CritiqueFailed as exc:
            if not cfg.critique_fallback:
                _fail(trace, started_at, t0, "refine_critique", exc)
                raise
            trace.failure = {"stage": "refine_critique", "error": str(exc)}
            trace._store_image("final", initial, "final")
            return _finish(trace, started_at, t0)
        trace.critiques.append(critique)
        trace.refined_prompts.append(critique.refined_prompt)
        trace.attempts["critique_round_1"] = critique.attempts

        regen_seed = record_seed + ROUND_SEED_STRIDE
        trace.seeds["regenerate"] = regen_seed
        final = generate(critique.refined_prompt, regen_seed, services.backend, services.schedule)
        trace.reverse_step_total += services.schedule.T
        trace._store_image("final", final, "final")
        return _finish(trace, started_at, t0)
    except CritiqueFailed:
        raise
    except DetailScribeError as exc:
        _fail(trace, started_at, t0, "refine", exc)
        raise


def run_inference_scaling(
    record: PromptRecord,
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    record_index: int = 0,
) -> GenerationTrace:
    """Generate k candidates from distinct noises, keep the verifier's argmax."""
    cfg.validate(services.schedule)
    if services.verifier is None:
        raise VerifierError("inference scaling needs a verifier")
    started_at = _utcnow()
    t0 = time.monotonic()
    record_seed = cfg.seed + record_index
    trace = _new_trace(record, record_index, cfg, services, out_dir, record_seed)
    try:
        candidate_seeds = [record_seed + j for j in range(cfg.k_noises)]
        trace.seeds["candidates"] = candidate_seeds
        best_index = -1
        best_score = -np.inf
        for j, seed in enumerate(candidate_seeds):
            candidate = generate(record.prompt, seed, services.backend, services.schedule)
            trace.reverse_step_total += services.schedule.T
            trace._store_image(f"candidate_{j}", candidate, f"candidate{j}")
            try:
                score = float(services.verifier.score(candidate.data, record.prompt))
            except DetailScribeError:
                raise
            except Exception as exc:
                raise VerifierError(f"verifier failed on candidate {j}: {exc}") from exc
            trace.candidate_scores.append(score)
            # strict > keeps the earliest (lowest) seed on ties
            if score > best_score:
                best_score = score
                best_index = j
        winner = np.load(trace.run_dir / trace.arrays[f"candidate_{best_index}"])
        trace.seeds["selected"] = candidate_seeds[best_index]
        trace._store_image(
            "final",
            LatentImage(data=winner, step=0, prompt_tag=record.prompt),
            "final",
        )
        return _finish(trace, started_at, t0)
    except DetailScribeError as exc:
        _fail(trace, started_at, t0, "inference_scaling", exc)
        raise


RUNNERS = {
    "sd": run_sd,
    "gpt-rewrite": run_baseline_rewrite,
    "gpt-refine": run_baseline_refine,
    "inf-scale": run_inference_scaling,
    "detailscribe": run_detailscribe,
}


def run_method(
    record: PromptRecord,
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    record_index: int = 0,
) -> GenerationTrace:
    return RUNNERS[cfg.method](record, cfg, services, out_dir, record_index=record_index)


@dataclass
class BatchResult:
    traces: list[GenerationTrace]
    failures: list[dict]

    @property
    def ok(self) -> bool:
        return not self.failures


def run_batch(
    records: list[PromptRecord],
    cfg: PipelineConfig,
    services: Services,
    out_dir: str | Path,
    jobs: int = 1,
) -> BatchResult:
    """Run one method over many records with per-record isolation.

    A record's failure becomes a failure entry instead of aborting the batch,
    and results keep the input record order regardless of worker count.
    """
    results: list[GenerationTrace | None] = [None] * len(records)
    failures: list[dict] = []

    def _one(index: int) -> tuple[int, GenerationTrace | None, dict | None]:
        try:
            trace = run_method(records[index], cfg, services, out_dir, record_index=index)
            return index, trace, None
        except DetailScribeError as exc:
            logger.error("record %d (%s) failed: %s", index, records[index].topic, exc)
            return index, None, {
                "record_index": index,
                "topic": records[index].topic,
                "error": str(exc),
            }

    if jobs <= 1:
        outcomes = [_one(i) for i in range(len(records))]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_one, range(len(records))))

    for index, trace, failure in outcomes:
        if failure is not None:
            failures.append(failure)
        else:
            results[index] = trace
    failures.sort(key=lambda f: f["record_index"])
    return BatchResult(traces=[t for t in results if t is not None], failures=failures)


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()
