"""Command-line entry point.

Commands: dataset (gen | validate | sample), run, ablate-steps, eval, agree,
report, serve-annotation. Exit codes: 0 success, 1 validation failure,
2 runtime error. Everything is deterministic under the mock backend with the
canned (or a scripted) client and fixed seeds.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from detailscribe import DetailScribeError
from detailscribe import dataset as ds
from detailscribe.clients import HttpChatClient, ScriptedChatClient
from detailscribe.config import ConfigError, RunConfig, load_config
from detailscribe.critique import critique_image
from detailscribe.diffusion import (
    ExternalBackend,
    MockBackend,
    NoiseSource,
    denoise_from,
    generate,
    make_schedule,
    noise_to_step,
)
from detailscribe.diffusion.imageio import array_to_png_bytes, load_png
from detailscribe.evaluation import (
    HttpScoreAdapter,
    MockVerifier,
    SkippedMetric,
    aggregate_report,
    latest_ratings,
    load_ratings,
    load_scores,
    mllm_likert,
    pairwise_agreement,
    save_scores,
    score_with_adapter,
)
from detailscribe.evaluation.agreement import build_pairing
from detailscribe.evaluation.judge import JudgeParseError
from detailscribe.offline import CannedClient
from detailscribe.pipeline import PipelineConfig, Services, run_batch
from detailscribe.runsindex import scan_runs

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detailscribe",
        description="Generate-then-refine text-to-image toolkit and benchmark harness.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="generate, validate, or sample prompt datasets")
    dsub = p_dataset.add_subparsers(dest="dataset_command", required=True)

    p_gen = dsub.add_parser("gen", help="generate new records with a chat model")
    p_gen.add_argument("--scenario", required=True, choices=ds.SCENARIOS, help="scenario to generate")
    p_gen.add_argument("--subclass", required=True, help="subclass label for generated records")
    p_gen.add_argument("--num", type=int, default=0, help="max topics to expand (0 = all returned)")
    p_gen.add_argument("-o", "--out", required=True, help="output JSONL path")
    _add_client_flags(p_gen)

    p_val = dsub.add_parser("validate", help="check a dataset against the reference counts")
    p_val.add_argument("path", nargs="?", default=None, help="JSONL path (default: bundled reference)")

    p_sample = dsub.add_parser("sample", help="stratified evaluation subset")
    p_sample.add_argument("path", nargs="?", default=None, help="JSONL path (default: bundled reference)")
    p_sample.add_argument("-n", "--num", type=int, required=True, help="subset size")
    p_sample.add_argument("--seed", type=int, default=0, help="sampling seed")
    p_sample.add_argument("-o", "--out", default="-", help="output JSONL path ('-' = stdout)")

    p_run = sub.add_parser("run", help="run a generation method over a dataset")
    p_run.add_argument("--dataset", default=None, help="prompt JSONL (default: bundled reference)")
    p_run.add_argument("--method", default=None, help="sd | gpt-rewrite | gpt-refine | inf-scale | detailscribe")
    p_run.add_argument("--limit", type=int, default=0, help="run only the first N records (0 = all)")
    p_run.add_argument("--out", default=None, help="trace output directory")
    p_run.add_argument("--jobs", type=int, default=None, help="worker count (default 1, bitwise reproducible)")
    p_run.add_argument("--rounds", type=int, default=None, help="refinement rounds")
    p_run.add_argument("--k", type=int, default=None, help="candidate count for inf-scale")
    p_run.add_argument("--no-decomposition", action="store_true", help="skip concept decomposition")
    _add_pipeline_flags(p_run)
    _add_client_flags(p_run)

    p_ablate = sub.add_parser("ablate-steps", help="sweep re-denoising start steps")
    p_ablate.add_argument("--dataset", default=None, help="prompt JSONL (default: bundled reference)")
    p_ablate.add_argument("--grid", default=None, help="comma list of steps; accepts T and T-k (default T,T-1,T-2,T-4,T-6)")
    p_ablate.add_argument("--limit", type=int, default=1, help="number of records to sweep")
    p_ablate.add_argument("--out", default="ablate", help="output directory")
    _add_pipeline_flags(p_ablate)
    _add_client_flags(p_ablate)

    p_eval = sub.add_parser("eval", help="score run outputs with automatic metrics")
    p_eval.add_argument("--runs", required=True, help="runs directory")
    p_eval.add_argument("--metrics", default="mock-verifier", help="comma list: mock-verifier,mllm-likert,clipscore,imagereward,blip-vqa")
    p_eval.add_argument("-o", "--out", default="scores.jsonl", help="scores JSONL output")
    p_eval.add_argument("--config", default=None, help="run config INI (metric endpoints)")
    _add_client_flags(p_eval)

    p_agree = sub.add_parser("agree", help="human/metric pairwise agreement")
    p_agree.add_argument("--scores", required=True, help="metric scores JSONL")
    p_agree.add_argument("--ratings", required=True, help="human ratings JSONL")
    p_agree.add_argument("--runs", required=True, help="runs directory (for pairing)")
    p_agree.add_argument("-o", "--out", default="agreement.csv", help="agreement CSV output")

    p_report = sub.add_parser("report", help="aggregate score tables and figures")
    p_report.add_argument("--scores", required=True, help="metric scores JSONL")
    p_report.add_argument("--ratings", default=None, help="human ratings JSONL")
    p_report.add_argument("--runs", required=True, help="runs directory (method mapping)")
    p_report.add_argument("--dataset", default=None, help="prompt JSONL (default: bundled reference)")
    p_report.add_argument("-o", "--out", default="report", help="report output directory")
    p_report.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p_serve = sub.add_parser("serve-annotation", help="serve the blinded rating study")
    p_serve.add_argument("--runs", required=True, help="runs directory")
    p_serve.add_argument("--port", type=int, default=8000, help="listen port")
    p_serve.add_argument("--host", default="127.0.0.1", help="listen address")
    p_serve.add_argument("--session-seed", type=int, default=0, help="seed for per-annotator shuffles")
    p_serve.add_argument("--log", default=None, help="rating log path (default <runs>/ratings.jsonl)")
    p_serve.add_argument("--ui-dir", default=None, help="built frontend directory (default frontend/dist)")

    return parser


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="run config INI")
    parser.add_argument("--backend", default=None, choices=["mock", "external"], help="generation backend")
    parser.add_argument("--external-url", default=None, help="external generation service URL")
    parser.add_argument("--schedule", default=None, choices=["linear", "cosine"], help="noise schedule kind")
    parser.add_argument("--steps", type=int, default=None, help="total diffusion steps T")
    parser.add_argument("--t-prime", type=int, default=None, help="re-denoising start step (default T-2)")
    parser.add_argument("--seed", type=int, default=None, help="base seed")


def _add_client_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--client", default=None, choices=["canned", "env", "script"], help="chat client mode")
    parser.add_argument("--client-script", default=None, help="scripted responses JSON ({'llm': [...], 'mllm': [...]})")
    parser.add_argument("--model-cache", default=None, help="chat response cache directory")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "backend": "backend",
        "external_url": "external_url",
        "schedule": "schedule",
        "steps": "steps",
        "t_prime": "t_prime",
        "seed": "seed",
        "method": "method",
        "jobs": "jobs",
        "rounds": "rounds",
        "k": "k_noises",
        "client": "client",
        "client_script": "client_script",
        "model_cache": "model_cache",
        "out": "output_dir",
    }
    for arg_name, field_name in overrides.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, field_name, value)
    if getattr(args, "no_decomposition", False):
        cfg.use_decomposition = False
    cfg.validate()
    return cfg


def _make_clients(cfg: RunConfig) -> tuple:
    if cfg.client == "canned":
        return CannedClient(model_id="canned-llm", multimodal=False), CannedClient(
            model_id="canned-mllm", multimodal=True
        )
    if cfg.client == "script":
        script = json.loads(Path(cfg.client_script).read_text(encoding="utf-8"))
        if not isinstance(script, dict):
            raise ConfigError("client script must be a JSON object with 'llm'/'mllm' lists")
        llm_src = script.get("llm", [])
        mllm_src = script.get("mllm", [])
        llm = ScriptedChatClient(llm_src, model_id="scripted-llm", multimodal=False)
        mllm = ScriptedChatClient(mllm_src, model_id="scripted-mllm", multimodal=True)
        return llm, mllm
    cache = cfg.model_cache or None
    return (
        HttpChatClient.from_env(multimodal=False, cache_dir=cache),
        HttpChatClient.from_env(multimodal=True, cache_dir=cache),
    )


def _build_services(cfg: RunConfig) -> Services:
    if cfg.backend == "mock":
        backend = MockBackend(image_shape=(cfg.channels, cfg.height, cfg.width))
        verifier = MockVerifier()
    else:
        backend = ExternalBackend(cfg.external_url, image_shape=(cfg.channels, cfg.height, cfg.width))
        verifier = (
            HttpScoreAdapter("clipscore", cfg.clipscore_url) if cfg.clipscore_url else MockVerifier()
        )
    schedule = make_schedule(cfg.schedule, cfg.resolved_steps())
    llm, mllm = _make_clients(cfg)
    return Services(backend=backend, schedule=schedule, llm=llm, mllm=mllm, verifier=verifier)


def _load_records(path: str | None) -> list[ds.PromptRecord]:
    dataset_path = Path(path) if path else ds.reference_dataset_path()
    return ds.load_dataset(dataset_path)


def cmd_dataset(args: argparse.Namespace) -> int:
    if args.dataset_command == "validate":
        records = _load_records(args.path)
        report = ds.validate_statistics(records)
        for key in report.expected:
            print(f"{key}: expected {report.expected[key]}, found {report.counts[key]}")
        if not report.ok:
            print(f"FAIL: {len(report.deviations)} deviation(s)")
            for dev in report.deviations:
                print(f"  deviation: {dev}")
            return EXIT_VALIDATION
        print("OK: all counts match the reference distribution")
        return EXIT_OK

    if args.dataset_command == "sample":
        records = _load_records(args.path)
        subset = ds.sample_eval_subset(records, args.num, args.seed)
        lines = [json.dumps(r.to_dict(), ensure_ascii=False) for r in subset]
        if args.out == "-":
            for line in lines:
                print(line)
        else:
            Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
            by_scenario = {s: sum(1 for r in subset if r.scenario == s) for s in ds.SCENARIOS}
            print(f"wrote {len(subset)} records to {args.out} ({by_scenario})")
        return EXIT_OK

    # gen
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for name in ("client", "client_script", "model_cache"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    llm, _ = _make_clients(cfg)
    if args.subclass not in ds.SUBCLASSES_BY_SCENARIO[args.scenario]:
        print(f"error: subclass {args.subclass!r} does not belong to scenario {args.scenario!r}")
        return EXIT_VALIDATION
    topics = ds.generate_topics(args.scenario, args.subclass, llm)
    if args.num > 0:
        topics = topics[: args.num]
    records = []
    for topic in topics:
        try:
            records.append(ds.complete_prompt(topic, args.scenario, llm, subclass=args.subclass))
        except DetailScribeError as exc:
            logger.warning("skipping topic %r: %s", topic, exc)
    ds.save_dataset(records, args.out)
    print(f"wrote {len(records)} records ({len(topics)} topics) to {args.out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    records = _load_records(args.dataset)
    if args.limit and args.limit > 0:
        records = records[: args.limit]
    services = _build_services(cfg)
    pipeline_cfg = PipelineConfig(
        method=cfg.method,
        t_prime=cfg.t_prime,
        rounds=cfg.rounds,
        k_noises=cfg.k_noises,
        seed=cfg.seed,
        use_decomposition=cfg.use_decomposition,
    )
    pipeline_cfg.validate(services.schedule)
    result = run_batch(records, pipeline_cfg, services, cfg.output_dir, jobs=cfg.jobs)
    print(
        f"{cfg.method}: {len(result.traces)} trace(s) in {cfg.output_dir}, "
        f"{len(result.failures)} failure(s)"
    )
    for failure in result.failures:
        print(f"  failed record {failure['record_index']} ({failure['topic']}): {failure['error']}")
    return EXIT_OK if result.ok else EXIT_RUNTIME


def _parse_grid(text: str | None, T: int) -> list[int]:
    if not text:
        candidates = [T, T - 1, T - 2, T - 4, T - 6]
    else:
        candidates = []
        for token in text.split(","):
            token = token.strip().upper()
            if not token:
                continue
            if token == "T":
                candidates.append(T)
            elif token.startswith("T-"):
                candidates.append(T - int(token[2:]))
            else:
                candidates.append(int(token))
    bad = [t for t in candidates if t < 1 or t > T]
    if bad:
        raise ConfigError(f"grid steps {bad} outside [1, T={T}]")
    return sorted(set(candidates))


def cmd_ablate_steps(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    records = _load_records(args.dataset)[: max(args.limit, 1)]
    services = _build_services(cfg)
    schedule = services.schedule
    grid = _parse_grid(args.grid, schedule.T)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mock = services.backend if isinstance(services.backend, MockBackend) else None

    rows = []
    for index, record in enumerate(records):
        seed = cfg.seed + index
        initial = generate(record.prompt, seed, services.backend, schedule)
        critique = critique_image(
            array_to_png_bytes(initial.data), record.prompt, record.topic, None, services.mllm
        )
        refined = critique.refined_prompt
        record_dir = out_dir / f"{index:03d}-{record.topic}"
        record_dir.mkdir(parents=True, exist_ok=True)
        (record_dir / "initial.png").write_bytes(array_to_png_bytes(initial.data))
        for t_prime in grid:
            noisy = noise_to_step(initial, t_prime, schedule, NoiseSource(seed + 1000))
            final = denoise_from(noisy, refined, services.backend)
            (record_dir / f"t{t_prime}.png").write_bytes(array_to_png_bytes(final.data))
            row = {
                "record_index": index,
                "topic": record.topic,
                "t_prime": t_prime,
                "dist_to_original": "",
                "dist_to_refined_target": "",
            }
            if mock is not None:
                row["dist_to_original"] = float(np.linalg.norm(final.data - initial.data))
                row["dist_to_refined_target"] = float(
                    np.linalg.norm(final.data - mock.target(refined))
                )
            rows.append(row)

    if mock is not None:
        csv_path = out_dir / "distances.csv"
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
        _ablate_figure(rows, out_dir / "distances.png")
        print(f"wrote {len(rows)} rows to {csv_path}")
    else:
        print(f"wrote per-step images to {out_dir} (distances need the mock backend)")
    return EXIT_OK


def _ablate_figure(rows: list[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.6))
    by_record: dict[int, list[dict]] = {}
    for row in rows:
        by_record.setdefault(row["record_index"], []).append(row)
    for index, record_rows in sorted(by_record.items()):
        record_rows.sort(key=lambda r: r["t_prime"])
        ts = [r["t_prime"] for r in record_rows]
        ax.plot(ts, [r["dist_to_original"] for r in record_rows], marker="o", label=f"#{index} to original")
        ax.plot(ts, [r["dist_to_refined_target"] for r in record_rows], marker="s", linestyle="--", label=f"#{index} to target")
    ax.set_xlabel("re-denoising start step t'")
    ax.set_ylabel("L2 distance")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for name in ("client", "client_script", "model_cache"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    cfg.validate()
    index = scan_runs(args.runs)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    _, mllm = _make_clients(cfg)
    adapters = {
        "mock-verifier": MockVerifier(),
        "clipscore": HttpScoreAdapter("clipscore", cfg.clipscore_url) if cfg.clipscore_url else None,
        "imagereward": HttpScoreAdapter("imagereward", cfg.imagereward_url) if cfg.imagereward_url else None,
        "blip-vqa": HttpScoreAdapter("blip-vqa", cfg.blip_vqa_url) if cfg.blip_vqa_url else None,
    }

    scores = []
    skipped: dict[str, str] = {}
    for img in index.finals():
        data = np.load(img.npy_path) if img.npy_path else load_png(img.png_path)
        record = ds.PromptRecord(
            topic=img.topic, prompt=img.prompt, scenario=img.scenario,
            subclass=ds.SUBCLASSES_BY_SCENARIO[img.scenario][0],
        )
        for metric in metrics:
            try:
                if metric == "mllm-likert":
                    score = mllm_likert(
                        array_to_png_bytes(data), record, mllm,
                        image_id=img.image_id, prompt_id=str(img.record_index),
                    )
                elif metric in adapters:
                    score = score_with_adapter(
                        data, img.prompt, adapters[metric],
                        image_id=img.image_id, prompt_id=str(img.record_index),
                    )
                else:
                    skipped[metric] = "unknown metric"
                    continue
            except SkippedMetric as exc:
                skipped[metric] = str(exc)
                continue
            except JudgeParseError as exc:
                skipped[metric] = str(exc)
                continue
            scores.append(
                dataclasses.replace(score, extra={"method": img.method, "topic": img.topic})
            )
    save_scores(scores, args.out)
    print(f"wrote {len(scores)} scores for {len(index.finals())} images to {args.out}")
    for metric, reason in sorted(skipped.items()):
        print(f"  skipped {metric}: {reason}")
    return EXIT_OK


def cmd_agree(args: argparse.Namespace) -> int:
    scores = load_scores(args.scores)
    ratings = latest_ratings(load_ratings(args.ratings))
    index = scan_runs(args.runs)
    pairing = build_pairing(index.image_methods(), index.image_prompts())
    by_metric: dict[str, list] = {}
    for s in scores:
        by_metric.setdefault(s.metric, []).append(s)

    reports = []
    for metric in sorted(by_metric):
        scored_ids = {s.image_id for s in by_metric[metric]}
        rated_ids = {r.image_id for r in ratings}
        usable = [(a, b) for a, b in pairing if {a, b} <= scored_ids and {a, b} <= rated_ids]
        report = pairwise_agreement(ratings, by_metric[metric], usable)
        reports.append(report)
        print(
            f"{report.metric}: agreement {report.agreement_fraction:.3f} "
            f"({report.pairs_used}/{report.pairs_total} pairs used)"
        )
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "pairs_total", "pairs_used", "agreement_fraction"])
        for report in reports:
            writer.writerow(
                [report.metric, report.pairs_total, report.pairs_used, f"{report.agreement_fraction:.4f}"]
            )
        f.write(f"# {reports[0].note}\n" if reports else "# no metrics\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    scores = load_scores(args.scores)
    ratings = latest_ratings(load_ratings(args.ratings)) if args.ratings else []
    index = scan_runs(args.runs)
    records = _load_records(args.dataset)
    image_methods = index.image_methods()
    # scores carry their method when produced by `eval`; trust it over the scan
    for s in scores:
        method = s.extra.get("method")
        if method:
            image_methods[s.image_id] = method
    tables = aggregate_report(scores, ratings, records, image_methods, index.image_prompts())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables.write_csv(out_dir / "report.csv")
    text = tables.render_text()
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    if not args.no_figures:
        tables.write_figures(out_dir)
    print(text, end="")
    print(f"wrote report to {out_dir}")
    return EXIT_OK


def cmd_serve_annotation(args: argparse.Namespace) -> int:
    from detailscribe.annotation import RatingStore, Study
    from detailscribe.annotation.service import serve

    index = scan_runs(args.runs)
    study = Study(index, session_seed=args.session_seed)
    log_path = Path(args.log) if args.log else Path(args.runs) / "ratings.jsonl"
    store = RatingStore(log_path)
    ui_dir = Path(args.ui_dir) if args.ui_dir else None
    print(
        f"serving {study.total_prompts} prompt task(s) on http://{args.host}:{args.port} "
        f"(log: {log_path})"
    )
    serve(study, store, host=args.host, port=args.port, ui_dir=ui_dir)
    return EXIT_OK


COMMANDS = {
    "dataset": cmd_dataset,
    "run": cmd_run,
    "ablate-steps": cmd_ablate_steps,
    "eval": cmd_eval,
    "agree": cmd_agree,
    "report": cmd_report,
    "serve-annotation": cmd_serve_annotation,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ds.ParseError, ds.InvalidArgument) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DetailScribeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
