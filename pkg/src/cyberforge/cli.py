"""Command-line entry point.

``cyberforge run --config cfg.json`` executes configured pipeline stages
end to end; the remaining subcommands run individual stages against
explicit files, serve the review queue, or print corpus statistics.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, PipelineConfig
from .documents import read_documents, write_documents

logger = logging.getLogger(__name__)


def _add_run(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("run", help="run configured pipeline stages")
    p.add_argument("--config", required=True)
    p.add_argument("--stage", action="append", dest="stages",
                   help="run only these stages (repeatable)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="override output_root")
    p.add_argument("--workers", type=int, default=None, help="bound total parallelism")
    p.add_argument("--resume", action="store_true")


def _cmd_run(args: argparse.Namespace) -> int:
    from .pipeline import Pipeline

    overrides = {"seed": args.seed, "output_root": args.out}
    if args.workers is not None:
        overrides["workers"] = args.workers
    config = PipelineConfig.from_file(args.config, overrides)
    if args.stages:
        for stage in args.stages:
            if stage not in config.stages and stage not in (
                "filter", "mix", "dedup", "chunk", "augment", "benchgen", "decontam", "eval"
            ):
                raise ConfigError(f"unknown stage {stage!r}")
    manifest = Pipeline(config, resume=args.resume).run(args.stages)
    print(json.dumps(manifest.to_json(), indent=2))
    return 0


def _cmd_filter(args: argparse.Namespace) -> int:
    from .filtering import (
        HashedNgramScorer, RemoteScorer, filter_by_threshold, prefilter_short, score_corpus,
    )

    docs = prefilter_short(read_documents(args.input), args.min_tokens)
    if args.scorer.startswith("remote:"):
        scorer = RemoteScorer(args.scorer.split(":", 1)[1])
    else:
        if not args.weights:
            raise SystemExit("--scorer builtin requires --weights")
        scorer = HashedNgramScorer.from_file(args.weights)
    kept, report = filter_by_threshold(
        score_corpus(docs, scorer, args.batch_size), args.threshold
    )
    write_documents(args.out, kept)
    print(json.dumps(report.to_json(), indent=2))
    return 0


def _cmd_dedup(args: argparse.Namespace) -> int:
    from .dedup import LshParams, dedup

    params = LshParams(bands=args.bands, rows=args.rows,
                       shingle_width=args.shingle_width, seed=args.seed)
    result = dedup(read_documents(args.input), params)
    write_documents(args.out, result.kept)
    if args.manifest:
        with open(args.manifest, "w", encoding="utf-8") as fh:
            for row in result.manifest:
                fh.write(json.dumps(row.to_json()) + "\n")
    print(json.dumps(result.report.to_json(), indent=2))
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    from .stats import dataset_stats

    report = dataset_stats(read_documents(args.input), group_by=args.group_by)
    if args.format == "markdown":
        print(report.to_markdown())
    else:
        print(json.dumps(report.to_json(), indent=2))
    return 0


def _cmd_export_sft(args: argparse.Namespace) -> int:
    from .augment import Conversation, export_sft

    conversations = []
    with open(args.input, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                conversations.append(Conversation.from_json(json.loads(line)))
    n = export_sft(conversations, args.out)
    print(f"exported {n} conversations to {args.out}")
    return 0


def _cmd_review_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .bench.openqa import OpenQaItem
    from .review import ReviewStore, create_app

    store = ReviewStore(args.log, quota_per_category=args.quota_per_category)
    if args.load:
        items = []
        with open(args.load, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    items.append((OpenQaItem.from_json(obj), obj.get("seed_excerpt", "")))
        result = store.enqueue(items)
        print(f"enqueued {len(result.enqueued)}, rejected {len(result.rejected)}")
        for rejection in result.rejected:
            print(f"  rejected {rejection['id']}: {rejection['reason']}")
    app = create_app(store, token=args.token, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_judge(args: argparse.Namespace) -> int:
    from .bench.openqa import OpenQaItem
    from .evaluation import JudgeFailure, aggregate_openqa, judge_openqa
    from .pipeline import build_gateways

    config = PipelineConfig.from_file(args.config)
    gateway = build_gateways(config)[args.backend]
    items = {}
    with open(args.benchmark, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                item = OpenQaItem.from_json(json.loads(line))
                items[item.id] = item
    verdicts, failures = [], []
    with open(args.answers, encoding="utf-8") as fh, \
            open(args.out, "w", encoding="utf-8") as out:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            item = items[row["item_id"]]
            try:
                verdict = judge_openqa(item, row["answer"], gateway)
            except JudgeFailure as exc:
                failures.append(item.taxonomy)
                out.write(json.dumps({"item_id": item.id, "model": args.model,
                                      "judge_failure": str(exc)}) + "\n")
                continue
            out.write(json.dumps({**verdict.to_json(), "model": args.model}) + "\n")
            verdicts.append(verdict)
    report = aggregate_openqa(verdicts, failures, model=args.model)
    print(json.dumps(report.to_json(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyberforge",
        description="cybersecurity corpus curation, augmentation, benchmark, and eval pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run(sub)

    p = sub.add_parser("filter", help="score and threshold-gate a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-tokens", type=int, default=32)
    p.add_argument("--scorer", default="builtin", help="builtin or remote:URL")
    p.add_argument("--weights", help="weights file for the builtin scorer")
    p.add_argument("--batch-size", type=int, default=64)

    p = sub.add_parser("dedup", help="near-duplicate removal over a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--bands", type=int, default=14)
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--shingle-width", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)

    for name, help_text in (
        ("mix", "partition chronologically and replay-mix (config-driven)"),
        ("chunk", "select the latest chunks (config-driven)"),
        ("augment", "plan and augment seed chunks into conversations (config-driven)"),
        ("benchgen", "generate and verify the benchmark (config-driven)"),
        ("decontam", "decontaminate training data against the benchmark (config-driven)"),
        ("eval", "score a model on the MCQ benchmark (config-driven)"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--resume", action="store_true")
        if name == "augment":
            p.add_argument("--seeds", help="seed corpus path (overrides config)")
            p.add_argument("--max-chunk-tokens", type=int,
                           help="seed chunk size bound (overrides config)")
        if name == "benchgen":
            p.add_argument("what", nargs="?", default="all",
                           choices=("all", "mcq", "openqa", "sample", "decontam"),
                           help="run one benchgen phase (default: all)")
        if name == "eval":
            p.add_argument("--backend", help="backend profile name (overrides config)")
            p.add_argument("--mode", choices=("letter", "normalized"),
                           help="letter-token or normalized-option scoring")

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--group-by", default="source")
    p.add_argument("--format", choices=("json", "markdown"), default="markdown")

    p = sub.add_parser("export-sft", help="export a conversation archive as SFT JSONL")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("judge", help="LLM-as-judge over model answers to the open-QA benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--benchmark", required=True)
    p.add_argument("--answers", required=True, help="JSONL of {item_id, answer}")
    p.add_argument("--out", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--model", default="")

    p = sub.add_parser("review-serve", help="serve the human review queue")
    p.add_argument("--log", required=True, help="event log path")
    p.add_argument("--load", help="open-QA candidates JSONL to enqueue before serving")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--token", help="require this bearer token")
    p.add_argument("--quota-per-category", type=int, default=80)
    p.add_argument("--ui", help="serve a built frontend directory at /")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    single_stage = {"mix", "chunk", "augment", "benchgen", "decontam", "eval"}
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command in single_stage:
            from .pipeline import Pipeline

            overrides = {"seed": args.seed, "output_root": args.out}
            if getattr(args, "seeds", None):
                overrides["seed_corpus"] = args.seeds
            config = PipelineConfig.from_file(args.config, overrides)
            if getattr(args, "max_chunk_tokens", None):
                config.raw.setdefault("augment", {})["max_chunk_tokens"] = args.max_chunk_tokens
            if getattr(args, "backend", None):
                config.raw.setdefault("eval", {})["backend"] = args.backend
                config.validate()
            if getattr(args, "mode", None):
                config.raw.setdefault("eval", {})["mode"] = (
                    "letter-token" if args.mode == "letter" else "normalized-option"
                )
            stage = args.command
            benchgen_only = None
            if stage == "benchgen":
                if args.what == "decontam":
                    stage = "decontam"
                elif args.what != "all":
                    benchgen_only = args.what
            manifest = Pipeline(config, resume=args.resume).run(
                [stage], benchgen_only=benchgen_only
            )
            print(json.dumps(manifest.to_json(), indent=2))
            return 0
        handler = {
            "filter": _cmd_filter,
            "dedup": _cmd_dedup,
            "stats": _cmd_stats,
            "export-sft": _cmd_export_sft,
            "judge": _cmd_judge,
            "review-serve": _cmd_review_serve,
        }[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
