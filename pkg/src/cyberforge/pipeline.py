"""Config-driven pipeline runner wiring all stages into reproducible runs.

Stages execute in declared order (filter -> mix -> dedup -> chunk ->
augment -> benchgen -> decontam -> eval); each stage reads the previous
stage's files, writes its own under ``output_root/run_id/``, records its
counts in the manifest, and drops a ``.done`` marker so interrupted runs
resume. A stage failure halts the run with the failure point recorded,
and the manifest is written atomically either way.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from . import __version__
from .augment import augment_seed_chunk, export_sft, Conversation
from .bench import (
    DecontamConfig,
    decontaminate,
    generate_mcqs,
    parse_mcq_output,
    quota_sample,
    score_quality,
    verify_mcq_stage1,
    verify_openqa,
    plan_openqa,
    generate_openqa,
)
from .bench.mcq import McqItem
from .bench.openqa import OpenQaItem
from .chunking import split_markdown
from .config import ConfigError, PipelineConfig, RunManifest, StageRecord, STAGE_ORDER
from .dedup import LshParams, dedup
from .documents import Document, content_id, read_documents, write_documents
from .filtering import (
    HashedNgramScorer,
    RemoteScorer,
    filter_by_threshold,
    prefilter_short,
    score_corpus,
)
from .gateway import BackendProfile, Gateway, HttpBackend, MockBackend, ReplayCache, RetryPolicy
from .mixing import (
    MixConfig,
    build_replay_pool,
    chunk_manifest_row,
    mix_chunk,
    partition_chronological,
    select_latest,
)
from .evaluation import aggregate_mcq, emit_report, score_mcq
from .prompts import PromptLibrary
from .tokenizers import load_tokenizer

__all__ = ["Pipeline", "build_gateways"]

logger = logging.getLogger(__name__)


def build_gateways(config: PipelineConfig) -> dict[str, Gateway]:
    """Construct a Gateway per configured backend profile. A shared
    record/replay cache applies to all of them when configured, and a
    global worker count caps every backend's in-flight bound."""
    cache = None
    cache_cfg = config.raw.get("cache")
    if cache_cfg:
        cache = ReplayCache(cache_cfg["path"], mode=cache_cfg.get("mode", "record"))
    workers = int(config.raw.get("workers", 0) or 0)
    gateways: dict[str, Gateway] = {}
    for name, raw in config.raw.get("backends", {}).items():
        kind = raw.get("kind", "builtin")
        max_inflight = int(raw.get("max_inflight", 4))
        if workers:
            max_inflight = min(max_inflight, workers)
        profile = BackendProfile(
            kind=kind,
            endpoint=raw.get("endpoint", ""),
            model=raw.get("model", "default"),
            auth_env=raw.get("auth_env", ""),
            max_inflight=max_inflight,
            retry=RetryPolicy(
                max_attempts=int(raw.get("max_attempts", 3)),
                backoff_base=float(raw.get("backoff_base", 0.5)),
            ),
        )
        if kind == "remote":
            backend = HttpBackend(profile)
        elif kind == "builtin":
            backend = MockBackend()  # embeddings only; chat raises CapabilityError
        else:
            raise ConfigError(f"backend {name!r} has unknown kind {kind!r}")
        gateways[name] = Gateway(backend, profile, cache=cache)
    return gateways


class Pipeline:
    def __init__(
        self,
        config: PipelineConfig,
        gateways: dict[str, Gateway] | None = None,
        resume: bool = False,
    ):
        self.config = config
        self.run_dir = config.run_dir
        self.resume = resume
        self.tokenizer = load_tokenizer(config.raw.get("tokenizer"))
        self.gateways = gateways if gateways is not None else build_gateways(config)
        self.prompts = PromptLibrary(config.raw.get("prompts_dir"))

    # -- helpers ----------------------------------------------------------

    def _gateway(self, name: str | None) -> Gateway:
        if not name:
            raise ConfigError("stage requires a backend name")
        try:
            return self.gateways[name]
        except KeyError:
            raise ConfigError(f"backend {name!r} is not configured") from None

    def _out(self, name: str) -> Path:
        return self.run_dir / name

    def _count_file(self, path: Path) -> tuple[int, int]:
        docs = tokens = 0
        for doc in read_documents(path):
            docs += 1
            tokens += doc.token_count
        return docs, tokens

    def _jsonl(self, path: Path, rows) -> int:
        n = 0
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
                n += 1
        return n

    # -- stages -----------------------------------------------------------

    def stage_filter(self, record: StageRecord) -> None:
        cfg = self.config.stage("filter")
        input_path = self.config.path("input_corpus")
        if input_path is None:
            raise ConfigError("filter stage requires input_corpus")
        docs = list(read_documents(input_path))
        record.input_docs = len(docs)
        record.input_tokens = sum(d.token_count for d in docs)

        kept = list(prefilter_short(docs, int(cfg.get("min_tokens", 32))))
        scorer_spec = cfg.get("scorer", "builtin")
        if scorer_spec.startswith("remote:"):
            scorer = RemoteScorer(scorer_spec.split(":", 1)[1])
        elif scorer_spec == "builtin":
            weights = cfg.get("weights")
            if not weights:
                raise ConfigError("builtin scorer requires a weights file")
            scorer = HashedNgramScorer.from_file(weights)
        else:
            raise ConfigError(f"unknown scorer {scorer_spec!r}")
        scored = score_corpus(kept, scorer, batch_size=int(cfg.get("batch_size", 64)))
        kept_docs, report = filter_by_threshold(scored, float(cfg.get("threshold", 0.5)))

        out = self._out("filtered.jsonl")
        write_documents(out, kept_docs)
        (self._out("filter_report.json")).write_text(
            json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        record.output_docs, record.output_tokens = self._count_file(out)
        record.outputs = {"corpus": str(out), "report": str(self._out("filter_report.json"))}

    def stage_mix(self, record: StageRecord) -> None:
        cfg = self.config.stage("mix")
        source = self._out("filtered.jsonl")
        if not source.exists():
            source = self.config.path("input_corpus")
        if source is None or not source.exists():
            raise ConfigError("mix stage requires the filter stage's output or input_corpus")
        docs = list(read_documents(source))
        record.input_docs = len(docs)
        record.input_tokens = sum(d.token_count for d in docs)

        k = int(cfg.get("k", 20))
        plan, chunks = partition_chronological(docs, k)
        mix_config = MixConfig(
            replay_ratio=float(cfg.get("replay_ratio", 0.30)),
            replay_pool_cap_tokens=int(cfg.get("replay_pool_cap_tokens", 0) or 0),
            seed=self.config.seed,
            ratio_basis=cfg.get("ratio_basis", "tokens"),
        )
        pool: list[Document] = []
        if mix_config.replay_ratio > 0:
            general = self.config.path("general_corpus")
            if general is None:
                raise ConfigError("mix stage with replay_ratio > 0 requires general_corpus")
            cap = mix_config.replay_pool_cap_tokens or sum(
                d.token_count for d in read_documents(general)
            )
            pool = build_replay_pool(read_documents(general), cap, self.config.seed)

        chunk_dir = self._out("chunks")
        chunk_dir.mkdir(exist_ok=True)
        manifest_rows = []
        output_docs = output_tokens = 0
        for index, chunk in enumerate(chunks):
            mixed = mix_chunk(chunk, pool, mix_config, index) if mix_config.replay_ratio else list(chunk)
            write_documents(chunk_dir / f"chunk_{index:02d}.jsonl", mixed)
            manifest_rows.append(chunk_manifest_row(index, mixed))
            output_docs += len(mixed)
            output_tokens += sum(d.token_count for d in mixed)
        self._jsonl(self._out("chunk_manifest.jsonl"), manifest_rows)
        record.output_docs = output_docs
        record.output_tokens = output_tokens
        record.outputs = {"chunks": str(chunk_dir), "manifest": str(self._out("chunk_manifest.jsonl"))}
        record.extra = {"k": k, "boundaries": plan.boundaries}

    def _chunk_files(self) -> list[Path]:
        chunk_dir = self._out("chunks")
        return sorted(chunk_dir.glob("chunk_*.jsonl"))

    def stage_dedup(self, record: StageRecord) -> None:
        cfg = self.config.stage("dedup")
        params = LshParams(
            bands=int(cfg.get("bands", 14)),
            rows=int(cfg.get("rows", 8)),
            shingle_width=int(cfg.get("shingle_width", 5)),
            seed=self.config.seed,
        )
        chunk_files = self._chunk_files()
        if chunk_files:
            per_chunk = {path: list(read_documents(path)) for path in chunk_files}
            all_docs = [d for docs in per_chunk.values() for d in docs]
        else:
            source = self._out("filtered.jsonl")
            if not source.exists():
                source = self.config.path("input_corpus")
            if source is None or not source.exists():
                raise ConfigError("dedup stage requires chunk files, filtered output, or input_corpus")
            per_chunk = {}
            all_docs = list(read_documents(source))
        record.input_docs = len(all_docs)
        record.input_tokens = sum(d.token_count for d in all_docs)

        result = dedup(all_docs, params)
        removed = {r.removed_id for r in result.manifest}
        if per_chunk:
            for path, docs in per_chunk.items():
                write_documents(path, [d for d in docs if d.id not in removed])
            out_paths = {"chunks": str(self._out("chunks"))}
        else:
            out = self._out("deduped.jsonl")
            write_documents(out, result.kept)
            out_paths = {"corpus": str(out)}
        self._jsonl(self._out("dedup_manifest.jsonl"), (r.to_json() for r in result.manifest))
        self._out("dedup_report.json").write_text(
            json.dumps(result.report.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        record.output_docs = result.report.kept_docs
        record.output_tokens = sum(d.token_count for d in result.kept)
        record.outputs = {
            **out_paths,
            "manifest": str(self._out("dedup_manifest.jsonl")),
            "report": str(self._out("dedup_report.json")),
        }

    def stage_chunk(self, record: StageRecord) -> None:
        cfg = self.config.stage("chunk")
        chunk_files = self._chunk_files()
        if not chunk_files:
            raise ConfigError("chunk stage requires the mix stage's chunk files")
        chunks = [list(read_documents(path)) for path in chunk_files]
        record.input_docs = sum(len(c) for c in chunks)
        record.input_tokens = sum(d.token_count for c in chunks for d in c)
        n = int(cfg.get("select_last_n", 5))
        final = select_latest(chunks, n)
        out = self._out("final_corpus.jsonl")
        write_documents(out, final)
        record.output_docs, record.output_tokens = self._count_file(out)
        record.outputs = {"corpus": str(out)}
        record.extra = {"select_last_n": n}

    def _seed_chunks(self, max_tokens: int):
        seed_path = self.config.path("seed_corpus")
        if seed_path is None:
            raise ConfigError("stage requires seed_corpus")
        for doc in read_documents(seed_path):
            pieces = split_markdown(doc.text, max_tokens, self.tokenizer)
            for i, piece in enumerate(pieces):
                chunk_id = doc.id if len(pieces) == 1 else f"{doc.id}#chunk{i}"
                yield doc, chunk_id, piece

    def stage_augment(self, record: StageRecord) -> None:
        cfg = self.config.stage("augment")
        gateway = self._gateway(cfg.get("backend"))
        max_tokens = int(cfg.get("max_chunk_tokens", 32768))
        conversations: list[Conversation] = []
        rejection_rows: list[dict] = []
        seeds_in = 0
        seen_seed_ids = set()
        for doc, chunk_id, piece in self._seed_chunks(max_tokens):
            if doc.id not in seen_seed_ids:
                seen_seed_ids.add(doc.id)
                seeds_in += 1
            convs, rejected = augment_seed_chunk(
                chunk_id, piece, gateway, self.prompts, model=cfg.get("model", "")
            )
            for conv in convs:
                if doc.category is not None:
                    conv.provenance["category"] = str(doc.category)
            conversations.extend(convs)
            rejection_rows.extend(
                {"seed_id": r.seed_id, "skill_set": r.skill_set, "reason": r.reason}
                for r in rejected
            )
        conv_path = self._out("conversations.jsonl")
        self._jsonl(conv_path, (c.to_json() for c in conversations))
        sft_path = self._out("sft.jsonl")
        export_sft(conversations, sft_path)
        self._jsonl(self._out("augment_rejections.jsonl"), rejection_rows)
        record.input_docs = seeds_in
        record.output_docs = len(conversations)
        record.extra = {
            "amplification": round(len(conversations) / seeds_in, 2) if seeds_in else None,
            "rejected_blocks": len(rejection_rows),
        }
        record.outputs = {
            "conversations": str(conv_path),
            "sft": str(sft_path),
            "rejections": str(self._out("augment_rejections.jsonl")),
        }

    def _benchgen_mcq_phase(self, cfg: dict) -> int:
        """Generate, verify, and quality-score MCQ candidates; persist the
        survivor pool and per-gate ledger rows. Returns seed chunks seen."""
        generator = self._gateway(cfg.get("generator_backend"))
        scorer = self._gateway(cfg.get("scorer_backend", cfg.get("generator_backend")))
        verifier_names = cfg.get("verifier_backends", [])
        stage1_verifier = self._gateway(verifier_names[0])
        floor = int(cfg.get("quality_floor", 8))
        model = cfg.get("model", "")
        ledger: list[dict] = []
        pool: list[McqItem] = []
        seeds_in = 0
        for doc, chunk_id, piece in self._seed_chunks(int(cfg.get("max_chunk_tokens", 32768))):
            seeds_in += 1
            raw = generate_mcqs(piece, generator, self.prompts, model=model)
            candidates, skipped = parse_mcq_output(raw)
            ledger.extend(
                {"kind": "mcq", "seed_id": chunk_id, "stage": "parse",
                 "item": s.header, "reason": s.reason}
                for s in skipped
            )
            for index, item in enumerate(candidates):
                item.taxonomy = doc.category
                item.provenance = chunk_id
                item.id = content_id(chunk_id, str(index), item.question)
                verify_mcq_stage1(item, piece, stage1_verifier, self.prompts, model=model)
                if not item.passed_stage1:
                    reason = item.stage1.failure_reason or "verifier rejected"
                    ledger.append({"kind": "mcq", "seed_id": chunk_id, "stage": "stage1",
                                   "item": item.id, "reason": reason})
                    continue
                item.quality_score = score_quality(item, scorer, self.prompts, model=model)
                if item.quality_score is None:
                    ledger.append({"kind": "mcq", "seed_id": chunk_id, "stage": "stage2",
                                   "item": item.id, "reason": "unparseable quality score"})
                elif item.quality_score <= floor:
                    ledger.append({"kind": "mcq", "seed_id": chunk_id, "stage": "stage2",
                                   "item": item.id,
                                   "reason": f"score {item.quality_score} <= floor {floor}"})
                else:
                    pool.append(item)
        self._jsonl(self._out("mcq_pool.jsonl"), (i.to_json() for i in pool))
        self._jsonl(self._out("ledger_mcq.jsonl"), ledger)
        return seeds_in

    def _benchgen_openqa_phase(self, cfg: dict) -> int:
        """Plan, generate, and dual-verify open-QA candidates; persist the
        consensus pool and per-gate ledger rows."""
        generator = self._gateway(cfg.get("generator_backend"))
        verifier_names = cfg.get("verifier_backends", [])
        if len(verifier_names) != 2:
            raise ConfigError("benchgen requires exactly two verifier_backends")
        verifiers = (self._gateway(verifier_names[0]), self._gateway(verifier_names[1]))
        model = cfg.get("model", "")
        ledger: list[dict] = []
        pool: list[OpenQaItem] = []
        seeds_in = 0
        for doc, chunk_id, piece in self._seed_chunks(int(cfg.get("max_chunk_tokens", 32768))):
            seeds_in += 1
            plans, dropped = plan_openqa(piece, generator, self.prompts, model=model,
                                         tokenizer=self.tokenizer)
            ledger.extend(
                {"kind": "openqa", "seed_id": chunk_id, "stage": "plan",
                 "item": d.evaluation_name, "reason": d.reason}
                for d in dropped
            )
            for plan_index, plan_item in enumerate(plans):
                item = generate_openqa(plan_item, piece, generator, self.prompts, model=model)
                if item is None:
                    ledger.append({"kind": "openqa", "seed_id": chunk_id, "stage": "generate",
                                   "item": plan_item.evaluation_name,
                                   "reason": "insufficient information"})
                    continue
                item.taxonomy = doc.category
                item.provenance = chunk_id
                item.id = content_id(chunk_id, str(plan_index), item.question)
                consensus = verify_openqa(item, piece, verifiers, self.prompts, model=model)
                if not consensus.passed:
                    reasons = [r.parse_failure or r.verdict for r in consensus.records]
                    ledger.append({"kind": "openqa", "seed_id": chunk_id, "stage": "verify",
                                   "item": item.id,
                                   "reason": f"consensus failed: {reasons}"})
                    continue
                pool.append(item)
        self._jsonl(self._out("openqa_pool.jsonl"), (i.to_json() for i in pool))
        self._jsonl(self._out("ledger_openqa.jsonl"), ledger)
        return seeds_in

    def _benchgen_sample_phase(self, cfg: dict) -> tuple[int, int]:
        """Quota-sample whichever pools exist into the benchmark files and
        assemble the combined removal ledger."""
        ledger: list[dict] = []
        counts = [0, 0]
        for idx, (pool_name, quota_key, bench_name, kind, loader) in enumerate((
            ("mcq_pool.jsonl", "mcq_quota", "bench_mcq.jsonl", "mcq", McqItem.from_json),
            ("openqa_pool.jsonl", "openqa_quota", "bench_openqa_candidates.jsonl",
             "openqa", OpenQaItem.from_json),
        )):
            pool_path = self._out(pool_name)
            if not pool_path.exists():
                continue
            pool = [loader(json.loads(line))
                    for line in pool_path.read_text(encoding="utf-8").splitlines() if line]
            quota = cfg.get(quota_key, {})
            bench = quota_sample(pool, quota, self.config.seed) if quota else pool
            sampled = {i.id for i in bench}
            ledger.extend(
                {"kind": kind, "seed_id": i.provenance, "stage": "sample", "item": i.id,
                 "reason": "not drawn by quota sample"}
                for i in pool if i.id not in sampled
            )
            self._jsonl(self._out(bench_name), (i.to_json() for i in bench))
            counts[idx] = len(bench)
        combined: list[dict] = []
        for name in ("ledger_mcq.jsonl", "ledger_openqa.jsonl"):
            path = self._out(name)
            if path.exists():
                combined.extend(json.loads(line)
                                for line in path.read_text(encoding="utf-8").splitlines() if line)
        combined.extend(ledger)
        self._jsonl(self._out("removal_ledger.jsonl"), combined)
        return counts[0], counts[1]

    def stage_benchgen(self, record: StageRecord, only: str | None = None) -> None:
        cfg = self.config.stage("benchgen")
        seeds_in = 0
        if only in (None, "mcq"):
            seeds_in = self._benchgen_mcq_phase(cfg)
        if only in (None, "openqa"):
            seeds_in = max(seeds_in, self._benchgen_openqa_phase(cfg))
        mcq_n, qa_n = self._benchgen_sample_phase(cfg)
        record.input_docs = seeds_in
        record.output_docs = mcq_n + qa_n
        record.outputs = {
            "mcq": str(self._out("bench_mcq.jsonl")),
            "openqa": str(self._out("bench_openqa_candidates.jsonl")),
            "ledger": str(self._out("removal_ledger.jsonl")),
        }
        record.extra = {"mcq_benchmark": mcq_n, "openqa_candidates": qa_n}

    def stage_decontam(self, record: StageRecord) -> None:
        cfg = self.config.stage("decontam")
        gateway = self._gateway(cfg.get("backend"))
        conv_path = self._out("conversations.jsonl")
        if not conv_path.exists():
            raise ConfigError("decontam stage requires the augment stage's conversations")
        conversations = []
        with open(conv_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    conversations.append(Conversation.from_json(json.loads(line)))
        queries = [
            (f"conv{i}", conv.turns[0].content if conv.turns else "")
            for i, conv in enumerate(conversations)
        ]
        questions: list[str] = []
        for name in ("bench_mcq.jsonl", "bench_openqa_candidates.jsonl"):
            path = self._out(name)
            if path.exists():
                with open(path, encoding="utf-8") as fh:
                    questions.extend(
                        json.loads(line)["question"] for line in fh if line.strip()
                    )
        config = DecontamConfig(
            threshold=float(cfg.get("threshold", 0.9)),
            embedding_backend=cfg.get("backend", "builtin"),
        )
        kept_ids, report = decontaminate(queries, questions, config, gateway)
        kept_set = set(kept_ids)
        kept_convs = [c for i, c in enumerate(conversations) if f"conv{i}" in kept_set]
        out = self._out("conversations_decontaminated.jsonl")
        self._jsonl(out, (c.to_json() for c in kept_convs))
        self._out("decontam_report.json").write_text(
            json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
        )
        record.input_docs = len(conversations)
        record.output_docs = len(kept_convs)
        record.outputs = {"conversations": str(out),
                          "report": str(self._out("decontam_report.json"))}

    def stage_eval(self, record: StageRecord) -> None:
        cfg = self.config.stage("eval")
        gateway = self._gateway(cfg.get("backend"))
        mcq_path = self._out("bench_mcq.jsonl")
        if not mcq_path.exists():
            raise ConfigError("eval stage requires bench_mcq.jsonl")
        items = []
        with open(mcq_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    items.append(McqItem.from_json(json.loads(line)))
        model = cfg.get("model", "candidate")
        predictions, accuracy = score_mcq(items, gateway, mode=cfg.get("mode", "letter-token"))
        self._jsonl(self._out("eval_predictions.jsonl"),
                    ({**p.to_json(), "model": model} for p in predictions))
        report = aggregate_mcq(predictions, model=model)
        emit_report(report, "json", self._out("eval_report.json"))
        emit_report(report, "markdown", self._out("eval_report.md"))
        record.input_docs = len(items)
        record.output_docs = len(predictions)
        record.extra = {"accuracy": accuracy, "macro": report.macro_accuracy}
        record.outputs = {
            "predictions": str(self._out("eval_predictions.jsonl")),
            "report": str(self._out("eval_report.json")),
        }

    # -- driver -----------------------------------------------------------

    def run(self, stages: list[str] | None = None,
            benchgen_only: str | None = None) -> RunManifest:
        requested = stages if stages is not None else self.config.stages
        for stage in requested:
            if stage not in STAGE_ORDER:
                raise ConfigError(
                    f"unknown stage {stage!r}; valid stages: {', '.join(STAGE_ORDER)}"
                )
        ordered = [s for s in STAGE_ORDER if s in requested]
        self.run_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(
            run_id=self.config.run_id,
            config_hash=self.config.config_hash(),
            tool_version=__version__,
        )
        manifest_path = self.run_dir / "manifest.json"
        stage_fns = {
            "filter": self.stage_filter,
            "mix": self.stage_mix,
            "dedup": self.stage_dedup,
            "chunk": self.stage_chunk,
            "augment": self.stage_augment,
            "benchgen": lambda record: self.stage_benchgen(record, benchgen_only),
            "decontam": self.stage_decontam,
            "eval": self.stage_eval,
        }
        for stage in ordered:
            marker = self.run_dir / f"{stage}.done"
            if self.resume and marker.exists():
                record = StageRecord(name=stage, **json.loads(marker.read_text())["record"])
                manifest.stages.append(record)
                logger.info("stage %s: resumed from marker", stage)
                continue
            record = StageRecord(name=stage)
            started = time.perf_counter()
            try:
                stage_fns[stage](record)
            except Exception as exc:
                manifest.status = "failed"
                manifest.failure = f"stage {stage}: {exc}"
                manifest.stages.append(record)
                manifest.write_atomic(manifest_path)
                raise
            record.wall_time_s = time.perf_counter() - started
            manifest.stages.append(record)
            payload = record.to_json()
            payload.pop("name")
            payload.pop("doc_retention")
            payload.pop("token_retention")
            wall = payload.pop("wall_time_s")
            marker.write_text(json.dumps({"record": {**payload, "wall_time_s": wall}}))
        manifest.status = "completed"
        manifest.write_atomic(manifest_path)
        return manifest
