"""Pipeline configuration and run manifests.

One JSON config file drives a run; flags may override scalar fields.
Seeds are always explicit (no wall-clock defaults) and every backend a
stage references must be defined, so a config plus a sealed gateway
cache reproduces a run bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

__all__ = ["ConfigError", "PipelineConfig", "StageRecord", "RunManifest", "STAGE_ORDER"]

STAGE_ORDER = ("filter", "mix", "dedup", "chunk", "augment", "benchgen", "decontam", "eval")

_STAGE_BACKEND_KEYS = {
    "augment": ("backend",),
    "benchgen": ("generator_backend", "scorer_backend"),
    "decontam": ("backend",),
    "eval": ("backend", "judge_backend"),
}


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    run_id: str
    seed: int
    output_root: str = "out"
    stages: list[str] = field(default_factory=lambda: list(STAGE_ORDER))
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path, overrides: dict[str, Any] | None = None) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls.from_dict(raw, overrides)

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict[str, Any] | None = None) -> "PipelineConfig":
        raw = dict(raw)
        for key, value in (overrides or {}).items():
            if value is not None:
                raw[key] = value
        if "run_id" not in raw:
            raise ConfigError("config must set run_id")
        if "seed" not in raw:
            raise ConfigError("config must set an explicit seed")
        config = cls(
            run_id=str(raw["run_id"]),
            seed=int(raw["seed"]),
            output_root=str(raw.get("output_root", "out")),
            stages=list(raw.get("stages", STAGE_ORDER)),
            raw=raw,
        )
        config.validate()
        return config

    def validate(self) -> None:
        for stage in self.stages:
            if stage not in STAGE_ORDER:
                raise ConfigError(
                    f"unknown stage {stage!r}; valid stages: {', '.join(STAGE_ORDER)}"
                )
        backends = self.raw.get("backends", {})
        for stage, keys in _STAGE_BACKEND_KEYS.items():
            if stage not in self.stages:
                continue
            stage_cfg = self.stage(stage)
            for key in keys:
                name = stage_cfg.get(key)
                if name and name not in backends:
                    raise ConfigError(
                        f"stage {stage!r} references undefined backend {name!r}"
                    )
            for name in stage_cfg.get("verifier_backends", []):
                if name not in backends:
                    raise ConfigError(
                        f"stage {stage!r} references undefined backend {name!r}"
                    )

    def stage(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def path(self, key: str) -> Path | None:
        value = self.raw.get(key)
        return Path(value) if value else None

    @property
    def run_dir(self) -> Path:
        return Path(self.output_root) / self.run_id

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class StageRecord:
    name: str
    input_docs: int = 0
    output_docs: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    wall_time_s: float = 0.0
    outputs: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "input_docs": self.input_docs,
            "output_docs": self.output_docs,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "doc_retention": self.output_docs / self.input_docs if self.input_docs else None,
            "token_retention": self.output_tokens / self.input_tokens if self.input_tokens else None,
            "wall_time_s": round(self.wall_time_s, 3),
            "outputs": self.outputs,
            "extra": self.extra,
        }


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    tool_version: str
    stages: list[StageRecord] = field(default_factory=list)
    status: str = "running"
    failure: str | None = None
    started_at: float = field(default_factory=time.time)

    def to_json(self) -> dict:
        rows = [s.to_json() for s in self.stages]
        # retention accounting relative to the run's original input, for
        # the corpus-shrinking stages
        base = next((s for s in self.stages if s.input_docs), None)
        if base is not None:
            for stage, row in zip(self.stages, rows):
                if stage.output_docs and stage.name in ("filter", "mix", "dedup", "chunk"):
                    row["docs_vs_run_input"] = stage.output_docs / base.input_docs
                    if base.input_tokens:
                        row["tokens_vs_run_input"] = stage.output_tokens / base.input_tokens
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "status": self.status,
            "failure": self.failure,
            "started_at": self.started_at,
            "stages": rows,
        }

    def write_atomic(self, path: str | Path) -> None:
        """Write via a temp file + rename so a crash never leaves a torn
        manifest."""
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".manifest-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(self.to_json(), fh, indent=2)
                fh.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
