"""Corpus statistics: per-group sample/token accounting with a grand total."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .documents import Document

__all__ = ["StatsRow", "StatsReport", "dataset_stats"]


@dataclass
class StatsRow:
    group: str
    samples: int = 0
    total_tokens: int = 0
    min_tokens: int | None = None
    max_tokens: int | None = None

    @property
    def avg_tokens(self) -> float:
        return self.total_tokens / self.samples if self.samples else 0.0

    def add(self, token_count: int) -> None:
        self.samples += 1
        self.total_tokens += token_count
        self.min_tokens = token_count if self.min_tokens is None else min(self.min_tokens, token_count)
        self.max_tokens = token_count if self.max_tokens is None else max(self.max_tokens, token_count)

    def to_json(self) -> dict:
        return {
            "group": self.group,
            "samples": self.samples,
            "avg_tokens": round(self.avg_tokens, 2),
            "total_tokens": self.total_tokens,
            "min_tokens": self.min_tokens or 0,
            "max_tokens": self.max_tokens or 0,
        }


@dataclass
class StatsReport:
    rows: list[StatsRow] = field(default_factory=list)
    total: StatsRow = field(default_factory=lambda: StatsRow("total"))

    def row(self, group: str) -> StatsRow | None:
        return next((r for r in self.rows if r.group == group), None)

    def to_json(self) -> dict:
        return {"rows": [r.to_json() for r in self.rows], "total": self.total.to_json()}

    def to_markdown(self) -> str:
        lines = [
            "| Group | Samples | Avg. Tokens | Total Tokens | Min Tokens | Max Tokens |",
            "|---|---:|---:|---:|---:|---:|",
        ]
        for row in [*self.rows, self.total]:
            lines.append(
                f"| {row.group} | {row.samples:,} | {row.avg_tokens:,.2f} | "
                f"{row.total_tokens:,} | {row.min_tokens or 0:,} | {row.max_tokens or 0:,} |"
            )
        return "\n".join(lines)

    def __str__(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def dataset_stats(
    corpus: Iterable[Document],
    group_by: str | Callable[[Document], str] = "source",
) -> StatsReport:
    """Aggregate token statistics per group plus a grand-total row.

    ``group_by`` is a Document attribute name or a callable; documents
    with a missing group value land in an ``(unset)`` row.
    """
    if callable(group_by):
        key = group_by
    else:
        attr = group_by

        def key(doc: Document) -> str:
            value = getattr(doc, attr, None)
            return str(value) if value is not None else "(unset)"

    rows: dict[str, StatsRow] = {}
    report = StatsReport()
    for doc in corpus:
        group = key(doc)
        row = rows.get(group)
        if row is None:
            row = rows[group] = StatsRow(group)
        row.add(doc.token_count)
        report.total.add(doc.token_count)
    report.rows = [rows[g] for g in sorted(rows)]
    return report
