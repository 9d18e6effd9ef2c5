"""Human-verification queue for open-QA candidates.

Event-sourced: an append-only line-delimited JSON log is the single
source of truth and current state is always the fold of the log, so a
crash can never lose a decision that was acknowledged. A small FastAPI
app exposes the queue to the review UI; it binds loopback by default and
optionally requires a bearer token.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from fastapi import Depends, FastAPI, HTTPException, Request
from pydantic import BaseModel

from .bench.openqa import OpenQaItem
from .documents import CATEGORY_LEAVES

__all__ = [
    "ReviewItem",
    "EnqueueResult",
    "ReviewStore",
    "ConflictError",
    "NotFoundError",
    "create_app",
]

ACTIONS = ("accept", "reject", "edit")
_TERMINAL = {"accept": "accepted", "reject": "rejected", "edit": "edited"}


class ConflictError(RuntimeError):
    pass


class NotFoundError(KeyError):
    pass


@dataclass
class ReviewItem:
    item: OpenQaItem
    seed_excerpt: str = ""
    status: str = "pending"
    decision: dict = field(default_factory=dict)

    def presentation(self) -> dict:
        """Everything the reviewer sees: the item plus both verifier
        analyses and scores."""
        return {
            "id": self.item.id,
            "evaluation_name": self.item.evaluation_name,
            "question": self.item.question,
            "reference_answer": self.item.reference_answer,
            "category": self.item.taxonomy.category if self.item.taxonomy else None,
            "leaf": self.item.taxonomy.leaf if self.item.taxonomy else None,
            "seed_excerpt": self.seed_excerpt,
            "verifier_records": [r.to_json() for r in self.item.verifier_records],
            "status": self.status,
            "decision": self.decision,
        }


@dataclass
class EnqueueResult:
    enqueued: list[str] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)


class ReviewStore:
    """Event log + folded state. Decisions are serialized through a single
    writer lock and appended to the log before any state mutation."""

    def __init__(self, log_path: str | Path, quota_per_category: int = 80):
        self.log_path = Path(log_path)
        self.quota_per_category = quota_per_category
        self._lock = threading.Lock()
        self.items: dict[str, ReviewItem] = {}
        if self.log_path.exists():
            self._replay()

    # -- event handling -------------------------------------------------

    def _append_event(self, event: dict) -> None:
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")
            fh.flush()

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "enqueue":
            item = OpenQaItem.from_json(event["item"])
            self.items[item.id] = ReviewItem(
                item=item, seed_excerpt=event.get("seed_excerpt", "")
            )
        elif kind == "decision":
            review = self.items[event["item_id"]]
            review.status = _TERMINAL[event["action"]]
            review.decision = {
                "action": event["action"],
                "reviewer": event.get("reviewer", ""),
                "timestamp": event.get("timestamp"),
                "note": event.get("payload", {}).get("note", ""),
            }
            if event["action"] == "edit":
                payload = event.get("payload", {})
                review.decision["original_question"] = review.item.question
                review.decision["original_reference_answer"] = review.item.reference_answer
                if payload.get("edited_question"):
                    review.item.question = payload["edited_question"]
                if payload.get("edited_reference_answer"):
                    review.item.reference_answer = payload["edited_reference_answer"]
            review.item.human_status = review.status
        else:
            raise ValueError(f"unknown event kind {kind!r}")

    def _replay(self) -> None:
        with open(self.log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self._apply(json.loads(line))

    # -- operations ------------------------------------------------------

    def enqueue(self, items: Iterable[tuple[OpenQaItem, str]]) -> EnqueueResult:
        """Add dual-consensus items as pending. Items without two PASS
        verdicts and duplicate ids are rejected with a reason."""
        result = EnqueueResult()
        with self._lock:
            for item, seed_excerpt in items:
                if not item.consensus_passed:
                    result.rejected.append(
                        {"id": item.id, "reason": "item lacks dual-verifier consensus"}
                    )
                    continue
                if item.id in self.items:
                    result.rejected.append({"id": item.id, "reason": "duplicate item id"})
                    continue
                event = {
                    "event": "enqueue",
                    "item_id": item.id,
                    "item": item.to_json(),
                    "seed_excerpt": seed_excerpt,
                    "timestamp": time.time(),
                }
                self._append_event(event)
                self._apply(event)
                result.enqueued.append(item.id)
        return result

    def get(self, item_id: str) -> ReviewItem:
        try:
            return self.items[item_id]
        except KeyError:
            raise NotFoundError(item_id) from None

    def list_items(
        self,
        status: str | None = "pending",
        category: str | None = None,
        page: int = 1,
        page_size: int = 20,
    ) -> dict:
        matches = [
            r for r in self.items.values()
            if (status is None or r.status == status)
            and (category is None or (r.item.taxonomy and r.item.taxonomy.category == category))
        ]
        matches.sort(key=lambda r: r.item.id)
        start = (max(page, 1) - 1) * page_size
        return {
            "total": len(matches),
            "page": max(page, 1),
            "page_size": page_size,
            "items": [r.presentation() for r in matches[start : start + page_size]],
        }

    def decide(self, item_id: str, action: str, payload: dict | None = None,
               reviewer: str = "") -> ReviewItem:
        """Apply one decision. Only pending items may be decided; repeats
        of the same (item_id, action) and decisions on already-decided
        items raise :class:`ConflictError`."""
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        with self._lock:
            review = self.get(item_id)
            if review.status != "pending":
                raise ConflictError(
                    f"item {item_id} is {review.status}, not pending"
                )
            event = {
                "event": "decision",
                "item_id": item_id,
                "action": action,
                "payload": payload or {},
                "reviewer": reviewer,
                "timestamp": time.time(),
            }
            self._append_event(event)
            self._apply(event)
            return review

    def stats(self) -> dict:
        by_status: dict[str, int] = {s: 0 for s in ("pending", "accepted", "rejected", "edited")}
        by_leaf: dict[str, int] = {}
        by_category: dict[str, int] = {}
        for review in self.items.values():
            by_status[review.status] = by_status.get(review.status, 0) + 1
            if review.item.taxonomy:
                leaf = str(review.item.taxonomy)
                by_leaf[leaf] = by_leaf.get(leaf, 0) + 1
                cat = review.item.taxonomy.category
                by_category[cat] = by_category.get(cat, 0) + 1
        return {
            "total": len(self.items),
            "by_status": by_status,
            "by_leaf": by_leaf,
            "by_category": by_category,
        }

    def export_accepted(self, path: str | Path) -> dict:
        """Write accepted and edited items in the benchmark open-QA format.

        Edited items export their edited text; the original text rides
        along in provenance. Warns (in the returned summary) when a
        category misses the configured quota.
        """
        exported = 0
        per_category: dict[str, int] = {c: 0 for c in CATEGORY_LEAVES}
        warnings: list[str] = []
        with open(path, "w", encoding="utf-8") as fh:
            for review in sorted(self.items.values(), key=lambda r: r.item.id):
                if review.status not in ("accepted", "edited"):
                    continue
                obj = review.item.to_json()
                if review.status == "edited":
                    obj["provenance"] = json.dumps(
                        {
                            "seed": review.item.provenance,
                            "original_question": review.decision.get("original_question", ""),
                            "original_reference_answer": review.decision.get(
                                "original_reference_answer", ""
                            ),
                        }
                    )
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
                exported += 1
                if review.item.taxonomy:
                    per_category[review.item.taxonomy.category] += 1
        for category, count in per_category.items():
            if count != self.quota_per_category:
                warnings.append(
                    f"category {category}: exported {count}, quota {self.quota_per_category}"
                )
        return {"exported": exported, "per_category": per_category, "warnings": warnings}


# -- HTTP API ------------------------------------------------------------


class DecisionBody(BaseModel):
    action: str
    note: str = ""
    edited_question: str | None = None
    edited_reference_answer: str | None = None
    reviewer: str = ""


class ExportBody(BaseModel):
    path: str


def create_app(store: ReviewStore, token: str | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="open-QA review service", docs_url=None, redoc_url=None)

    def check_auth(request: Request) -> None:
        if token and request.headers.get("Authorization") != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    @app.get("/api/items", dependencies=[Depends(check_auth)])
    def list_items(status: str | None = "pending", category: str | None = None,
                   page: int = 1, page_size: int = 20) -> dict:
        return store.list_items(status=status, category=category, page=page,
                                page_size=page_size)

    @app.get("/api/items/{item_id}", dependencies=[Depends(check_auth)])
    def get_item(item_id: str) -> dict:
        try:
            return store.get(item_id).presentation()
        except NotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}") from None

    @app.post("/api/items/{item_id}/decision", dependencies=[Depends(check_auth)])
    def decide(item_id: str, body: DecisionBody) -> dict:
        payload = {
            "note": body.note,
            "edited_question": body.edited_question,
            "edited_reference_answer": body.edited_reference_answer,
        }
        try:
            review = store.decide(item_id, body.action, payload, reviewer=body.reviewer)
        except NotFoundError:
            raise HTTPException(status_code=404, detail=f"unknown item {item_id}") from None
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return review.presentation()

    @app.get("/api/stats", dependencies=[Depends(check_auth)])
    def stats() -> dict:
        return store.stats()

    @app.post("/api/export", dependencies=[Depends(check_auth)])
    def export(body: ExportBody) -> dict:
        return store.export_accepted(body.path)

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
