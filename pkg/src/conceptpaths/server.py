"""HTTP review service: expert queue, work context, pipeline status.

JSON-over-HTTP with cursor pagination, no authentication (single-expert,
localhost deployment). Read endpoints answer from the current store snapshot;
decision writes are serialized through the single-writer journal, so exactly
one of two racing decisions on an item wins (the loser gets 409). Deciding
the last pending item of a parked work flips its pipeline status to ``ready``
so the next pipeline run picks it up.
"""

from __future__ import annotations

import os
import threading
from dataclasses import asdict
from typing import Optional

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import review
from .kgstore import (
    REVIEW_KINDS,
    REVIEW_STATES,
    ReviewItem,
    Store,
    load_workspace,
    save_workspace,
)
from .review import DecisionConflictError, IllegalActionError, UnknownItemError

DEFAULT_PAGE_LIMIT = 50


class DecisionBody(BaseModel):
    action: str
    note: Optional[str] = None
    concept_edit: Optional[dict] = None


def _item_json(item: ReviewItem) -> dict:
    return asdict(item)


def create_app(
    workspace: str,
    store: Optional[Store] = None,
    persist: bool = True,
    static_dir: Optional[str] = None,
) -> FastAPI:
    """Build the review API over a workspace directory (or an injected store)."""
    app = FastAPI(title="conceptpaths review service")
    app.state.store = store if store is not None else load_workspace(workspace)
    app.state.workspace = workspace
    app.state.persist = persist
    app.state.save_lock = threading.Lock()

    def current_store() -> Store:
        return app.state.store

    def read_snapshot() -> Store:
        # Read endpoints answer from an immutable snapshot; only decisions
        # touch the live store, under its lock.
        return app.state.store.snapshot()

    def persist_store() -> None:
        if app.state.persist:
            with app.state.save_lock:
                save_workspace(current_store(), app.state.workspace)

    @app.get("/api/queue")
    def queue(
        state: Optional[str] = None,
        kind: Optional[str] = None,
        work: Optional[str] = None,
        cursor: Optional[str] = None,
        limit: int = DEFAULT_PAGE_LIMIT,
    ):
        if state and state not in REVIEW_STATES:
            raise HTTPException(422, f"unknown state '{state}'")
        if kind and kind not in REVIEW_KINDS:
            raise HTTPException(422, f"unknown kind '{kind}'")
        items = review.query_items(read_snapshot(), state=state, kind=kind, work_id=work)
        offset = 0
        if cursor:
            try:
                offset = int(cursor)
            except ValueError:
                raise HTTPException(422, "malformed cursor")
        page = items[offset : offset + limit]
        next_cursor = str(offset + limit) if offset + limit < len(items) else None
        return {
            "items": [_item_json(i) for i in page],
            "next_cursor": next_cursor,
            "total": len(items),
        }

    @app.get("/api/items/{item_id}")
    def item_detail(item_id: str):
        store = read_snapshot()
        item = store.review_items.get(item_id)
        if item is None:
            raise HTTPException(404, f"no review item '{item_id}'")
        work = store.works.get(item.work_id)
        state = store.pipeline_states.get(item.work_id, {})
        segments = state.get("segments")
        hierarchy = state.get("edges", [])
        return {
            **_item_json(item),
            "context": {
                "abstract": work.abstract_text if work else None,
                "segments": segments,
                "hierarchy_fragment": _hierarchy_fragment(item, hierarchy, store),
                "legal_actions": sorted(review.LEGAL_ACTIONS[item.kind]),
            },
        }

    def _hierarchy_fragment(item: ReviewItem, edges: list, store: Store) -> list:
        names = set()
        payload = item.payload
        for key in ("pair",):
            for name in payload.get(key, []):
                names.add(name.lower())
        if payload.get("proposed_intermediate"):
            names.add(payload["proposed_intermediate"].lower())
        fragment = []
        for parent, child in edges:
            p_name = store.concepts[parent].name if parent in store.concepts else parent
            c_name = store.concepts[child].name if child in store.concepts else child
            if not names or p_name.lower() in names or c_name.lower() in names:
                fragment.append([p_name, c_name])
        return fragment[:50]

    @app.post("/api/items/{item_id}/decision")
    def decide(item_id: str, body: DecisionBody):
        store = current_store()
        try:
            item = review.decide(
                store,
                item_id,
                body.action,
                actor="expert",
                note=body.note,
                concept_edit=body.concept_edit,
            )
        except UnknownItemError:
            raise HTTPException(404, f"no review item '{item_id}'")
        except IllegalActionError as exc:
            raise HTTPException(422, str(exc))
        except DecisionConflictError as exc:
            raise HTTPException(409, str(exc))
        unblocked = _maybe_unblock(store, item.work_id)
        persist_store()
        return {"item": _item_json(item), "work_unblocked": unblocked}

    def _maybe_unblock(store: Store, work_id: str) -> bool:
        # All pending items resolved: the parked work becomes ready to resume.
        state = store.pipeline_states.get(work_id)
        if not state or state.get("status") != "awaiting_review":
            return False
        if review.pending_items(store, work_id=work_id):
            return False
        with store.lock:
            state["status"] = "ready"
        return True

    @app.get("/api/works/{work_id}")
    def work_detail(work_id: str):
        store = read_snapshot()
        work = store.works.get(work_id)
        if work is None:
            raise HTTPException(404, f"no work '{work_id}'")
        state = store.pipeline_states.get(work_id, {})
        return {
            "id": work.id,
            "title": work.title,
            "abstract_text": work.abstract_text,
            "publication_date": work.publication_date,
            "authors": list(work.authors),
            "concept_ids": sorted(work.concept_ids),
            "status": state.get("status"),
            "segments": state.get("segments"),
            "pairs": state.get("pairs", []),
            "triplets": state.get("triplets", []),
            "paths": [asdict(p) | {"nodes": list(p.nodes)} for p in store.paths if p.work_id == work_id],
        }

    @app.get("/api/stats")
    def stats():
        store = read_snapshot()
        by_state: dict[str, int] = {}
        by_kind: dict[str, int] = {}
        for item in store.review_items.values():
            by_state[item.state] = by_state.get(item.state, 0) + 1
            if item.state == "pending":
                by_kind[item.kind] = by_kind.get(item.kind, 0) + 1
        works_by_status: dict[str, int] = {}
        counters = {"hallucinations": 0, "review_items_created": 0}
        for state in store.pipeline_states.values():
            works_by_status[state.get("status", "unknown")] = (
                works_by_status.get(state.get("status", "unknown"), 0) + 1
            )
            for key in counters:
                counters[key] += (state.get("counters") or {}).get(key, 0)
        return {
            "queue_depth": by_state.get("pending", 0),
            "items_by_state": by_state,
            "pending_by_kind": by_kind,
            "works_by_status": works_by_status,
            "counters": counters,
            "journal_length": len(store.review_journal),
        }

    @app.get("/api/health")
    def health():
        return {"ok": True, "works": len(read_snapshot().works)}

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/")
        def index():
            return Response(
                "conceptpaths review service. API under /api/; build the review UI "
                "(frontend/) for a browser interface.",
                media_type="text/plain",
            )

    return app


def serve(workspace: str, port: int, host: str = "127.0.0.1", static_dir: Optional[str] = None) -> None:
    import uvicorn

    app = create_app(workspace, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
