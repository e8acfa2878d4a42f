"""Expert review queue: pending decisions, legality rules, and the journal.

Every pipeline artifact that needs a human lands here as a pending
:class:`ReviewItem`. Decisions are exactly-once: the state transition and the
journal append happen under the store lock, so a second decision on the same
item always fails with :class:`DecisionConflictError`.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import replace
from typing import Optional

from .kgstore import (
    REVIEW_KINDS,
    ReviewItem,
    ReviewJournalEntry,
    Store,
    utc_now_iso,
)

# Actions an expert may take per item kind. Refinement items answer the
# add/delete/keep question; everything else is approve/reject/annotate.
LEGAL_ACTIONS: dict[str, frozenset[str]] = {
    "segmentation": frozenset({"approve", "reject", "annotate"}),
    "pair": frozenset({"approve", "reject", "annotate"}),
    "triplet": frozenset({"approve", "reject", "annotate"}),
    "refinement": frozenset({"add", "delete", "keep"}),
}

# Terminal state reached by each action.
STATE_AFTER_ACTION = {
    "approve": "approved",
    "reject": "rejected",
    "annotate": "annotated",
    # A refinement decision is a completed review whichever action was chosen;
    # the chosen action lives in the journal and the decision payload.
    "add": "approved",
    "delete": "approved",
    "keep": "approved",
}


class ReviewError(Exception):
    pass


class UnknownItemError(ReviewError):
    pass


class DecisionConflictError(ReviewError):
    """The item was already decided."""


class IllegalActionError(ReviewError):
    """The action is not legal for the item's kind."""


_counter = itertools.count(1)
_counter_lock = threading.Lock()


def new_item_id(kind: str) -> str:
    with _counter_lock:
        return f"ri-{kind}-{next(_counter):06d}"


def enqueue(store: Store, kind: str, work_id: str, payload: dict) -> ReviewItem:
    """Create a pending review item and persist it in the store."""
    if kind not in REVIEW_KINDS:
        raise ReviewError(f"unknown review kind '{kind}'")
    item = ReviewItem(
        id=new_item_id(kind),
        kind=kind,
        work_id=work_id,
        payload=payload,
        state="pending",
        created_at=utc_now_iso(),
    )
    store.add_review_item(item)
    return item


def decide(
    store: Store,
    item_id: str,
    action: str,
    actor: str = "expert",
    note: Optional[str] = None,
    concept_edit: Optional[dict] = None,
) -> ReviewItem:
    """Apply a decision to a pending item; journaled, exactly once.

    Raises :class:`UnknownItemError`, :class:`IllegalActionError`, or
    :class:`DecisionConflictError` (in that checking order) without touching
    the store on failure.
    """
    with store.lock:
        item = store.review_items.get(item_id)
        if item is None:
            raise UnknownItemError(item_id)
        if action not in LEGAL_ACTIONS[item.kind]:
            raise IllegalActionError(f"action '{action}' illegal for kind '{item.kind}'")
        if item.state != "pending":
            raise DecisionConflictError(f"item '{item_id}' already {item.state}")
        decided = replace(
            item,
            state=STATE_AFTER_ACTION[action],
            decided_at=utc_now_iso(),
            payload={
                **item.payload,
                "decision": {"action": action, "note": note, "concept_edit": concept_edit},
            },
        )
        store.review_items[item_id] = decided
        store.append_journal(
            ReviewJournalEntry(
                item_id=item_id,
                timestamp=decided.decided_at or utc_now_iso(),
                actor=actor,
                action=action,
                payload={k: v for k, v in {"note": note, "concept_edit": concept_edit}.items() if v},
            )
        )
        return decided


def journal_system_event(store: Store, item_id: str, action: str, payload: dict) -> None:
    """Record a pipeline-applied action (stage-4 add/delete/keep) against an item."""
    store.append_journal(
        ReviewJournalEntry(
            item_id=item_id,
            timestamp=utc_now_iso(),
            actor="system",
            action=action,
            payload=payload,
        )
    )


def pending_items(store: Store, work_id: Optional[str] = None, kind: Optional[str] = None) -> list[ReviewItem]:
    items = [i for i in store.review_items.values() if i.state == "pending"]
    if work_id is not None:
        items = [i for i in items if i.work_id == work_id]
    if kind is not None:
        items = [i for i in items if i.kind == kind]
    items.sort(key=lambda i: (i.created_at, i.id))
    return items


def query_items(
    store: Store,
    state: Optional[str] = None,
    kind: Optional[str] = None,
    work_id: Optional[str] = None,
) -> list[ReviewItem]:
    items = list(store.review_items.values())
    if state:
        items = [i for i in items if i.state == state]
    if kind:
        items = [i for i in items if i.kind == kind]
    if work_id:
        items = [i for i in items if i.work_id == work_id]
    items.sort(key=lambda i: (i.created_at, i.id))
    return items
