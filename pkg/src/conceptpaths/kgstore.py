"""Persistent data model for the concept knowledge graph.

Owns concepts, is-a edges, works, extracted paths, innovation annotations,
the expert review queue, and the append-only review journal. A workspace is
a directory of JSONL tables (one JSON object per line) plus ``meta.json``;
see :data:`WORKSPACE_FILES`. The module also owns the cleaning step that
turns raw concept associations into a strict level-ordered hierarchy.

Concurrency: read-many / write-exclusive. Readers take :meth:`Store.snapshot`
and never observe partial mutations; all writes go through the store lock.
The review journal is single-writer append-only.
"""

from __future__ import annotations

import json
import os
import string
import threading
import unicodedata
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from typing import Any, Iterable, Optional

SCHEMA_VERSION = 1

WORKSPACE_FILES = {
    "concepts": "concepts.jsonl",
    "edges": "edges.jsonl",
    "works": "works.jsonl",
    "paths": "paths.jsonl",
    "annotations": "annotations.jsonl",
    "review_items": "review_items.jsonl",
    "review_journal": "review_journal.jsonl",
    "pipeline_states": "pipeline_states.jsonl",
}

CONCEPT_SOURCES = ("openalex", "llm", "expert")
EDGE_PROVENANCES = ("openalex", "llm", "expert")
JOURNAL_ACTORS = ("expert", "system")
JOURNAL_ACTIONS = ("approve", "reject", "annotate", "add", "delete", "keep")
REVIEW_KINDS = ("segmentation", "pair", "triplet", "refinement")
REVIEW_STATES = ("pending", "approved", "rejected", "annotated")

_TRAILING_PUNCT = string.punctuation


class StoreError(Exception):
    """Base class for store failures."""


class SchemaMismatchError(StoreError):
    """Workspace meta.json declares an unsupported schema version."""


class MalformedRecordError(StoreError):
    def __init__(self, file: str, line: int, field_name: str, message: str):
        self.file = file
        self.line = line
        self.field = field_name
        super().__init__(f"{file}:{line}: field '{field_name}': {message}")


class InvariantViolationError(StoreError):
    """Raised by load when records violate type invariants; carries the first 20."""

    def __init__(self, violations: list[str]):
        self.violations = violations[:20]
        listing = "\n  ".join(self.violations)
        super().__init__(f"{len(violations)} invariant violation(s), first 20:\n  {listing}")


class UnknownConceptError(StoreError):
    """An operation referenced a concept id not present in the store."""


def utc_now_iso() -> str:
    """Current UTC time as an RFC 3339 string."""
    return datetime.now(timezone.utc).isoformat()


def normalize_name(name: str) -> str:
    """Canonical matching form of a concept name.

    Unicode NFC, lowercase, trimmed, internal whitespace collapsed to single
    spaces, trailing punctuation stripped. Deterministic by construction.
    """
    s = unicodedata.normalize("NFC", name)
    s = " ".join(s.lower().split())
    return s.rstrip(_TRAILING_PUNCT).rstrip()


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Concept:
    id: str
    name: str
    normalized_name: str
    level: int
    source: str = "openalex"

    @classmethod
    def make(cls, id: str, name: str, level: int, source: str = "openalex") -> "Concept":
        return cls(id=id, name=name, normalized_name=normalize_name(name), level=level, source=source)


@dataclass(frozen=True)
class ConceptEdge:
    parent_id: str
    child_id: str
    relation: str = "is-a"
    provenance: str = "openalex"
    validated: bool = False

    def key(self) -> tuple[str, str]:
        return (self.parent_id, self.child_id)


@dataclass(frozen=True)
class Work:
    id: str
    title: str
    abstract_text: str
    publication_date: str
    authors: tuple[str, ...]
    concept_ids: frozenset[str]


@dataclass(frozen=True)
class InnovationAnnotation:
    work_id: str
    concept_id: str
    annotator: str
    note: Optional[str] = None


@dataclass(frozen=True)
class ConceptPathRecord:
    """Persisted form of an extracted root-to-leaf path."""

    work_id: str
    nodes: tuple[str, ...]
    start_level: int
    end_level: int
    key: str


@dataclass(frozen=True)
class ReviewItem:
    id: str
    kind: str
    work_id: str
    payload: dict
    state: str = "pending"
    created_at: str = ""
    decided_at: Optional[str] = None


@dataclass(frozen=True)
class ReviewJournalEntry:
    item_id: str
    timestamp: str
    actor: str
    action: str
    payload: dict = field(default_factory=dict)


@dataclass
class RejectionReport:
    """Tally of edges dropped by :func:`clean_hierarchy`."""

    self_loop: int = 0
    intra_level: int = 0

    @property
    def total(self) -> int:
        return self.self_loop + self.intra_level

    def as_dict(self) -> dict:
        return {"self_loop": self.self_loop, "intra_level": self.intra_level, "total": self.total}


# ---------------------------------------------------------------------------
# Hierarchy cleaning
# ---------------------------------------------------------------------------


def clean_hierarchy(
    raw_edges: Iterable[ConceptEdge], concepts: dict[str, Concept]
) -> tuple[list[ConceptEdge], RejectionReport]:
    """Reduce raw concept associations to a strict level-ordered hierarchy.

    Drops self-loops and intra-level links; orients every surviving edge from
    the lower-level endpoint to the higher-level endpoint regardless of raw
    direction. The result is deduplicated and canonically ordered, and is a
    DAG by construction (levels strictly increase along every edge).

    Raises :class:`UnknownConceptError` naming the first edge whose endpoint
    does not resolve.
    """
    report = RejectionReport()
    seen: set[tuple[str, str]] = set()
    cleaned: list[ConceptEdge] = []
    for edge in raw_edges:
        for endpoint in (edge.parent_id, edge.child_id):
            if endpoint not in concepts:
                raise UnknownConceptError(
                    f"edge ({edge.parent_id} -> {edge.child_id}) references unknown concept '{endpoint}'"
                )
        if edge.parent_id == edge.child_id:
            report.self_loop += 1
            continue
        lp = concepts[edge.parent_id].level
        lc = concepts[edge.child_id].level
        if lp == lc:
            report.intra_level += 1
            continue
        if lp < lc:
            oriented = edge
        else:
            oriented = replace(edge, parent_id=edge.child_id, child_id=edge.parent_id)
        if oriented.key() in seen:
            continue
        seen.add(oriented.key())
        cleaned.append(oriented)
    cleaned.sort(key=ConceptEdge.key)
    return cleaned, report


def assert_acyclic(edges: Iterable[ConceptEdge]) -> None:
    """Independent cycle check over an edge set (Kahn peeling).

    Level ordering already implies acyclicity for cleaned sets; this asserts
    it without relying on levels.
    """
    children: dict[str, list[str]] = {}
    indeg: dict[str, int] = {}
    for e in edges:
        children.setdefault(e.parent_id, []).append(e.child_id)
        indeg.setdefault(e.parent_id, indeg.get(e.parent_id, 0))
        indeg[e.child_id] = indeg.get(e.child_id, 0) + 1
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for c in children.get(node, ()):
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen != len(indeg):
        raise StoreError("cycle detected in cleaned edge set")


# ---------------------------------------------------------------------------
# Subgraph view
# ---------------------------------------------------------------------------


class SubgraphView:
    """Induced subgraph over a concept id set: cleaned edges with both endpoints inside."""

    def __init__(self, concepts: dict[str, Concept], edges: list[ConceptEdge]):
        self.concepts = concepts
        self.edges = edges
        self._out: dict[str, list[str]] = {cid: [] for cid in concepts}
        self._in: dict[str, list[str]] = {cid: [] for cid in concepts}
        for e in edges:
            self._out[e.parent_id].append(e.child_id)
            self._in[e.child_id].append(e.parent_id)
        for adj in (self._out, self._in):
            for lst in adj.values():
                lst.sort()

    def in_degree(self, concept_id: str) -> int:
        return len(self._in[concept_id])

    def out_degree(self, concept_id: str) -> int:
        return len(self._out[concept_id])

    def children(self, concept_id: str) -> list[str]:
        return self._out[concept_id]

    def parents(self, concept_id: str) -> list[str]:
        return self._in[concept_id]

    def sources(self) -> list[str]:
        return sorted(c for c in self.concepts if self.in_degree(c) == 0)

    def sinks(self) -> list[str]:
        return sorted(c for c in self.concepts if self.out_degree(c) == 0)


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


class Store:
    """In-memory tables with exclusive-write locking and JSONL persistence."""

    def __init__(self) -> None:
        self.concepts: dict[str, Concept] = {}
        self.edges: list[ConceptEdge] = []
        self.works: dict[str, Work] = {}
        self.paths: list[ConceptPathRecord] = []
        self.annotations: list[InnovationAnnotation] = []
        self.review_items: dict[str, ReviewItem] = {}
        self.review_journal: list[ReviewJournalEntry] = []
        self.pipeline_states: dict[str, dict] = {}
        self.meta: dict = {"schema_version": SCHEMA_VERSION, "created_at": utc_now_iso()}
        self._lock = threading.RLock()
        self._cleaned_cache: Optional[tuple[list[ConceptEdge], RejectionReport]] = None

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    # -- mutation -----------------------------------------------------------

    def add_concept(self, concept: Concept) -> None:
        with self._lock:
            self.concepts[concept.id] = concept
            self._cleaned_cache = None

    def add_edge(self, edge: ConceptEdge) -> None:
        with self._lock:
            self.edges.append(edge)
            self._cleaned_cache = None

    def add_work(self, work: Work) -> None:
        with self._lock:
            self.works[work.id] = work

    def add_annotation(self, ann: InnovationAnnotation) -> None:
        with self._lock:
            self.annotations.append(ann)

    def add_path(self, path: ConceptPathRecord) -> None:
        with self._lock:
            self.paths.append(path)

    def replace_paths(self, paths: Iterable[ConceptPathRecord]) -> None:
        with self._lock:
            self.paths = list(paths)

    def add_review_item(self, item: ReviewItem) -> None:
        with self._lock:
            self.review_items[item.id] = item

    def append_journal(self, entry: ReviewJournalEntry) -> None:
        # Single-writer append-only; item must exist.
        with self._lock:
            if entry.item_id not in self.review_items:
                raise StoreError(f"journal entry references unknown review item '{entry.item_id}'")
            self.review_journal.append(entry)

    def set_pipeline_state(self, work_id: str, state: dict) -> None:
        with self._lock:
            self.pipeline_states[work_id] = state

    def delete_work(self, work_id: str) -> None:
        """Remove a work and cascade its annotations and paths."""
        with self._lock:
            self.works.pop(work_id, None)
            self.annotations = [a for a in self.annotations if a.work_id != work_id]
            self.paths = [p for p in self.paths if p.work_id != work_id]
            self.pipeline_states.pop(work_id, None)

    def replace_edges(self, edges: Iterable[ConceptEdge]) -> None:
        with self._lock:
            self.edges = list(edges)
            self._cleaned_cache = None

    # -- queries ------------------------------------------------------------

    def cleaned_edges(self) -> list[ConceptEdge]:
        """The cleaned view of the edge table (cached until the table changes)."""
        with self._lock:
            if self._cleaned_cache is None:
                self._cleaned_cache = clean_hierarchy(self.edges, self.concepts)
            return self._cleaned_cache[0]

    def concepts_by_normalized_name(self) -> dict[str, Concept]:
        index: dict[str, Concept] = {}
        for c in self.concepts.values():
            index.setdefault(c.normalized_name, c)
        return index

    def induced_subgraph(self, concept_ids: Iterable[str]) -> SubgraphView:
        ids = set(concept_ids)
        unknown = ids - self.concepts.keys()
        if unknown:
            raise UnknownConceptError(f"unknown concept ids: {sorted(unknown)[:5]}")
        edges = [e for e in self.cleaned_edges() if e.parent_id in ids and e.child_id in ids]
        return SubgraphView({cid: self.concepts[cid] for cid in ids}, edges)

    def annotations_for_work(self, work_id: str) -> list[InnovationAnnotation]:
        return [a for a in self.annotations if a.work_id == work_id]

    def snapshot(self) -> "Store":
        """Immutable-use copy for concurrent readers.

        Tables are shallow-copied; records themselves are frozen dataclasses,
        so a snapshot never observes later mutations.
        """
        with self._lock:
            snap = Store.__new__(Store)
            snap.concepts = dict(self.concepts)
            snap.edges = list(self.edges)
            snap.works = dict(self.works)
            snap.paths = list(self.paths)
            snap.annotations = list(self.annotations)
            snap.review_items = dict(self.review_items)
            snap.review_journal = list(self.review_journal)
            snap.pipeline_states = {k: dict(v) for k, v in self.pipeline_states.items()}
            snap.meta = dict(self.meta)
            snap._lock = threading.RLock()
            snap._cleaned_cache = self._cleaned_cache
            return snap


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _record_to_json(obj: Any) -> str:
    d = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, frozenset):
            v = sorted(v)
        elif isinstance(v, tuple):
            v = list(v)
        d[f.name] = v
    return json.dumps(d, ensure_ascii=False, separators=(", ", ": "))


def _require(rec: dict, name: str, file: str, line: int) -> Any:
    if name not in rec:
        raise MalformedRecordError(file, line, name, "missing")
    return rec[name]


def _load_jsonl(path: str) -> list[tuple[int, dict]]:
    out = []
    if not os.path.exists(path):
        return out
    with open(path, encoding="utf-8") as fh:
        for i, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(os.path.basename(path), i, "<json>", str(exc)) from exc
            if not isinstance(rec, dict):
                raise MalformedRecordError(os.path.basename(path), i, "<json>", "not an object")
            out.append((i, rec))
    return out


def save_workspace(store: Store, path: str) -> None:
    """Write every table as canonical JSONL; save∘load is identity."""
    os.makedirs(path, exist_ok=True)
    with store.lock:
        tables: dict[str, list[Any]] = {
            "concepts": sorted(store.concepts.values(), key=lambda c: c.id),
            "edges": sorted(store.edges, key=ConceptEdge.key),
            "works": sorted(store.works.values(), key=lambda w: w.id),
            "paths": sorted(store.paths, key=lambda p: (p.work_id, p.key)),
            "annotations": sorted(
                store.annotations, key=lambda a: (a.work_id, a.concept_id, a.annotator)
            ),
            "review_items": sorted(store.review_items.values(), key=lambda r: (r.created_at, r.id)),
            # Journal is append-only: persisted in arrival order, never sorted.
            "review_journal": list(store.review_journal),
        }
        for table, filename in WORKSPACE_FILES.items():
            if table == "pipeline_states":
                continue
            with open(os.path.join(path, filename), "w", encoding="utf-8") as fh:
                for rec in tables[table]:
                    fh.write(_record_to_json(rec) + "\n")
        with open(os.path.join(path, WORKSPACE_FILES["pipeline_states"]), "w", encoding="utf-8") as fh:
            for work_id in sorted(store.pipeline_states):
                rec = {"work_id": work_id, **store.pipeline_states[work_id]}
                fh.write(json.dumps(rec, ensure_ascii=False, separators=(", ", ": ")) + "\n")
        with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
            json.dump(store.meta, fh, ensure_ascii=False, indent=2)
            fh.write("\n")


def load_workspace(path: str) -> Store:
    """Load a workspace directory, validating every type invariant.

    Missing table files are treated as empty (a fresh directory is an empty
    store). Malformed records raise :class:`MalformedRecordError` naming file,
    line, and field; invariant violations are collected and raised together,
    first 20 listed.
    """
    store = Store()
    meta_path = os.path.join(path, "meta.json")
    if os.path.exists(meta_path):
        with open(meta_path, encoding="utf-8") as fh:
            store.meta = json.load(fh)
        version = store.meta.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaMismatchError(f"workspace schema_version {version!r}, expected {SCHEMA_VERSION}")

    violations: list[str] = []

    fname = WORKSPACE_FILES["concepts"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        c = Concept(
            id=str(_require(rec, "id", fname, line)),
            name=str(_require(rec, "name", fname, line)),
            normalized_name=str(_require(rec, "normalized_name", fname, line)),
            level=_require(rec, "level", fname, line),
            source=str(_require(rec, "source", fname, line)),
        )
        if not isinstance(c.level, int) or c.level < 0:
            raise MalformedRecordError(fname, line, "level", f"expected integer >= 0, got {c.level!r}")
        if c.id in store.concepts:
            violations.append(f"concept '{c.id}': duplicate id")
        if c.normalized_name != normalize_name(c.name):
            violations.append(f"concept '{c.id}': normalized_name is not normalize_name(name)")
        if c.source not in CONCEPT_SOURCES:
            violations.append(f"concept '{c.id}': source '{c.source}' not in {CONCEPT_SOURCES}")
        store.concepts[c.id] = c

    fname = WORKSPACE_FILES["edges"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        e = ConceptEdge(
            parent_id=str(_require(rec, "parent_id", fname, line)),
            child_id=str(_require(rec, "child_id", fname, line)),
            relation=str(_require(rec, "relation", fname, line)),
            provenance=str(_require(rec, "provenance", fname, line)),
            validated=bool(_require(rec, "validated", fname, line)),
        )
        if e.relation != "is-a":
            violations.append(f"edge ({e.parent_id}->{e.child_id}): relation must be 'is-a'")
        if e.provenance not in EDGE_PROVENANCES:
            violations.append(f"edge ({e.parent_id}->{e.child_id}): provenance '{e.provenance}'")
        for endpoint in (e.parent_id, e.child_id):
            if endpoint not in store.concepts:
                violations.append(f"edge ({e.parent_id}->{e.child_id}): unknown concept '{endpoint}'")
        store.edges.append(e)

    fname = WORKSPACE_FILES["works"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        w = Work(
            id=str(_require(rec, "id", fname, line)),
            title=str(_require(rec, "title", fname, line)),
            abstract_text=str(_require(rec, "abstract_text", fname, line)),
            publication_date=str(_require(rec, "publication_date", fname, line)),
            authors=tuple(_require(rec, "authors", fname, line)),
            concept_ids=frozenset(_require(rec, "concept_ids", fname, line)),
        )
        if not w.abstract_text:
            violations.append(f"work '{w.id}': empty abstract_text")
        if not w.publication_date:
            violations.append(f"work '{w.id}': empty publication_date")
        if not w.authors:
            violations.append(f"work '{w.id}': empty authors")
        if not w.concept_ids:
            violations.append(f"work '{w.id}': empty concept_ids")
        store.works[w.id] = w

    fname = WORKSPACE_FILES["paths"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        p = ConceptPathRecord(
            work_id=str(_require(rec, "work_id", fname, line)),
            nodes=tuple(_require(rec, "nodes", fname, line)),
            start_level=int(_require(rec, "start_level", fname, line)),
            end_level=int(_require(rec, "end_level", fname, line)),
            key=str(_require(rec, "key", fname, line)),
        )
        store.paths.append(p)

    fname = WORKSPACE_FILES["annotations"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        a = InnovationAnnotation(
            work_id=str(_require(rec, "work_id", fname, line)),
            concept_id=str(_require(rec, "concept_id", fname, line)),
            annotator=str(_require(rec, "annotator", fname, line)),
            note=rec.get("note"),
        )
        work = store.works.get(a.work_id)
        if work is None:
            violations.append(f"annotation ({a.work_id},{a.concept_id}): unknown work")
        elif a.concept_id not in work.concept_ids:
            violations.append(
                f"annotation ({a.work_id},{a.concept_id}): concept not in work's concept set"
            )
        store.annotations.append(a)

    fname = WORKSPACE_FILES["review_items"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        item = ReviewItem(
            id=str(_require(rec, "id", fname, line)),
            kind=str(_require(rec, "kind", fname, line)),
            work_id=str(_require(rec, "work_id", fname, line)),
            payload=_require(rec, "payload", fname, line),
            state=str(_require(rec, "state", fname, line)),
            created_at=str(_require(rec, "created_at", fname, line)),
            decided_at=rec.get("decided_at"),
        )
        if item.kind not in REVIEW_KINDS:
            violations.append(f"review item '{item.id}': kind '{item.kind}'")
        if item.state not in REVIEW_STATES:
            violations.append(f"review item '{item.id}': state '{item.state}'")
        store.review_items[item.id] = item

    fname = WORKSPACE_FILES["review_journal"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        entry = ReviewJournalEntry(
            item_id=str(_require(rec, "item_id", fname, line)),
            timestamp=str(_require(rec, "timestamp", fname, line)),
            actor=str(_require(rec, "actor", fname, line)),
            action=str(_require(rec, "action", fname, line)),
            payload=rec.get("payload", {}),
        )
        if entry.actor not in JOURNAL_ACTORS:
            violations.append(f"journal entry for '{entry.item_id}': actor '{entry.actor}'")
        if entry.action not in JOURNAL_ACTIONS:
            violations.append(f"journal entry for '{entry.item_id}': action '{entry.action}'")
        if entry.item_id not in store.review_items:
            violations.append(f"journal entry references unknown review item '{entry.item_id}'")
        store.review_journal.append(entry)

    fname = WORKSPACE_FILES["pipeline_states"]
    for line, rec in _load_jsonl(os.path.join(path, fname)):
        work_id = str(_require(rec, "work_id", fname, line))
        store.pipeline_states[work_id] = {k: v for k, v in rec.items() if k != "work_id"}

    if violations:
        raise InvariantViolationError(violations)
    return store
