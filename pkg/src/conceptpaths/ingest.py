"""OpenAlex ingestion: fetch works, rebuild abstracts, apply the completeness filter.

Works are pulled from the OpenAlex ``/works`` endpoint with cursor pagination
and an on-disk checkpoint after every page, so a long institutional crawl can
resume across process restarts. The same records can instead be read from a
local JSONL dump (dataset-dump mode), which bypasses HTTP entirely.

Abstracts arrive as inverted indexes (token -> positions) and are rebuilt into
plain text. The completeness filter admits only works carrying an abstract, a
publication date, author metadata, and concept tags.
"""

from __future__ import annotations

import calendar
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Iterator, Optional, Protocol

import requests

from .kgstore import Concept, Work, normalize_name

logger = logging.getLogger(__name__)

OPENALEX_BASE = "https://api.openalex.org"
DEFAULT_RATE_LIMIT_PER_SEC = 8.0
MAX_RETRIES_429 = 6


class IngestError(Exception):
    pass


class NonRetryableHTTPError(IngestError):
    """Terminal HTTP failure; carries the cursor so the crawl can resume."""

    def __init__(self, status: int, url: str, cursor: Optional[str]):
        self.status = status
        self.url = url
        self.cursor = cursor
        super().__init__(f"HTTP {status} for {url} (resume cursor: {cursor!r})")


@dataclass(frozen=True)
class IngestQuery:
    institution: str
    date_from: str  # ISO month, e.g. "2001-01"
    date_to: str  # ISO month, e.g. "2025-09"
    page_size: int = 200
    polite_email: Optional[str] = None

    def __post_init__(self) -> None:
        if self.date_from > self.date_to:
            raise ValueError(f"date_from {self.date_from} > date_to {self.date_to}")
        if not 1 <= self.page_size <= 200:
            raise ValueError(f"page_size {self.page_size} outside 1..200")


@dataclass(frozen=True)
class ConceptTag:
    id: str
    display_name: str
    level: int
    score: float


@dataclass
class RawWork:
    id: str
    title: str
    abstract_inverted_index: Optional[dict[str, list[int]]]
    publication_date: Optional[str]
    authorships: list[str]
    concept_tags: list[ConceptTag]


@dataclass
class Rejection:
    work_id: str
    reason: str  # first missing field: abstract | date | authors | concepts


@dataclass
class IngestReport:
    pages: int = 0
    fetched: int = 0
    malformed: int = 0
    accepted: int = 0
    rejections: dict = field(default_factory=dict)

    def tally_rejection(self, reason: str) -> None:
        self.rejections[reason] = self.rejections.get(reason, 0) + 1


# ---------------------------------------------------------------------------
# Abstract reconstruction
# ---------------------------------------------------------------------------


def reconstruct_abstract(index: dict[str, list[int]]) -> str:
    """Rebuild abstract text from an inverted index.

    Tokens are placed at their integer positions and joined with single
    spaces; gaps between claimed positions collapse. A position claimed by
    two tokens is an error (the index is ill-formed).
    """
    placed: dict[int, str] = {}
    for token, positions in index.items():
        for pos in positions:
            if pos < 0:
                raise IngestError(f"negative position {pos} for token {token!r}")
            if pos in placed:
                raise IngestError(f"position {pos} claimed by both {placed[pos]!r} and {token!r}")
            placed[pos] = token
    return " ".join(placed[pos] for pos in sorted(placed))


def invert_abstract(text: str) -> dict[str, list[int]]:
    """Whitespace-tokenize text into an inverted index (test/fixture helper)."""
    index: dict[str, list[int]] = {}
    for pos, token in enumerate(text.split()):
        index.setdefault(token, []).append(pos)
    return index


# ---------------------------------------------------------------------------
# Completeness filter
# ---------------------------------------------------------------------------


def filter_complete(raw: RawWork, min_score: float = 0.0) -> Work | Rejection:
    """Admit a work only if all four completeness criteria hold.

    Returns the admitted :class:`Work` or a :class:`Rejection` naming the
    first missing field (checked in order: abstract, date, authors, concepts).
    Never mutates its input.
    """
    if raw.abstract_inverted_index:
        abstract = reconstruct_abstract(raw.abstract_inverted_index)
    else:
        abstract = ""
    if not abstract:
        return Rejection(raw.id, "abstract")
    if not raw.publication_date:
        return Rejection(raw.id, "date")
    if not raw.authorships:
        return Rejection(raw.id, "authors")
    tags = [t for t in raw.concept_tags if t.score >= min_score]
    if not tags:
        return Rejection(raw.id, "concepts")
    return Work(
        id=raw.id,
        title=raw.title,
        abstract_text=abstract,
        publication_date=raw.publication_date,
        authors=tuple(raw.authorships),
        concept_ids=frozenset(t.id for t in tags),
    )


def concepts_from_tags(raw_works: list[RawWork]) -> dict[str, Concept]:
    """Concept table induced by the tags of a batch of raw works."""
    concepts: dict[str, Concept] = {}
    for rw in raw_works:
        for tag in rw.concept_tags:
            if tag.id not in concepts:
                concepts[tag.id] = Concept(
                    id=tag.id,
                    name=tag.display_name,
                    normalized_name=normalize_name(tag.display_name),
                    level=tag.level,
                    source="openalex",
                )
    return concepts


# ---------------------------------------------------------------------------
# HTTP transport (live or cassette replay)
# ---------------------------------------------------------------------------


class Transport(Protocol):
    def get(self, url: str) -> tuple[int, dict]: ...


class RequestsTransport:
    def __init__(self, session: Optional[requests.Session] = None, timeout: float = 30.0):
        self.session = session or requests.Session()
        self.timeout = timeout

    def get(self, url: str) -> tuple[int, dict]:
        resp = self.session.get(url, timeout=self.timeout)
        try:
            body = resp.json()
        except ValueError:
            body = {}
        return resp.status_code, body


class CassetteTransport:
    """Replays a recorded fixture: an ordered JSON array of {request_url, status, body}."""

    def __init__(self, cassette_path: str):
        with open(cassette_path, encoding="utf-8") as fh:
            self.entries = json.load(fh)
        self.cursor = 0

    def get(self, url: str) -> tuple[int, dict]:
        if self.cursor >= len(self.entries):
            raise IngestError(f"cassette exhausted at request {self.cursor}: {url}")
        entry = self.entries[self.cursor]
        self.cursor += 1
        if entry["request_url"] != url:
            raise IngestError(
                f"cassette mismatch at request {self.cursor - 1}: expected "
                f"{entry['request_url']!r}, got {url!r}"
            )
        return entry["status"], entry["body"]


# ---------------------------------------------------------------------------
# Fetching
# ---------------------------------------------------------------------------


def _month_bounds(date_from: str, date_to: str) -> tuple[str, str]:
    y, m = (int(x) for x in date_to.split("-"))
    last = calendar.monthrange(y, m)[1]
    return f"{date_from}-01", f"{date_to}-{last:02d}"


def _page_url(query: IngestQuery, cursor: str) -> str:
    start, end = _month_bounds(query.date_from, query.date_to)
    filt = (
        f"institutions.id:{query.institution},"
        f"from_publication_date:{start},to_publication_date:{end}"
    )
    url = f"{OPENALEX_BASE}/works?filter={filt}&per-page={query.page_size}&cursor={cursor}"
    if query.polite_email:
        url += f"&mailto={query.polite_email}"
    return url


def parse_raw_work(obj: dict) -> RawWork:
    authorships = []
    for a in obj.get("authorships") or []:
        name = ((a or {}).get("author") or {}).get("display_name")
        if name:
            authorships.append(name)
    tags = []
    for c in obj.get("concepts") or []:
        if not c.get("id"):
            continue
        tags.append(
            ConceptTag(
                id=c["id"],
                display_name=c.get("display_name", ""),
                level=int(c.get("level", 0)),
                score=float(c.get("score", 0.0)),
            )
        )
    return RawWork(
        id=obj["id"],
        title=obj.get("display_name") or obj.get("title") or "",
        abstract_inverted_index=obj.get("abstract_inverted_index"),
        publication_date=obj.get("publication_date"),
        authorships=authorships,
        concept_tags=tags,
    )


class Checkpoint:
    """Cursor checkpoint persisted after each page."""

    def __init__(self, path: str):
        self.path = path

    def read(self) -> Optional[str]:
        if not os.path.exists(self.path):
            return None
        with open(self.path, encoding="utf-8") as fh:
            return json.load(fh).get("cursor")

    def write(self, cursor: Optional[str]) -> None:
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump({"cursor": cursor, "updated_at": time.time()}, fh)


def fetch_works(
    query: IngestQuery,
    transport: Optional[Transport] = None,
    checkpoint: Optional[Checkpoint] = None,
    resume: bool = False,
    rate_limit_per_sec: float = DEFAULT_RATE_LIMIT_PER_SEC,
    report: Optional[IngestReport] = None,
) -> Iterator[RawWork]:
    """Yield every work matching the query exactly once, in request order.

    429 responses back off exponentially (bounded) and resume; other error
    statuses raise :class:`NonRetryableHTTPError` carrying the cursor.
    Malformed work objects are skipped, logged, and counted in the report.
    """
    transport = transport or RequestsTransport()
    report = report if report is not None else IngestReport()
    cursor: Optional[str] = "*"
    if resume and checkpoint is not None:
        saved = checkpoint.read()
        if saved:
            cursor = saved
    min_interval = 1.0 / rate_limit_per_sec if rate_limit_per_sec > 0 else 0.0
    last_request = 0.0
    seen_ids: set[str] = set()

    while cursor:
        url = _page_url(query, cursor)
        backoff = 1.0
        for attempt in range(MAX_RETRIES_429 + 1):
            wait = min_interval - (time.monotonic() - last_request)
            if wait > 0:
                time.sleep(wait)
            last_request = time.monotonic()
            status, body = transport.get(url)
            if status == 429:
                if attempt == MAX_RETRIES_429:
                    raise NonRetryableHTTPError(status, url, cursor)
                logger.warning("429 from %s, backing off %.1fs", url, backoff)
                time.sleep(backoff)
                backoff = min(backoff * 2, 60.0)
                continue
            if status != 200:
                raise NonRetryableHTTPError(status, url, cursor)
            break
        report.pages += 1
        for obj in body.get("results", []):
            try:
                raw = parse_raw_work(obj)
            except (KeyError, TypeError, ValueError) as exc:
                logger.warning("skipping malformed work object: %s", exc)
                report.malformed += 1
                continue
            if raw.id in seen_ids:
                continue
            seen_ids.add(raw.id)
            report.fetched += 1
            yield raw
        cursor = (body.get("meta") or {}).get("next_cursor")
        if checkpoint is not None:
            checkpoint.write(cursor)


def load_dump(path: str) -> Iterator[RawWork]:
    """Dataset-dump mode: read raw work objects from local JSONL, no HTTP."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield parse_raw_work(json.loads(line))
