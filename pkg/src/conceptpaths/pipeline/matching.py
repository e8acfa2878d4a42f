"""Concept name resolution against the store and external knowledge bases.

Resolution order: exact normalized-name match in the store, then normalized
Levenshtein similarity >= 0.85 against store names, then external KB lookup
(labels and aliases act as a bridge back onto store concepts). Anything still
unresolved goes to the expert queue. External KBs never mint concepts
directly; vocabulary only grows through expert approval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from ..kgstore import Concept, Store, normalize_name

FUZZY_THRESHOLD = 0.85


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance, O(len(a)*len(b))."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        curr = [i]
        for j, cb in enumerate(b, start=1):
            curr.append(min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = curr
    return prev[-1]


def similarity(a: str, b: str) -> float:
    """Normalized Levenshtein similarity in [0, 1]; empty-vs-empty is 1."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


@dataclass(frozen=True)
class KBEntry:
    label: str
    aliases: tuple[str, ...] = ()
    external_id: str = ""


class KBClient(Protocol):
    def lookup(self, name: str) -> list[KBEntry]: ...


class StaticKBClient:
    """Dictionary-backed KB used in tests and offline runs.

    Accepts ``{label: [aliases...]}``; lookup returns entries whose label or
    any alias matches the query exactly (after normalization) or fuzzily.
    """

    def __init__(self, entries: dict[str, list[str]]):
        self.entries = [
            KBEntry(label=label, aliases=tuple(aliases), external_id=f"kb:{normalize_name(label)}")
            for label, aliases in entries.items()
        ]

    @classmethod
    def from_json(cls, path: str) -> "StaticKBClient":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def lookup(self, name: str) -> list[KBEntry]:
        norm = normalize_name(name)
        hits = []
        for entry in self.entries:
            names = (entry.label,) + entry.aliases
            normed = [normalize_name(n) for n in names]
            if norm in normed or any(similarity(norm, n) >= FUZZY_THRESHOLD for n in normed):
                hits.append(entry)
        return hits


@dataclass
class MatchResult:
    concept: Optional[Concept]
    method: str  # exact | fuzzy | kb | none
    score: float = 1.0
    near_misses: list[str] = field(default_factory=list)
    # A KB client kept failing (timeout etc.): the verdict is provisional and
    # the pair should stay pending for a later retry instead of going to the
    # expert.
    kb_failed: bool = False


class ConceptMatcher:
    """Resolves free-text concept names onto store concepts."""

    def __init__(
        self,
        store: Store,
        kb_clients: Iterable[KBClient] = (),
        threshold: float = FUZZY_THRESHOLD,
        kb_retries: int = 2,
    ):
        self.store = store
        self.kb_clients = list(kb_clients)
        self.threshold = threshold
        self.kb_retries = kb_retries

    def _store_exact(self, norm: str) -> Optional[Concept]:
        return self.store.concepts_by_normalized_name().get(norm)

    def _store_fuzzy(self, norm: str) -> tuple[Optional[Concept], float]:
        best: Optional[Concept] = None
        best_score = 0.0
        for concept in self.store.concepts.values():
            score = similarity(norm, concept.normalized_name)
            # Deterministic tie-break on id keeps matching reproducible.
            if score > best_score or (score == best_score and best and concept.id < best.id):
                best, best_score = concept, score
        if best is not None and best_score >= self.threshold:
            return best, best_score
        return None, best_score

    def _kb_lookup(self, client: KBClient, name: str) -> list[KBEntry]:
        last_exc: Optional[Exception] = None
        for _attempt in range(self.kb_retries + 1):
            try:
                return client.lookup(name)
            except Exception as exc:  # timeouts, connection drops
                last_exc = exc
        assert last_exc is not None
        raise last_exc

    def match(self, name: str) -> MatchResult:
        norm = normalize_name(name)
        exact = self._store_exact(norm)
        if exact is not None:
            return MatchResult(exact, "exact")
        fuzzy, score = self._store_fuzzy(norm)
        if fuzzy is not None:
            return MatchResult(fuzzy, "fuzzy", score)
        near = []
        kb_failed = False
        for client in self.kb_clients:
            try:
                entries = self._kb_lookup(client, name)
            except Exception:
                kb_failed = True
                continue
            for entry in entries:
                # KB labels/aliases bridge the query back onto the store.
                for candidate in (entry.label,) + entry.aliases:
                    cnorm = normalize_name(candidate)
                    hit = self._store_exact(cnorm)
                    if hit is None:
                        hit, _ = self._store_fuzzy(cnorm)
                    if hit is not None:
                        return MatchResult(hit, "kb", similarity(norm, cnorm))
                near.append(entry.label)
        return MatchResult(None, "none", 0.0, near_misses=near[:5], kb_failed=kb_failed)
