"""Complete concept-path enumeration and structural statistics.

A complete path runs from an in-degree-0 concept to an out-degree-0 concept
inside a work's induced subgraph over the cleaned hierarchy. Enumeration is
defined set-theoretically (the set of maximal source-to-sink simple paths);
the implementation walks the DAG with memoized suffix enumeration, and output
order is canonical regardless of traversal.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .kgstore import ConceptEdge, ConceptPathRecord, Store, SubgraphView, Work

ConceptPath = ConceptPathRecord

PATH_KEY_SEP = ">"


def path_key(nodes: Iterable[str]) -> str:
    return PATH_KEY_SEP.join(nodes)


def enumerate_view(work_id: str, view: SubgraphView, include_singletons: bool = True) -> list[ConceptPath]:
    """All maximal source-to-sink paths of a subgraph view.

    Walks the DAG with memoized suffix enumeration; output is sorted
    lexicographically on the node-id sequence, so the result is independent
    of traversal strategy.
    """
    suffix_cache: dict[str, list[tuple[str, ...]]] = {}

    def suffixes(node: str) -> list[tuple[str, ...]]:
        cached = suffix_cache.get(node)
        if cached is not None:
            return cached
        children = view.children(node)
        if not children:
            result = [(node,)]
        else:
            result = [(node,) + tail for child in children for tail in suffixes(child)]
        suffix_cache[node] = result
        return result

    paths: list[ConceptPath] = []
    for source in view.sources():
        for nodes in suffixes(source):
            if len(nodes) == 1 and not include_singletons:
                continue
            paths.append(
                ConceptPath(
                    work_id=work_id,
                    nodes=nodes,
                    start_level=view.concepts[nodes[0]].level,
                    end_level=view.concepts[nodes[-1]].level,
                    key=path_key(nodes),
                )
            )
    paths.sort(key=lambda p: p.nodes)
    return paths


def enumerate_paths(work: Work, store: Store, include_singletons: bool = True) -> list[ConceptPath]:
    """All maximal source-to-sink paths of the work's induced concept subgraph.

    Singleton paths (an isolated tagged concept, both source and sink) count
    as length 1 and are included unless ``include_singletons`` is False.
    """
    return enumerate_view(work.id, store.induced_subgraph(work.concept_ids), include_singletons)


def validate_path(path: ConceptPath, view: SubgraphView) -> list[str]:
    """Check every path invariant against the view; returns violation messages.

    Kept independent of the enumerator on purpose: it re-derives degrees and
    edge membership from the view rather than trusting enumeration output.
    """
    problems: list[str] = []
    if len(path.nodes) < 1:
        return ["empty node list"]
    edge_set = {(e.parent_id, e.child_id) for e in view.edges}
    for a, b in zip(path.nodes, path.nodes[1:]):
        if (a, b) not in edge_set:
            problems.append(f"consecutive nodes ({a},{b}) not joined by a cleaned edge")
        elif view.concepts[a].level >= view.concepts[b].level:
            problems.append(f"levels not strictly increasing at ({a},{b})")
    if view.in_degree(path.nodes[0]) != 0:
        problems.append(f"first node {path.nodes[0]} has nonzero in-degree")
    if view.out_degree(path.nodes[-1]) != 0:
        problems.append(f"last node {path.nodes[-1]} has nonzero out-degree")
    if path.start_level != view.concepts[path.nodes[0]].level:
        problems.append("start_level mismatch")
    if path.end_level != view.concepts[path.nodes[-1]].level:
        problems.append("end_level mismatch")
    if path.key != path_key(path.nodes):
        problems.append("key mismatch")
    return problems


def extract_all(store: Store, include_singletons: bool = True) -> list[ConceptPath]:
    """Enumerate paths for every work, merged deterministically by work id."""
    paths: list[ConceptPath] = []
    for work_id in sorted(store.works):
        paths.extend(enumerate_paths(store.works[work_id], store, include_singletons))
    return paths


# ---------------------------------------------------------------------------
# Structural statistics (exact rational shares, rendered to float at the edge)
# ---------------------------------------------------------------------------


@dataclass
class LengthDistribution:
    histogram: dict[int, int]
    share_len_2_3: Optional[Fraction]

    @property
    def total(self) -> int:
        return sum(self.histogram.values())


@dataclass
class LevelSpanMatrix:
    counts: dict[tuple[int, int], int]  # (start_level, end_level) -> paths
    share_levels_0_3: Optional[Fraction]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class EdgeGapStats:
    histogram: dict[int, int]  # level(child) - level(parent) -> edges
    share_gap_le_2: Optional[Fraction]
    share_touching_levels_0_2: Optional[Fraction]


def path_length_distribution(paths: Iterable[ConceptPath]) -> LengthDistribution:
    """Histogram of node counts plus the share of length-2..3 paths."""
    hist: dict[int, int] = {}
    for p in paths:
        hist[len(p.nodes)] = hist.get(len(p.nodes), 0) + 1
    total = sum(hist.values())
    if total == 0:
        return LengthDistribution({}, None)
    short = hist.get(2, 0) + hist.get(3, 0)
    return LengthDistribution(hist, Fraction(short, total))


def level_span_matrix(paths: Iterable[ConceptPath]) -> LevelSpanMatrix:
    """count[start_level][end_level] plus the share spanning within levels 0..3."""
    counts: dict[tuple[int, int], int] = {}
    within = 0
    total = 0
    for p in paths:
        span = (p.start_level, p.end_level)
        counts[span] = counts.get(span, 0) + 1
        total += 1
        if 0 <= p.start_level <= 3 and 0 <= p.end_level <= 3:
            within += 1
    if total == 0:
        return LevelSpanMatrix({}, None)
    return LevelSpanMatrix(counts, Fraction(within, total))


def edge_level_gap_stats(cleaned_edges: Iterable[ConceptEdge], store: Store) -> EdgeGapStats:
    """Level-gap histogram over cleaned edges.

    Gaps are level(child) - level(parent), all >= 1 on a cleaned set. An edge
    "touches" levels 0-2 when either endpoint sits at level 0, 1, or 2.
    """
    hist: dict[int, int] = {}
    le2 = 0
    touching = 0
    total = 0
    for e in cleaned_edges:
        lp = store.concepts[e.parent_id].level
        lc = store.concepts[e.child_id].level
        gap = lc - lp
        hist[gap] = hist.get(gap, 0) + 1
        total += 1
        if gap <= 2:
            le2 += 1
        if lp <= 2 or lc <= 2:
            touching += 1
    if total == 0:
        return EdgeGapStats({}, None, None)
    return EdgeGapStats(hist, Fraction(le2, total), Fraction(touching, total))
