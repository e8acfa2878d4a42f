"""Shared builders and independent oracles used across the test suite."""

from __future__ import annotations

import random

from conceptpaths.kgstore import Concept, ConceptEdge, Store, SubgraphView, Work


def build_store(concepts: list[tuple[str, str, int]], edges: list[tuple[str, str]] = ()) -> Store:
    """Store from (id, name, level) concept rows and (parent, child) edge rows."""
    store = Store()
    for cid, name, level in concepts:
        store.add_concept(Concept.make(cid, name, level))
    for parent, child in edges:
        store.add_edge(ConceptEdge(parent_id=parent, child_id=child))
    return store


def make_work(work_id: str, concept_ids, abstract: str = "An abstract.") -> Work:
    return Work(
        id=work_id,
        title=f"Title {work_id}",
        abstract_text=abstract,
        publication_date="2020-01-01",
        authors=("A. Author",),
        concept_ids=frozenset(concept_ids),
    )


def random_level_dag(rng: random.Random, max_nodes: int = 12) -> Store:
    """Random DAG with levels assigned consistently (edges only go level-up)."""
    n = rng.randint(1, max_nodes)
    concepts = [(f"c{i}", f"Concept {i}", rng.randint(0, 4)) for i in range(n)]
    store = build_store(concepts)
    ids = {cid: level for cid, _, level in concepts}
    for i, a in enumerate(ids):
        for b in list(ids)[i + 1 :]:
            if ids[a] == ids[b]:
                continue
            if rng.random() < 0.3:
                lo, hi = (a, b) if ids[a] < ids[b] else (b, a)
                store.add_edge(ConceptEdge(parent_id=lo, child_id=hi))
    return store


def brute_force_source_sink_paths(view: SubgraphView) -> set[tuple[str, ...]]:
    """Exhaustive DFS oracle: every simple path from an in-degree-0 node to an
    out-degree-0 node. Independent of the production enumerator."""
    sources = [c for c in view.concepts if view.in_degree(c) == 0]
    sinks = {c for c in view.concepts if view.out_degree(c) == 0}
    found: set[tuple[str, ...]] = set()

    def walk(node: str, trail: tuple[str, ...]) -> None:
        if node in sinks:
            found.add(trail)
        for child in view.children(node):
            if child not in trail:
                walk(child, trail + (child,))

    for s in sources:
        walk(s, (s,))
    return found
