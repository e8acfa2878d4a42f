"""Fixture corpus, hand-derived gold data, and mock backend builders.

The 10-work corpus rides a small two-field taxonomy. Gold paths were
enumerated by hand from each work's induced subgraph and are frozen here;
nothing in this module calls the production enumerator.
"""

from __future__ import annotations

import json
import random
import re
import threading

from conceptpaths.evalharness import GoldData
from conceptpaths.kgstore import Concept, ConceptEdge, InnovationAnnotation, Store, Work
from conceptpaths.pipeline.backends import BackendRequest, CallbackBackend
from conceptpaths.pipeline.grammars import (
    STAGE_PAIRS,
    STAGE_REFINE,
    STAGE_RELATIONS,
    STAGE_SEGMENT,
    render_segments,
)

CONCEPTS = [
    ("P", "Physics", 0),
    ("CS", "Computer science", 0),
    ("B", "Biology", 0),
    ("STAT", "Statistics", 0),
    ("PP", "Particle physics", 1),
    ("ML", "Machine learning", 1),
    ("GEN", "Genetics", 1),
    ("INF", "Statistical inference", 1),
    ("NEU", "Neutrino oscillation", 2),
    ("DL", "Deep learning", 2),
    ("GENO", "Genomics", 2),
    ("SOL", "Solar neutrino", 3),
    ("TRA", "Transformer models", 3),
]

EDGES = [
    ("P", "PP"),
    ("PP", "NEU"),
    ("P", "NEU"),
    ("NEU", "SOL"),
    ("CS", "ML"),
    ("ML", "DL"),
    ("DL", "TRA"),
    ("ML", "TRA"),
    ("B", "GEN"),
    ("GEN", "GENO"),
    ("STAT", "INF"),
]

WORK_TAGS = {
    "w01": {"P", "PP", "NEU"},
    "w02": {"CS", "ML", "DL"},
    "w03": {"B", "GEN", "GENO"},
    "w04": {"P", "PP"},
    "w05": {"ML", "DL", "TRA"},
    "w06": {"P", "NEU", "SOL"},
    "w07": {"CS", "ML", "STAT", "INF"},
    "w08": {"B", "GEN"},
    "w09": {"P", "CS", "ML", "DL", "TRA"},
    "w10": {"GEN", "GENO"},
}

# Hand enumeration of every work's maximal source-to-sink paths.
HAND_GOLD_PATHS: dict[str, set[tuple[str, ...]]] = {
    "w01": {("P", "PP", "NEU"), ("P", "NEU")},
    "w02": {("CS", "ML", "DL")},
    "w03": {("B", "GEN", "GENO")},
    "w04": {("P", "PP")},
    "w05": {("ML", "DL", "TRA"), ("ML", "TRA")},
    "w06": {("P", "NEU", "SOL")},
    "w07": {("CS", "ML"), ("STAT", "INF")},
    "w08": {("B", "GEN")},
    "w09": {("CS", "ML", "DL", "TRA"), ("CS", "ML", "TRA"), ("P",)},
    "w10": {("GEN", "GENO")},
}

# Pairs the gold-scripted mock "extracts" per work; they cover every tag.
WORK_PAIRS: dict[str, list[tuple[str, str]]] = {
    "w01": [("P", "PP"), ("PP", "NEU"), ("P", "NEU")],
    "w02": [("CS", "ML"), ("ML", "DL")],
    "w03": [("B", "GEN"), ("GEN", "GENO")],
    "w04": [("P", "PP")],
    "w05": [("ML", "DL"), ("DL", "TRA"), ("ML", "TRA")],
    "w06": [("P", "NEU"), ("NEU", "SOL")],
    "w07": [("CS", "ML"), ("STAT", "INF")],
    "w08": [("B", "GEN")],
    "w09": [("CS", "ML"), ("ML", "DL"), ("DL", "TRA"), ("ML", "TRA"), ("P", "TRA")],
    "w10": [("GEN", "GENO")],
}

ANNOTATIONS = [("w01", "NEU"), ("w05", "TRA"), ("w09", "P")]

_NAMES = {cid: name for cid, name, _ in CONCEPTS}


def segments_for(work_id: str) -> dict[str, str]:
    return {
        "related_research": f"[work:{work_id}][seg:related_research] Prior studies are reviewed.",
        "research_methods": f"[work:{work_id}][seg:research_methods] The applied methods are described.",
        "conclusions": f"[work:{work_id}][seg:conclusions] The findings are summarized.",
    }


def abstract_for(work_id: str) -> str:
    seg = segments_for(work_id)
    return " ".join(seg.values())


def fixture_store(with_annotations: bool = True) -> Store:
    store = Store()
    for cid, name, level in CONCEPTS:
        store.add_concept(Concept.make(cid, name, level))
    for parent, child in EDGES:
        store.add_edge(ConceptEdge(parent_id=parent, child_id=child, validated=True))
    for work_id, tags in WORK_TAGS.items():
        store.add_work(
            Work(
                id=work_id,
                title=f"Fixture work {work_id}",
                abstract_text=abstract_for(work_id),
                publication_date="2021-06-01",
                authors=(f"Author {work_id}",),
                concept_ids=frozenset(tags),
            )
        )
    if with_annotations:
        for work_id, concept_id in ANNOTATIONS:
            store.add_annotation(InnovationAnnotation(work_id, concept_id, "expert1"))
    return store


def fixture_gold() -> GoldData:
    return GoldData(
        concepts={wid: set(tags) for wid, tags in WORK_TAGS.items()},
        paths=dict(HAND_GOLD_PATHS),
    )


def gold_triplets(work_id: str) -> list[tuple[str, str]]:
    out = set()
    for nodes in HAND_GOLD_PATHS[work_id]:
        out.update(zip(nodes, nodes[1:]))
    return sorted(out)


def build_gold_script(
    include_stage4: bool = True,
    inject_oov: float = 0.0,
    seed: int = 0,
) -> tuple[list[dict], int]:
    """Script lines for the ordered mock, works in sorted id order.

    ``inject_oov`` salts each work's relation response with that fraction of
    out-of-vocabulary triplets (at least one when positive). Returns the
    script plus the number of injected triplets.
    """
    rng = random.Random(seed)
    lines: list[dict] = []
    injected_total = 0
    for work_id in sorted(WORK_TAGS):
        lines.append({"stage": STAGE_SEGMENT, "response": render_segments(segments_for(work_id))})
        pair_names = [[_NAMES[a], _NAMES[b]] for a, b in WORK_PAIRS[work_id]]
        lines.append({"stage": STAGE_PAIRS, "response": f"<concept_pairs>{json.dumps(pair_names)}</concept_pairs>"})
        for _ in range(2):
            lines.append({"stage": STAGE_PAIRS, "response": "<concept_pairs>[]</concept_pairs>"})
        triplets = [[_NAMES[p], "is-a", _NAMES[c]] for p, c in gold_triplets(work_id)]
        if inject_oov > 0:
            count = max(1, round(inject_oov * len(triplets)))
            for k in range(count):
                victim = rng.choice(triplets)[2] if triplets else _NAMES["P"]
                triplets.append([f"Phantom entity {work_id}-{k}", "is-a", victim])
            injected_total += count
        lines.append(
            {"stage": STAGE_RELATIONS, "response": f"<concept_relations>{json.dumps(triplets)}</concept_relations>"}
        )
        if include_stage4:
            for _ in WORK_PAIRS[work_id]:
                lines.append({"stage": STAGE_REFINE, "response": '["", "keep"]'})
    return lines, injected_total


# ---------------------------------------------------------------------------
# Random corpus + marker-driven callback backend (closure fuzz)
# ---------------------------------------------------------------------------


class FuzzCorpus:
    """Random taxonomy and works with a callback backend that injects OOV noise."""

    def __init__(self, seed: int, n_works: int = 50, oov_rate: float = 0.2):
        rng = random.Random(seed)
        self.store = Store()
        n_concepts = 30
        for i in range(n_concepts):
            self.store.add_concept(Concept.make(f"f{i}", f"Fuzz concept {i}", rng.randint(0, 3)))
        ids = list(self.store.concepts)
        for a in ids:
            for b in ids:
                la, lb = self.store.concepts[a].level, self.store.concepts[b].level
                if la < lb and rng.random() < 0.12:
                    self.store.add_edge(ConceptEdge(parent_id=a, child_id=b, validated=True))
        self.works: list[Work] = []
        attempts = 0
        while len(self.works) < n_works and attempts < n_works * 20:
            attempts += 1
            tags = set(rng.sample(ids, rng.randint(3, 8)))
            view = self.store.induced_subgraph(tags)
            if not view.edges:
                continue
            work_id = f"fw{len(self.works):03d}"
            self.works.append(
                Work(
                    id=work_id,
                    title=f"Fuzz work {work_id}",
                    abstract_text=abstract_for(work_id),
                    publication_date="2022-01-01",
                    authors=("Fuzz Author",),
                    concept_ids=frozenset(tags),
                )
            )
            self.store.add_work(self.works[-1])
        self.oov_rate = oov_rate
        self.seed = seed
        self._injected_by_work: dict[str, int] = {}
        self._lock = threading.Lock()

    @property
    def injected_total(self) -> int:
        return sum(self._injected_by_work.values())

    def _work_id(self, text: str) -> str:
        match = re.search(r"\[work:([^\]]+)\]", text)
        assert match, f"no work marker in backend input: {text[:80]}"
        return match.group(1)

    def _induced_name_edges(self, work_id: str) -> list[tuple[str, str]]:
        work = self.store.works[work_id]
        view = self.store.induced_subgraph(work.concept_ids)
        return [
            (self.store.concepts[e.parent_id].name, self.store.concepts[e.child_id].name)
            for e in view.edges
        ]

    def backend(self) -> CallbackBackend:
        def respond(request: BackendRequest) -> str:
            if request.stage == STAGE_SEGMENT:
                work_id = self._work_id(request.input_text)
                return render_segments(segments_for(work_id))
            if request.stage == STAGE_PAIRS:
                if "[seg:related_research]" not in request.input_text:
                    return "<concept_pairs>[]</concept_pairs>"
                work_id = self._work_id(request.input_text)
                pairs = [[a, b] for a, b in self._induced_name_edges(work_id)]
                return f"<concept_pairs>{json.dumps(pairs)}</concept_pairs>"
            if request.stage == STAGE_RELATIONS:
                work_id = self._work_id(request.input_text)
                triplets = [[a, "is-a", b] for a, b in self._induced_name_edges(work_id)]
                # Per-work rng keeps the injected noise identical whatever the
                # thread interleaving, so parallel runs stay comparable.
                rng = random.Random((self.seed, work_id).__repr__())
                count = max(1, round(self.oov_rate * len(triplets)))
                for k in range(count):
                    anchor = rng.choice(triplets)[2]
                    triplets.append([f"OOV hallucination {work_id}-{k}", "is-a", anchor])
                with self._lock:
                    self._injected_by_work[work_id] = count
                return f"<concept_relations>{json.dumps(triplets)}</concept_relations>"
            if request.stage == STAGE_REFINE:
                return '["", "keep"]'
            raise AssertionError(f"unexpected stage {request.stage}")

        return CallbackBackend(respond)


def adversarial_chain_store(seed: int) -> tuple[Store, Work]:
    """Root -> (hidden middle) -> leaf store for the always-propose mock."""
    rng = random.Random(seed)
    top = rng.randint(2, 4)
    store = Store()
    store.add_concept(Concept.make("root", "Alpha root", 0))
    store.add_concept(Concept.make("mid", "Mid concept", 1))
    store.add_concept(Concept.make("leaf", "Beta leaf", top))
    work = Work(
        id=f"adv{seed}",
        title="Adversarial work",
        abstract_text=abstract_for(f"adv{seed}"),
        publication_date="2022-02-02",
        authors=("A",),
        concept_ids=frozenset({"root", "leaf"}),
    )
    store.add_work(work)
    return store, work


def adversarial_backend() -> CallbackBackend:
    """Always proposes a change: alternates adding and deleting the middle concept."""
    counter = {"refine": 0}

    def respond(request: BackendRequest) -> str:
        if request.stage == STAGE_SEGMENT:
            work_id = re.search(r"\[work:([^\]]+)\]", request.input_text).group(1)
            return render_segments(segments_for(work_id))
        if request.stage == STAGE_PAIRS:
            if "[seg:related_research]" not in request.input_text:
                return "<concept_pairs>[]</concept_pairs>"
            return '<concept_pairs>[["Alpha root", "Beta leaf"]]</concept_pairs>'
        if request.stage == STAGE_RELATIONS:
            return '<concept_relations>[["Alpha root", "is-a", "Beta leaf"]]</concept_relations>'
        if request.stage == STAGE_REFINE:
            counter["refine"] += 1
            action = "add" if counter["refine"] % 2 == 1 else "delete"
            return json.dumps(["Mid concept", action])
        raise AssertionError(request.stage)

    return CallbackBackend(respond)
