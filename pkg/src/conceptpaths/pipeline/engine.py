"""The four-stage constrained agent pipeline.

Stage 1 segments the abstract, stage 2 extracts and validates concept pairs
against the store and external KBs, stage 3 generates is-a triplets under a
hard vocabulary constraint (only stage-2 concepts survive; everything else is
counted as a hallucination and discarded), and stage 4 iteratively refines
the working hierarchy with add/delete/keep actions, at most five iterations.

Works run independently; each either completes, parks awaiting expert review,
or fails with its partial artifacts retained. All stage-4 actions and expert
decisions land in the review journal exactly once, in causal order.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Optional

from .. import review
from ..kgstore import (
    Concept,
    ConceptEdge,
    ReviewItem,
    Store,
    SubgraphView,
    Work,
    clean_hierarchy,
    assert_acyclic,
    normalize_name,
    utc_now_iso,
)
from ..paths import ConceptPath, enumerate_view
from .backends import Backend, BackendError, BackendRequest, DECODING_PARAMS
from .grammars import (
    SEGMENT_TAGS,
    STAGE_DIRECT,
    STAGE_PAIRS,
    STAGE_REFINE,
    STAGE_RELATIONS,
    STAGE_SEGMENT,
    StageParseError,
    parse_concept_list,
    parse_concept_pairs,
    parse_concept_relations,
    parse_refinement,
    parse_segments,
)
from .matching import ConceptMatcher, KBClient

RAW_ID_PREFIX = "raw:"

STATUS_COMPLETED = "completed"
STATUS_AWAITING_REVIEW = "awaiting_review"
STATUS_FAILED = "failed"
STATUS_READY = "ready"  # reviews resolved, waiting for a pipeline run to continue


class PipelineError(Exception):
    pass


def load_prompt(stage: str) -> str:
    return resources.files("conceptpaths.pipeline.prompts").joinpath(f"{stage}.txt").read_text("utf-8")


def raw_concept_id(name: str) -> str:
    return RAW_ID_PREFIX + normalize_name(name)


# ---------------------------------------------------------------------------
# Stage artifacts
# ---------------------------------------------------------------------------


@dataclass
class SegmentedAbstract:
    work_id: str
    related_research: str
    research_methods: str
    conclusions: str

    def segments(self) -> dict[str, str]:
        return {
            "related_research": self.related_research,
            "research_methods": self.research_methods,
            "conclusions": self.conclusions,
        }

    @classmethod
    def from_dict(cls, work_id: str, d: dict[str, str]) -> "SegmentedAbstract":
        return cls(work_id, d["related_research"], d["research_methods"], d["conclusions"])


@dataclass
class ConceptPair:
    domain: str
    specific_concept: str
    segment_origin: str
    validation_state: str = "pending"  # pending | kb_matched | expert_approved | rejected
    matched_concept_ids: Optional[tuple[str, str]] = None
    review_item_id: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "domain": self.domain,
            "specific_concept": self.specific_concept,
            "segment_origin": self.segment_origin,
            "validation_state": self.validation_state,
            "matched_concept_ids": list(self.matched_concept_ids) if self.matched_concept_ids else None,
            "review_item_id": self.review_item_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConceptPair":
        ids = d.get("matched_concept_ids")
        return cls(
            domain=d["domain"],
            specific_concept=d["specific_concept"],
            segment_origin=d["segment_origin"],
            validation_state=d["validation_state"],
            matched_concept_ids=tuple(ids) if ids else None,
            review_item_id=d.get("review_item_id"),
        )


@dataclass
class Triplet:
    parent_id: str
    child_id: str
    relation: str = "is-a"
    evidence_segment: str = ""
    state: str = "candidate"  # candidate | accepted | rejected


@dataclass
class WorkReport:
    work_id: str
    timings: dict[str, float] = field(default_factory=dict)
    retries: dict[str, int] = field(default_factory=dict)
    hallucinations: int = 0
    dropped_self_loops: int = 0
    review_items_created: int = 0
    kb_failures: int = 0
    refinement_iterations: int = 0
    actions_applied: dict[str, int] = field(default_factory=lambda: {"add": 0, "delete": 0, "keep": 0})
    cleaning: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "timings": {k: round(v, 6) for k, v in self.timings.items()},
            "retries": self.retries,
            "hallucinations": self.hallucinations,
            "dropped_self_loops": self.dropped_self_loops,
            "review_items_created": self.review_items_created,
            "kb_failures": self.kb_failures,
            "refinement_iterations": self.refinement_iterations,
            "actions_applied": self.actions_applied,
            "cleaning": self.cleaning,
        }


@dataclass
class WorkResult:
    work_id: str
    status: str
    segments: Optional[SegmentedAbstract] = None
    pairs: list[ConceptPair] = field(default_factory=list)
    triplets: list[Triplet] = field(default_factory=list)
    g_nodes: dict[str, int] = field(default_factory=dict)  # node id -> level
    g_edges: list[tuple[str, str]] = field(default_factory=list)
    paths: list[ConceptPath] = field(default_factory=list)
    report: Optional[WorkReport] = None
    error: Optional[str] = None

    def hierarchy_canonical(self) -> str:
        """Byte-stable rendering of the final hierarchy (determinism checks)."""
        return json.dumps(
            {"nodes": dict(sorted(self.g_nodes.items())), "edges": sorted(self.g_edges)},
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass
class PipelineConfig:
    retries: int = 2
    batch_size: int = 8
    max_refine_iterations: int = 5
    match_concepts: bool = True
    enforce_vocabulary: bool = True
    route_to_expert: bool = True
    run_refinement: bool = True
    kg_augment: bool = False
    include_singletons: bool = True
    parallel: int = 1


DecisionSource = Callable[[Store, list], None]


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


class PipelineRunner:
    def __init__(
        self,
        store: Store,
        backend: Backend,
        config: Optional[PipelineConfig] = None,
        kb_clients: Iterable[KBClient] = (),
        decision_source: Optional[DecisionSource] = None,
    ):
        self.store = store
        self.backend = backend
        self.config = config or PipelineConfig()
        self.matcher = ConceptMatcher(store, kb_clients)
        # Scripted auto-expert for harness runs; None parks works for humans.
        self.decision_source = decision_source
        self._prompts = {stage: load_prompt(stage) for stage in DECODING_PARAMS}

    # -- backend plumbing -----------------------------------------------

    def _call(self, stage: str, input_text: str, parse_fn, report: WorkReport):
        last_exc: Optional[Exception] = None
        for _attempt in range(self.config.retries + 1):
            response = self.backend.complete(
                BackendRequest(
                    stage=stage,
                    instruction=self._prompts[stage],
                    input_text=input_text,
                    params=DECODING_PARAMS.get(stage, {}),
                )
            )
            try:
                return parse_fn(response.text), response.text
            except StageParseError as exc:
                last_exc = exc
                report.retries[stage] = report.retries.get(stage, 0) + 1
        assert last_exc is not None
        raise last_exc

    # -- stage 1 ----------------------------------------------------------

    def run_stage1(self, work: Work, report: WorkReport) -> SegmentedAbstract:
        if not work.abstract_text:
            raise PipelineError(f"work {work.id} has an empty abstract")
        started = time.perf_counter()
        try:
            segments, _raw = self._call(STAGE_SEGMENT, work.abstract_text, parse_segments, report)
        finally:
            report.timings["stage1"] = time.perf_counter() - started
        return SegmentedAbstract(work.id, *(segments[tag] for tag in SEGMENT_TAGS))

    # -- stage 2 ----------------------------------------------------------

    def run_stage2(self, seg: SegmentedAbstract, work: Work, report: WorkReport) -> list[ConceptPair]:
        started = time.perf_counter()
        pairs: list[ConceptPair] = []
        seen: set[tuple[str, str]] = set()
        for tag in SEGMENT_TAGS:
            parsed, _raw = self._call(STAGE_PAIRS, seg.segments()[tag], parse_concept_pairs, report)
            for domain, specific in parsed:
                dedupe_key = (normalize_name(domain), normalize_name(specific))
                if dedupe_key in seen:
                    continue
                seen.add(dedupe_key)
                pairs.append(ConceptPair(domain=domain, specific_concept=specific, segment_origin=tag))
        for pair in pairs:
            self._validate_pair(pair, seg, work, report)
        report.timings["stage2"] = time.perf_counter() - started
        return pairs

    def _validate_pair(self, pair: ConceptPair, seg: SegmentedAbstract, work: Work, report: WorkReport) -> None:
        if not self.config.match_concepts:
            # Raw ablation mode: names pass through as pseudo-concepts.
            pair.validation_state = "kb_matched"
            pair.matched_concept_ids = (raw_concept_id(pair.domain), raw_concept_id(pair.specific_concept))
            return
        matches = {
            "domain": self.matcher.match(pair.domain),
            "specific": self.matcher.match(pair.specific_concept),
        }
        if matches["domain"].concept and matches["specific"].concept:
            pair.validation_state = "kb_matched"
            pair.matched_concept_ids = (matches["domain"].concept.id, matches["specific"].concept.id)
            return
        if any(m.concept is None and m.kb_failed for m in matches.values()):
            # The KB never answered: the verdict is provisional, so the pair
            # stays pending for a later retry rather than going to the expert.
            report.kb_failures += 1
            return
        if not self.config.route_to_expert:
            return  # stays pending, excluded from the validated set
        unmatched = [side for side, m in matches.items() if m.concept is None]
        excerpt = seg.segments()[pair.segment_origin][:240]
        item = review.enqueue(
            self.store,
            "pair",
            work.id,
            payload={
                "pair": [pair.domain, pair.specific_concept],
                "unmatched": unmatched,
                "matched_ids": {
                    side: m.concept.id for side, m in matches.items() if m.concept is not None
                },
                "near_misses": sorted(
                    set(matches["domain"].near_misses + matches["specific"].near_misses)
                ),
                "segment_origin": pair.segment_origin,
                "segment_excerpt": excerpt,
            },
        )
        pair.review_item_id = item.id
        report.review_items_created += 1

    def _apply_pair_decisions(self, pairs: list[ConceptPair]) -> None:
        """Finalize pending pairs whose review items were decided."""
        for pair in pairs:
            if pair.validation_state != "pending" or not pair.review_item_id:
                continue
            item = self.store.review_items.get(pair.review_item_id)
            if item is None or item.state == "pending":
                continue
            if item.state in ("rejected", "annotated"):
                # annotate records context without resolving the pair
                pair.validation_state = "rejected" if item.state == "rejected" else "pending"
                continue
            decision = item.payload.get("decision", {})
            edit = decision.get("concept_edit") or {}
            matched_ids = dict(item.payload.get("matched_ids", {}))
            resolved: dict[str, str] = {}
            for side, name in (("domain", pair.domain), ("specific", pair.specific_concept)):
                if side in matched_ids:
                    resolved[side] = matched_ids[side]
                    continue
                side_edit = edit.get(side) or {}
                if "concept_id" in side_edit:
                    resolved[side] = side_edit["concept_id"]
                    continue
                resolved[side] = self._create_expert_concept(
                    side_edit.get("name", name),
                    side_edit.get("level"),
                    fallback_anchor=matched_ids.get("domain" if side == "specific" else "specific"),
                    side=side,
                )
            pair.matched_concept_ids = (resolved["domain"], resolved["specific"])
            pair.validation_state = "expert_approved"

    def _create_expert_concept(
        self, name: str, level: Optional[int], fallback_anchor: Optional[str], side: str
    ) -> str:
        if level is None:
            # No level supplied: hang the new concept around the resolved side.
            anchor = self.store.concepts.get(fallback_anchor) if fallback_anchor else None
            if anchor is not None:
                level = anchor.level + 1 if side == "specific" else max(anchor.level - 1, 0)
            else:
                level = 0 if side == "domain" else 1
        concept_id = f"expert:{normalize_name(name)}"
        if concept_id not in self.store.concepts:
            self.store.add_concept(Concept.make(concept_id, name, level, source="expert"))
        return concept_id

    # -- stage 3 ----------------------------------------------------------

    @staticmethod
    def validated_pairs(pairs: Iterable[ConceptPair]) -> list[ConceptPair]:
        return [p for p in pairs if p.validation_state in ("kb_matched", "expert_approved")]

    def _name_map(self, validated: list[ConceptPair]) -> dict[str, str]:
        name_to_id: dict[str, str] = {}
        for p in validated:
            assert p.matched_concept_ids is not None
            name_to_id.setdefault(normalize_name(p.domain), p.matched_concept_ids[0])
            name_to_id.setdefault(normalize_name(p.specific_concept), p.matched_concept_ids[1])
        return name_to_id

    def run_stage3(
        self, pairs: list[ConceptPair], seg: SegmentedAbstract, work: Work, report: WorkReport
    ) -> list[Triplet]:
        validated = self.validated_pairs(pairs)
        if not validated:
            return []
        started = time.perf_counter()
        name_to_id = self._name_map(validated)
        context = " ".join(seg.segments().values())
        triplets: list[Triplet] = []
        seen: set[tuple[str, str]] = set()
        for batch_start in range(0, len(validated), self.config.batch_size):
            batch = validated[batch_start : batch_start + self.config.batch_size]
            input_text = json.dumps(
                {"pairs": [[p.domain, p.specific_concept] for p in batch], "context": context},
                ensure_ascii=False,
            )
            parsed, _raw = self._call(STAGE_RELATIONS, input_text, parse_concept_relations, report)
            for parent_name, child_name in parsed:
                pid = name_to_id.get(normalize_name(parent_name))
                cid = name_to_id.get(normalize_name(child_name))
                if pid is None or cid is None:
                    if self.config.enforce_vocabulary:
                        # The hard constraint: out-of-vocabulary concepts never enter G.
                        report.hallucinations += 1
                        continue
                    pid = pid if pid is not None else raw_concept_id(parent_name)
                    cid = cid if cid is not None else raw_concept_id(child_name)
                if pid == cid:
                    report.dropped_self_loops += 1
                    continue
                if (pid, cid) in seen:
                    continue
                seen.add((pid, cid))
                triplets.append(Triplet(parent_id=pid, child_id=cid, evidence_segment=seg.work_id))
        if self.config.kg_augment:
            triplets.extend(self._augment_from_store(triplets, set(name_to_id.values()), seen))
        report.timings["stage3"] = time.perf_counter() - started
        return triplets

    def _augment_from_store(
        self, triplets: list[Triplet], validated_ids: set[str], seen: set[tuple[str, str]]
    ) -> list[Triplet]:
        """Connecting paths from the store whose intermediates are already validated."""
        cleaned = {(e.parent_id, e.child_id) for e in self.store.cleaned_edges()}
        extra: list[Triplet] = []
        for t in list(triplets):
            for mid in sorted(validated_ids - {t.parent_id, t.child_id}):
                if (t.parent_id, mid) in cleaned and (mid, t.child_id) in cleaned:
                    for edge in ((t.parent_id, mid), (mid, t.child_id)):
                        if edge not in seen:
                            seen.add(edge)
                            extra.append(
                                Triplet(parent_id=edge[0], child_id=edge[1], evidence_segment="kg", state="accepted")
                            )
        return extra

    # -- stage 4 ----------------------------------------------------------

    def _node_level(self, node_id: str, extra_nodes: dict[str, dict]) -> Optional[int]:
        if node_id in self.store.concepts:
            return self.store.concepts[node_id].level
        if node_id in extra_nodes:
            return extra_nodes[node_id].get("level")
        if node_id.startswith(RAW_ID_PREFIX):
            return 0
        return None

    def _journal_refinement(
        self, work_id: str, pair: tuple[str, str], concept: str, action: str, applied: bool, reason: str = ""
    ) -> None:
        payload = {"pair": list(pair), "concept": concept, "action": action, "applied": applied}
        if reason:
            payload["reason"] = reason
        # System-applied action: the item is born decided and journaled exactly once.
        with self.store.lock:
            now = utc_now_iso()
            item = ReviewItem(
                id=review.new_item_id("refinement"),
                kind="refinement",
                work_id=work_id,
                payload=payload,
                state="approved",
                created_at=now,
                decided_at=now,
            )
            self.store.add_review_item(item)
            review.journal_system_event(self.store, item.id, action, payload)

    def run_stage4(
        self,
        pairs: list[ConceptPair],
        triplets: list[Triplet],
        work: Work,
        report: WorkReport,
        state: dict,
    ) -> tuple[str, set[tuple[str, str]], dict[str, dict]]:
        """Refinement loop; returns (status, final edge set, extra node table)."""
        validated = self.validated_pairs(pairs)
        name_to_id = self._name_map(validated)
        id_to_name = {v: k for k, v in name_to_id.items()}
        if "edges" in state:
            edges: set[tuple[str, str]] = {tuple(e) for e in state["edges"]}
        else:
            edges = {(t.parent_id, t.child_id) for t in triplets}
        extra_nodes: dict[str, dict] = dict(state.get("extra_nodes", {}))
        iteration = state.get("iteration", 0)
        started = time.perf_counter()

        delta = True
        while delta and iteration < self.config.max_refine_iterations:
            delta = False
            iteration += 1
            for pair in validated:
                assert pair.matched_concept_ids is not None
                a_id, b_id = pair.matched_concept_ids
                input_text = json.dumps(
                    {
                        "pair": [pair.domain, pair.specific_concept],
                        "edges": sorted(
                            [id_to_name.get(p, p), id_to_name.get(c, c)] for p, c in edges
                        ),
                    },
                    ensure_ascii=False,
                )
                (concept_name, action), _raw = self._call(STAGE_REFINE, input_text, parse_refinement, report)
                if action == "keep":
                    report.actions_applied["keep"] += 1
                    self._journal_refinement(work.id, (pair.domain, pair.specific_concept), concept_name, "keep", True)
                    continue
                if action == "add":
                    outcome = self._apply_add(
                        work, pair, (a_id, b_id), concept_name, edges, extra_nodes, name_to_id, id_to_name, report
                    )
                    if outcome == "parked":
                        state.update(
                            {
                                "edges": sorted(edges),
                                "extra_nodes": extra_nodes,
                                "iteration": iteration,
                            }
                        )
                        report.refinement_iterations = iteration
                        report.timings["stage4"] = report.timings.get("stage4", 0.0) + time.perf_counter() - started
                        return STATUS_AWAITING_REVIEW, edges, extra_nodes
                    delta = delta or outcome == "changed"
                else:  # delete
                    changed = self._apply_delete(work, pair, concept_name, edges, id_to_name, report)
                    delta = delta or changed
        report.refinement_iterations = iteration
        report.timings["stage4"] = report.timings.get("stage4", 0.0) + time.perf_counter() - started
        state.update({"edges": sorted(edges), "extra_nodes": extra_nodes, "iteration": iteration})
        return STATUS_COMPLETED, edges, extra_nodes

    def _apply_add(
        self,
        work: Work,
        pair: ConceptPair,
        endpoint_ids: tuple[str, str],
        concept_name: str,
        edges: set[tuple[str, str]],
        extra_nodes: dict[str, dict],
        name_to_id: dict[str, str],
        id_to_name: dict[str, str],
        report: WorkReport,
    ) -> str:
        """Insert A -> C -> B for the proposed intermediate; returns changed|unchanged|parked."""
        a_id, b_id = endpoint_ids
        pair_names = (pair.domain, pair.specific_concept)
        c_id = name_to_id.get(normalize_name(concept_name))
        if c_id is None and self.config.match_concepts:
            match = self.matcher.match(concept_name)
            if match.concept is not None:
                c_id = match.concept.id
        elif c_id is None:
            c_id = raw_concept_id(concept_name)
        if c_id is None:
            if not self.config.route_to_expert:
                self._journal_refinement(work.id, pair_names, concept_name, "add", False, "unresolved")
                return "unchanged"
            item = review.enqueue(
                self.store,
                "refinement",
                work.id,
                payload={
                    "pair": list(pair_names),
                    "proposed_intermediate": concept_name,
                    "action": "add",
                },
            )
            report.review_items_created += 1
            if self.decision_source is not None:
                self.decision_source(self.store, [item])
                decided = self.store.review_items[item.id]
                if decided.state != "pending":
                    return self._apply_decided_refinement(
                        work, decided, edges, extra_nodes, name_to_id, id_to_name, report
                    )
            return "parked"
        levels = [
            self._node_level(a_id, extra_nodes),
            self._node_level(c_id, extra_nodes),
            self._node_level(b_id, extra_nodes),
        ]
        if self.config.match_concepts and None not in levels and not (levels[0] < levels[1] < levels[2]):
            # Level order must strictly increase along A -> C -> B.
            self._journal_refinement(work.id, pair_names, concept_name, "add", False, "level_order")
            return "unchanged"
        id_to_name.setdefault(c_id, normalize_name(concept_name))
        name_to_id.setdefault(normalize_name(concept_name), c_id)
        new_edges = {(a_id, c_id), (c_id, b_id)} - edges
        self._journal_refinement(work.id, pair_names, concept_name, "add", bool(new_edges))
        if not new_edges:
            return "unchanged"
        edges.update(new_edges)
        report.actions_applied["add"] += 1
        return "changed"

    def _apply_delete(
        self,
        work: Work,
        pair: ConceptPair,
        concept_name: str,
        edges: set[tuple[str, str]],
        id_to_name: dict[str, str],
        report: WorkReport,
    ) -> bool:
        assert pair.matched_concept_ids is not None
        a_id, b_id = pair.matched_concept_ids
        pair_names = (pair.domain, pair.specific_concept)
        norm = normalize_name(concept_name)
        target_ids = [nid for nid, name in id_to_name.items() if name == norm]
        if not target_ids:
            self._journal_refinement(work.id, pair_names, concept_name, "delete", False, "not_found")
            return False
        target = target_ids[0]
        via = {(a_id, target), (target, b_id)} & edges
        if len(via) == 2:
            # The named concept bridges the pair: remove the relation only.
            edges.difference_update(via)
            report.actions_applied["delete"] += 1
            self._journal_refinement(work.id, pair_names, concept_name, "delete", True, "relation")
            return True
        incident = {e for e in edges if target in e}
        if not incident and target not in {n for e in edges for n in e}:
            self._journal_refinement(work.id, pair_names, concept_name, "delete", False, "not_in_hierarchy")
            return False
        edges.difference_update(incident)
        report.actions_applied["delete"] += 1
        self._journal_refinement(work.id, pair_names, concept_name, "delete", True, "concept")
        return True

    def _apply_decided_refinement(
        self,
        work: Work,
        item,
        edges: set[tuple[str, str]],
        extra_nodes: dict[str, dict],
        name_to_id: dict[str, str],
        id_to_name: dict[str, str],
        report: WorkReport,
    ) -> str:
        decision = item.payload.get("decision", {})
        action = decision.get("action")
        if action != "add":
            return "unchanged"  # expert chose keep/delete of the proposal: nothing to insert
        concept_name = item.payload["proposed_intermediate"]
        edit = decision.get("concept_edit") or {}
        if "concept_id" in edit:
            c_id = edit["concept_id"]
        else:
            c_id = f"expert:{normalize_name(edit.get('name', concept_name))}"
            if c_id not in self.store.concepts:
                level = edit.get("level")
                if level is None:
                    pair_names = item.payload["pair"]
                    a_id = name_to_id.get(normalize_name(pair_names[0]))
                    a_level = self._node_level(a_id, extra_nodes) if a_id else None
                    level = (a_level + 1) if a_level is not None else 1
                self.store.add_concept(
                    Concept.make(c_id, edit.get("name", concept_name), level, source="expert")
                )
        extra_nodes[c_id] = {"name": concept_name, "level": self.store.concepts[c_id].level}
        pair_names = item.payload["pair"]
        a_id = name_to_id.get(normalize_name(pair_names[0]))
        b_id = name_to_id.get(normalize_name(pair_names[1]))
        if a_id is None or b_id is None:
            return "unchanged"
        name_to_id.setdefault(normalize_name(concept_name), c_id)
        id_to_name.setdefault(c_id, normalize_name(concept_name))
        new_edges = {(a_id, c_id), (c_id, b_id)} - edges
        if not new_edges:
            return "unchanged"
        edges.update(new_edges)
        report.actions_applied["add"] += 1
        return "changed"

    # -- finalization -------------------------------------------------------

    def _finalize(
        self,
        work: Work,
        seg: Optional[SegmentedAbstract],
        pairs: list[ConceptPair],
        triplets: list[Triplet],
        edges: set[tuple[str, str]],
        extra_nodes: dict[str, dict],
        report: WorkReport,
    ) -> WorkResult:
        validated = self.validated_pairs(pairs)
        node_ids = {nid for pair in validated for nid in (pair.matched_concept_ids or ())}
        node_ids.update(n for e in edges for n in e)
        levels: dict[str, int] = {}
        for nid in node_ids:
            level = self._node_level(nid, extra_nodes)
            levels[nid] = level if level is not None else 0
        if self.config.match_concepts:
            # Final G must satisfy the cleaned-hierarchy invariants.
            concept_table = {
                nid: self.store.concepts.get(nid)
                or Concept.make(nid, extra_nodes.get(nid, {}).get("name", nid), levels[nid], source="llm")
                for nid in node_ids
            }
            edge_objs = [ConceptEdge(p, c, provenance="llm", validated=True) for p, c in sorted(edges)]
            cleaned, cleaning_report = clean_hierarchy(edge_objs, concept_table)
            assert_acyclic(cleaned)
            report.cleaning = cleaning_report.as_dict()
            final_edges = [(e.parent_id, e.child_id) for e in cleaned]
        else:
            final_edges = sorted(edges)
        view = SubgraphView(
            {nid: Concept.make(nid, nid, levels[nid], source="llm") for nid in node_ids},
            [ConceptEdge(p, c, provenance="llm", validated=True) for p, c in final_edges],
        )
        work_paths = enumerate_view(work.id, view, self.config.include_singletons)
        return WorkResult(
            work_id=work.id,
            status=STATUS_COMPLETED,
            segments=seg,
            pairs=pairs,
            triplets=triplets,
            g_nodes=dict(sorted(levels.items())),
            g_edges=final_edges,
            paths=work_paths,
            report=report,
        )

    # -- orchestration ------------------------------------------------------

    def _persist_state(self, result: WorkResult, state_stage: str) -> None:
        seg = result.segments
        self.store.set_pipeline_state(
            result.work_id,
            {
                "status": result.status,
                "stage": state_stage,
                "updated_at": utc_now_iso(),
                "segments": seg.segments() if seg else None,
                "pairs": [p.as_dict() for p in result.pairs],
                "triplets": [[t.parent_id, t.child_id] for t in result.triplets],
                "edges": sorted(result.g_edges),
                "nodes": result.g_nodes,
                "extra_nodes": {},
                "iteration": result.report.refinement_iterations if result.report else 0,
                "counters": result.report.as_dict() if result.report else {},
                "error": result.error,
            },
        )

    def _blocking_items(self, pairs: list[ConceptPair]) -> list[str]:
        blocked = []
        for pair in pairs:
            if pair.validation_state == "pending" and pair.review_item_id:
                item = self.store.review_items.get(pair.review_item_id)
                if item is not None and item.state == "pending":
                    blocked.append(item.id)
        return blocked

    def run_work(self, work: Work) -> WorkResult:
        """Drive one work through stages 1-4; never raises for stage failures."""
        report = WorkReport(work_id=work.id)
        if not work.abstract_text or not work.concept_ids:
            result = WorkResult(work.id, STATUS_FAILED, error="incomplete work (precondition)", report=report)
            self._persist_state(result, "precondition")
            return result
        try:
            seg = self.run_stage1(work, report)
        except StageParseError as exc:
            item = review.enqueue(
                self.store,
                "segmentation",
                work.id,
                payload={"raw_text": exc.raw_text, "error": str(exc)},
            )
            report.review_items_created += 1
            result = WorkResult(work.id, STATUS_AWAITING_REVIEW, report=report, error=str(exc))
            self._persist_state(result, "stage1")
            if self.decision_source is not None:
                self.decision_source(self.store, [self.store.review_items[item.id]])
                return self.resume_work(work.id)
            return result
        except (BackendError, PipelineError) as exc:
            result = WorkResult(work.id, STATUS_FAILED, report=report, error=str(exc))
            self._persist_state(result, "stage1")
            return result
        return self._continue_from_stage2(work, seg, report)

    def _continue_from_stage2(self, work: Work, seg: SegmentedAbstract, report: WorkReport) -> WorkResult:
        try:
            pairs = self.run_stage2(seg, work, report)
        except (StageParseError, BackendError) as exc:
            result = WorkResult(work.id, STATUS_FAILED, segments=seg, report=report, error=str(exc))
            self._persist_state(result, "stage2")
            return result
        if self.decision_source is not None:
            pending = [
                self.store.review_items[p.review_item_id]
                for p in pairs
                if p.review_item_id and self.store.review_items[p.review_item_id].state == "pending"
            ]
            if pending:
                self.decision_source(self.store, pending)
        self._apply_pair_decisions(pairs)
        if self._blocking_items(pairs):
            result = WorkResult(work.id, STATUS_AWAITING_REVIEW, segments=seg, pairs=pairs, report=report)
            self._persist_state(result, "stage2")
            return result
        return self._continue_from_stage3(work, seg, pairs, report)

    def _continue_from_stage3(
        self, work: Work, seg: SegmentedAbstract, pairs: list[ConceptPair], report: WorkReport
    ) -> WorkResult:
        try:
            triplets = self.run_stage3(pairs, seg, work, report)
        except (StageParseError, BackendError) as exc:
            result = WorkResult(work.id, STATUS_FAILED, segments=seg, pairs=pairs, report=report, error=str(exc))
            self._persist_state(result, "stage3")
            return result
        state: dict = {}
        if self.config.run_refinement and self.validated_pairs(pairs):
            try:
                status, edges, extra_nodes = self.run_stage4(pairs, triplets, work, report, state)
            except (StageParseError, BackendError) as exc:
                result = WorkResult(
                    work.id, STATUS_FAILED, segments=seg, pairs=pairs, triplets=triplets, report=report, error=str(exc)
                )
                self._persist_state(result, "stage4")
                return result
            if status == STATUS_AWAITING_REVIEW:
                result = WorkResult(
                    work.id,
                    STATUS_AWAITING_REVIEW,
                    segments=seg,
                    pairs=pairs,
                    triplets=triplets,
                    g_edges=sorted(edges),
                    report=report,
                )
                self._persist_state(result, "stage4")
                self.store.pipeline_states[work.id]["extra_nodes"] = state.get("extra_nodes", {})
                self.store.pipeline_states[work.id]["iteration"] = state.get("iteration", 0)
                return result
        else:
            edges = {(t.parent_id, t.child_id) for t in triplets}
            extra_nodes = {}
        result = self._finalize(work, seg, pairs, triplets, edges, extra_nodes, report)
        self._persist_state(result, "done")
        return result

    def resume_work(self, work_id: str) -> WorkResult:
        """Continue a parked work after its review items were decided."""
        state = self.store.pipeline_states.get(work_id)
        if state is None:
            raise PipelineError(f"no pipeline state for work {work_id}")
        if state["status"] not in (STATUS_AWAITING_REVIEW, STATUS_READY):
            raise PipelineError(f"work {work_id} is not awaiting review (status {state['status']})")
        work = self.store.works[work_id]
        report = WorkReport(work_id=work_id)
        counters = state.get("counters") or {}
        report.hallucinations = counters.get("hallucinations", 0)
        report.review_items_created = counters.get("review_items_created", 0)

        stage = state["stage"]
        if stage == "stage1":
            items = review.query_items(self.store, kind="segmentation", work_id=work_id)
            decided = [i for i in items if i.state != "pending"]
            if not decided:
                return WorkResult(work_id, STATUS_AWAITING_REVIEW, report=report)
            item = decided[-1]
            decision = item.payload.get("decision", {})
            segments = (decision.get("concept_edit") or {}).get("segments")
            if item.state == "rejected" or not segments:
                result = WorkResult(work_id, STATUS_FAILED, report=report, error="segmentation rejected")
                self._persist_state(result, "stage1")
                return result
            seg = SegmentedAbstract.from_dict(work_id, segments)
            return self._continue_from_stage2(work, seg, report)

        seg = SegmentedAbstract.from_dict(work_id, state["segments"])
        pairs = [ConceptPair.from_dict(d) for d in state["pairs"]]
        if stage == "stage2":
            self._apply_pair_decisions(pairs)
            if self._blocking_items(pairs):
                return WorkResult(work_id, STATUS_AWAITING_REVIEW, segments=seg, pairs=pairs, report=report)
            return self._continue_from_stage3(work, seg, pairs, report)
        if stage == "stage4":
            triplets = [Triplet(parent_id=p, child_id=c) for p, c in state.get("triplets", [])]
            validated = self.validated_pairs(pairs)
            name_to_id = self._name_map(validated)
            id_to_name = {v: k for k, v in name_to_id.items()}
            edges = {tuple(e) for e in state.get("edges", [])}
            extra_nodes = dict(state.get("extra_nodes", {}))
            pending = [
                i
                for i in review.query_items(self.store, kind="refinement", work_id=work_id)
                if i.state == "pending"
            ]
            if pending:
                return WorkResult(work_id, STATUS_AWAITING_REVIEW, segments=seg, pairs=pairs, report=report)
            changed = False
            for item in review.query_items(self.store, kind="refinement", work_id=work_id):
                if item.payload.get("applied") is None and "proposed_intermediate" in item.payload:
                    outcome = self._apply_decided_refinement(
                        work, item, edges, extra_nodes, name_to_id, id_to_name, report
                    )
                    changed = changed or outcome == "changed"
            resume_state = {
                "edges": sorted(edges),
                "extra_nodes": extra_nodes,
                "iteration": state.get("iteration", 0),
            }
            if changed and resume_state["iteration"] < self.config.max_refine_iterations:
                status, edges, extra_nodes = self.run_stage4(pairs, triplets, work, report, resume_state)
                if status == STATUS_AWAITING_REVIEW:
                    result = WorkResult(
                        work_id,
                        STATUS_AWAITING_REVIEW,
                        segments=seg,
                        pairs=pairs,
                        triplets=triplets,
                        g_edges=sorted(edges),
                        report=report,
                    )
                    self._persist_state(result, "stage4")
                    return result
            result = self._finalize(work, seg, pairs, triplets, edges, extra_nodes, report)
            self._persist_state(result, "done")
            return result
        raise PipelineError(f"cannot resume work {work_id} from stage {stage!r}")

    def run_direct(self, work: Work, report: Optional[WorkReport] = None) -> list[str]:
        """Direct-generation baseline: one unconstrained concept-list call."""
        report = report or WorkReport(work_id=work.id)
        names, _raw = self._call(STAGE_DIRECT, work.abstract_text, parse_concept_list, report)
        return names

    def run_corpus(self, works: Iterable[Work]) -> dict[str, WorkResult]:
        """Process works independently, merged deterministically by work id."""
        ordered = sorted(works, key=lambda w: w.id)
        results: dict[str, WorkResult] = {}
        if self.config.parallel <= 1:
            for work in ordered:
                results[work.id] = self.run_work(work)
        else:
            with ThreadPoolExecutor(max_workers=self.config.parallel) as pool:
                for work, result in zip(ordered, pool.map(self.run_work, ordered)):
                    results[work.id] = result
        return results


def assert_vocabulary_closure(result: WorkResult, store: Store) -> None:
    """Final G may only mention validated stage-2 concepts and expert additions."""
    allowed = {nid for p in PipelineRunner.validated_pairs(result.pairs) for nid in (p.matched_concept_ids or ())}
    allowed.update(nid for nid in result.g_nodes if nid.startswith("expert:"))
    offenders = set(result.g_nodes) - allowed
    if offenders:
        raise AssertionError(f"vocabulary closure violated for {result.work_id}: {sorted(offenders)[:5]}")
