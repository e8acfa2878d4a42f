"""Set-coverage evaluation of predicted concepts, triplets, and paths.

Precision, recall, and F1 come from intersection sizes of canonicalized
prediction and gold sets, micro-averaged by pooling counts across works
(macro averages are reported alongside). Concept canonicalization goes
through the same matcher the pipeline uses, so near-miss phrasings are
measured, not silently forgiven.

The harness also runs the ablation configurations: direct generation,
the staged pipeline with and without expert review and the knowledge-graph
constraint, refinement in isolation, and the full end-to-end system.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import review
from .kgstore import Store, Work, normalize_name
from .paths import PATH_KEY_SEP
from .pipeline.backends import Backend
from .pipeline.engine import (
    RAW_ID_PREFIX,
    ConceptPair,
    PipelineConfig,
    PipelineRunner,
    Triplet,
    WorkReport,
    WorkResult,
)
from .pipeline.matching import ConceptMatcher, KBClient

ABLATION_CONFIGS = (
    "direct_generate",
    "stages23_raw",
    "stages23_expert",
    "stages23_expert_kg",
    "stage4_only",
    "end_to_end",
    "zero_shot_baseline",
)

_EXPERT_CONFIGS = {"stages23_expert", "stages23_expert_kg"}


class EvalError(Exception):
    pass


@dataclass
class UnitScores:
    precision: float
    recall: float
    f1: float
    n_pred: int
    n_gold: int
    n_inter: int
    pred_empty: bool = False

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_pred": self.n_pred,
            "n_gold": self.n_gold,
            "n_inter": self.n_inter,
            "pred_empty": self.pred_empty,
        }


@dataclass
class EvalReport:
    configuration: str
    units: dict[str, dict] = field(default_factory=dict)  # unit -> micro/macro/per_work

    def micro(self, unit: str) -> UnitScores:
        return self.units[unit]["micro"]

    def as_dict(self) -> dict:
        return {
            "configuration": self.configuration,
            "units": {
                unit: {
                    "micro": entry["micro"].as_dict(),
                    "macro": entry["macro"],
                    "per_work": {wid: s.as_dict() for wid, s in entry["per_work"].items()},
                }
                for unit, entry in self.units.items()
            },
        }


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def score(pred: set, gold: set, unit: str) -> UnitScores:
    """Set-coverage P/R/F1 for one work.

    Elements must be canonicalized beforehand (concept ids, ordered id pairs,
    path keys). Empty gold is a malformed gold file and raises; empty pred
    scores zero and is flagged.
    """
    if not gold:
        raise EvalError(f"empty gold set for unit '{unit}'")
    inter = len(pred & gold)
    p = inter / len(pred) if pred else 0.0
    r = inter / len(gold)
    return UnitScores(
        precision=p,
        recall=r,
        f1=_f1(p, r),
        n_pred=len(pred),
        n_gold=len(gold),
        n_inter=inter,
        pred_empty=not pred,
    )


def aggregate(per_work: dict[str, UnitScores]) -> dict:
    """Micro (pooled counts) and macro (mean of per-work scores) aggregation."""
    n_pred = sum(s.n_pred for s in per_work.values())
    n_gold = sum(s.n_gold for s in per_work.values())
    n_inter = sum(s.n_inter for s in per_work.values())
    p = n_inter / n_pred if n_pred else 0.0
    r = n_inter / n_gold if n_gold else 0.0
    micro = UnitScores(p, r, _f1(p, r), n_pred, n_gold, n_inter, pred_empty=n_pred == 0)
    count = len(per_work) or 1
    macro = {
        "precision": sum(s.precision for s in per_work.values()) / count,
        "recall": sum(s.recall for s in per_work.values()) / count,
        "f1": sum(s.f1 for s in per_work.values()) / count,
    }
    return {"micro": micro, "macro": macro, "per_work": per_work}


# ---------------------------------------------------------------------------
# Canonicalization (shared with the pipeline's matching rules)
# ---------------------------------------------------------------------------


class Canonicalizer:
    """Maps predicted tokens onto store concept ids via the stage-2 matcher."""

    def __init__(self, store: Store, kb_clients: Iterable[KBClient] = ()):
        self.store = store
        self.matcher = ConceptMatcher(store, kb_clients)
        self._cache: dict[str, str] = {}

    def concept(self, token: str) -> str:
        if token in self.store.concepts:
            return token
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        name = token[len(RAW_ID_PREFIX):] if token.startswith(RAW_ID_PREFIX) else token
        match = self.matcher.match(name)
        result = match.concept.id if match.concept is not None else f"name:{normalize_name(name)}"
        self._cache[token] = result
        return result

    def triplet(self, parent: str, child: str) -> tuple[str, str]:
        return (self.concept(parent), self.concept(child))

    def path_key(self, nodes: Iterable[str]) -> str:
        return PATH_KEY_SEP.join(self.concept(n) for n in nodes)


# ---------------------------------------------------------------------------
# Gold data
# ---------------------------------------------------------------------------


@dataclass
class GoldData:
    concepts: dict[str, set[str]]  # work_id -> concept ids
    paths: dict[str, set[tuple[str, ...]]]  # work_id -> node-id tuples

    def triplets(self, work_id: str) -> set[tuple[str, str]]:
        out: set[tuple[str, str]] = set()
        for nodes in self.paths.get(work_id, ()):
            out.update(zip(nodes, nodes[1:]))
        return out

    def path_keys(self, work_id: str) -> set[str]:
        return {PATH_KEY_SEP.join(nodes) for nodes in self.paths.get(work_id, ())}


def load_gold(gold_dir: str) -> GoldData:
    """Read ``gold_concepts.jsonl`` and ``gold_paths.jsonl`` keyed by work_id."""
    concepts: dict[str, set[str]] = {}
    with open(os.path.join(gold_dir, "gold_concepts.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                concepts[rec["work_id"]] = set(rec["concepts"])
    paths: dict[str, set[tuple[str, ...]]] = {}
    with open(os.path.join(gold_dir, "gold_paths.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                paths[rec["work_id"]] = {tuple(p) for p in rec["paths"]}
    return GoldData(concepts=concepts, paths=paths)


def save_gold(gold: GoldData, gold_dir: str) -> None:
    os.makedirs(gold_dir, exist_ok=True)
    with open(os.path.join(gold_dir, "gold_concepts.jsonl"), "w", encoding="utf-8") as fh:
        for work_id in sorted(gold.concepts):
            fh.write(json.dumps({"work_id": work_id, "concepts": sorted(gold.concepts[work_id])}) + "\n")
    with open(os.path.join(gold_dir, "gold_paths.jsonl"), "w", encoding="utf-8") as fh:
        for work_id in sorted(gold.paths):
            fh.write(
                json.dumps({"work_id": work_id, "paths": sorted(list(p) for p in gold.paths[work_id])}) + "\n"
            )


# ---------------------------------------------------------------------------
# Auto-expert (scripted decision source for harness runs)
# ---------------------------------------------------------------------------


class AutoExpert:
    """Applies a policy function to pending review items during harness runs.

    The policy receives a review item and returns ``(action, concept_edit)``;
    returning None leaves the item pending (the work parks).
    """

    def __init__(self, store: Store, policy: Callable[[object], Optional[tuple[str, Optional[dict]]]]):
        self.store = store
        self.policy = policy

    def __call__(self, store: Store, items: list) -> None:
        for item in items:
            verdict = self.policy(item)
            if verdict is None:
                continue
            action, concept_edit = verdict
            review.decide(store, item.id, action, actor="expert", concept_edit=concept_edit)


def gold_vocabulary_expert(store: Store, gold: GoldData) -> AutoExpert:
    """Auto-expert that approves pairs whose unmatched names normalize onto gold concepts."""
    name_to_id: dict[str, str] = {}
    for work_concepts in gold.concepts.values():
        for cid in work_concepts:
            concept = store.concepts.get(cid)
            if concept is not None:
                name_to_id[concept.normalized_name] = cid

    def policy(item) -> Optional[tuple[str, Optional[dict]]]:
        if item.kind == "pair":
            pair = item.payload["pair"]
            edit: dict = {}
            for side, name in (("domain", pair[0]), ("specific", pair[1])):
                if side in item.payload.get("unmatched", []):
                    cid = name_to_id.get(normalize_name(name))
                    if cid is None:
                        return ("reject", None)
                    edit[side] = {"concept_id": cid}
            return ("approve", edit or None)
        if item.kind == "refinement":
            return ("keep", None)
        if item.kind == "segmentation":
            return ("reject", None)
        return ("reject", None)

    return AutoExpert(store, policy)


# ---------------------------------------------------------------------------
# Ablation runner
# ---------------------------------------------------------------------------


def _pipeline_config(config: str) -> PipelineConfig:
    if config == "stages23_raw":
        return PipelineConfig(
            match_concepts=False, enforce_vocabulary=False, route_to_expert=False, run_refinement=False
        )
    if config == "stages23_expert":
        return PipelineConfig(enforce_vocabulary=False, run_refinement=False)
    if config == "stages23_expert_kg":
        return PipelineConfig(run_refinement=False, kg_augment=True)
    if config == "end_to_end":
        return PipelineConfig()
    raise EvalError(f"no pipeline configuration for '{config}'")


def _predictions_from_result(result: WorkResult, canon: Canonicalizer) -> dict[str, set]:
    concepts = {canon.concept(n) for n in result.g_nodes}
    triplets = {canon.triplet(p, c) for p, c in result.g_edges}
    path_keys = {canon.path_key(p.nodes) for p in result.paths}
    return {"concept": concepts, "triplet": triplets, "path": path_keys}


def _empty_predictions() -> dict[str, set]:
    return {"concept": set(), "triplet": set(), "path": set()}


def run_ablation(
    config: str,
    store: Store,
    works: list[Work],
    backend: Backend,
    gold: GoldData,
    decision_source: Optional[AutoExpert] = None,
    kb_clients: Iterable[KBClient] = (),
) -> EvalReport:
    """Execute one named configuration over the corpus and score it.

    Every work must have gold concepts and paths. Expert-in-the-loop
    configurations refuse to run without a decision source; tests supply a
    scripted auto-expert.
    """
    if config not in ABLATION_CONFIGS:
        raise EvalError(f"unknown configuration '{config}' (choose from {ABLATION_CONFIGS})")
    if config in _EXPERT_CONFIGS and decision_source is None:
        raise EvalError(
            f"configuration '{config}' requires review decisions but no decision source was "
            "provided; supply a scripted auto-expert"
        )
    for work in works:
        if work.id not in gold.concepts or work.id not in gold.paths:
            raise EvalError(f"gold annotations missing for work '{work.id}'")

    canon = Canonicalizer(store, kb_clients)
    predictions: dict[str, dict[str, set]] = {}

    if config in ("direct_generate", "zero_shot_baseline"):
        runner = PipelineRunner(store, backend, PipelineConfig(), kb_clients=kb_clients)
        for work in sorted(works, key=lambda w: w.id):
            names = runner.run_direct(work)
            preds = _empty_predictions()
            preds["concept"] = {canon.concept(n) for n in names}
            predictions[work.id] = preds
    elif config == "stage4_only":
        predictions = _run_stage4_only(store, works, backend, gold, canon, kb_clients)
    else:
        runner = PipelineRunner(
            store, backend, _pipeline_config(config), kb_clients=kb_clients, decision_source=decision_source
        )
        results = runner.run_corpus(works)
        for work_id, result in results.items():
            if result.status == "completed":
                predictions[work_id] = _predictions_from_result(result, canon)
            else:
                predictions[work_id] = _empty_predictions()

    report = EvalReport(configuration=config)
    for unit in ("concept", "triplet", "path"):
        per_work: dict[str, UnitScores] = {}
        for work in works:
            gold_set: set
            if unit == "concept":
                gold_set = set(gold.concepts[work.id])
            elif unit == "triplet":
                gold_set = gold.triplets(work.id)
            else:
                gold_set = gold.path_keys(work.id)
            if not gold_set:
                continue  # a work may legitimately have no multi-node paths
            per_work[work.id] = score(predictions[work.id][unit], gold_set, unit)
        report.units[unit] = aggregate(per_work)
    return report


def _run_stage4_only(
    store: Store,
    works: list[Work],
    backend: Backend,
    gold: GoldData,
    canon: Canonicalizer,
    kb_clients: Iterable[KBClient],
) -> dict[str, dict[str, set]]:
    """Refinement in isolation: gold triplets in, refined hierarchy out."""
    runner = PipelineRunner(store, backend, PipelineConfig(route_to_expert=False), kb_clients=kb_clients)
    predictions: dict[str, dict[str, set]] = {}
    for work in sorted(works, key=lambda w: w.id):
        gold_triplets = sorted(gold.triplets(work.id))
        if not gold_triplets:
            predictions[work.id] = _empty_predictions()
            continue
        pairs = []
        seen = set()
        for parent_id, child_id in gold_triplets:
            if (parent_id, child_id) in seen:
                continue
            seen.add((parent_id, child_id))
            parent = store.concepts[parent_id]
            child = store.concepts[child_id]
            pairs.append(
                ConceptPair(
                    domain=parent.name,
                    specific_concept=child.name,
                    segment_origin="related_research",
                    validation_state="kb_matched",
                    matched_concept_ids=(parent_id, child_id),
                )
            )
        triplets = [Triplet(parent_id=p, child_id=c) for p, c in gold_triplets]
        report = WorkReport(work_id=work.id)
        state: dict = {}
        status, edges, extra_nodes = runner.run_stage4(pairs, triplets, work, report, state)
        if status != "completed":
            predictions[work.id] = _empty_predictions()
            continue
        result = runner._finalize(work, None, pairs, triplets, edges, extra_nodes, report)
        predictions[work.id] = _predictions_from_result(result, canon)
    return predictions


def write_report(report: EvalReport, out_dir: str) -> None:
    """Emit ``eval_report.json`` plus a flat CSV of the micro scores."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "eval_report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "eval_report.csv"), "w", encoding="utf-8") as fh:
        fh.write("configuration,unit,precision,recall,f1,n_pred,n_gold,n_inter\n")
        for unit, entry in report.units.items():
            m = entry["micro"]
            fh.write(
                f"{report.configuration},{unit},{m.precision:.6f},{m.recall:.6f},{m.f1:.6f},"
                f"{m.n_pred},{m.n_gold},{m.n_inter}\n"
            )
