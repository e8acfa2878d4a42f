"""Acceptance suite: one test per release criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Dataset-dependent checks run only when the published corpus is
available (point CONCEPTPATHS_NSU_WORKSPACE at a populated workspace);
otherwise they are reported as unavailable, never silently passed.
"""

import json
import math
import os
import random
import time
from contextlib import contextmanager

import pytest

from conceptpaths.analytics import (
    brute_force_u,
    fit_power_law,
    mann_whitney,
    median_split,
    prevalence,
    prevalence_table,
    rank_frequency,
)
from conceptpaths.evalharness import gold_vocabulary_expert, run_ablation, score
from conceptpaths.ingest import invert_abstract, reconstruct_abstract
from conceptpaths.kgstore import load_workspace
from conceptpaths.paths import enumerate_paths
from conceptpaths.pipeline import PipelineConfig, PipelineRunner, ScriptedMockBackend
from conceptpaths.pipeline.engine import assert_vocabulary_closure
from fixtures import (
    FuzzCorpus,
    adversarial_backend,
    adversarial_chain_store,
    build_gold_script,
    fixture_gold,
    fixture_store,
)
from helpers import brute_force_source_sink_paths, make_work, random_level_dag

NSU_WORKSPACE = os.environ.get("CONCEPTPATHS_NSU_WORKSPACE")


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def _dataset_note(name: str) -> None:
    print(f"ACCEPTANCE {name}: dataset-dependent checks UNAVAILABLE (published corpus not present)")


def test_path_enumeration_oracle():
    with criterion("path-enumeration-oracle"):
        started = time.perf_counter()
        for seed in range(100):
            store = random_level_dag(random.Random(seed), max_nodes=12)
            work = make_work("w", set(store.concepts))
            got = {p.nodes for p in enumerate_paths(work, store)}
            expected = brute_force_source_sink_paths(store.induced_subgraph(work.concept_ids))
            assert got == expected, f"seed {seed}"
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"runtime {elapsed:.2f}s exceeds 5s"


def test_prevalence_constants():
    with criterion("prevalence-constants"):
        assert abs(prevalence(1) - 0.6931) < 1e-4  # four-digit anchor
        assert abs(prevalence(1) - math.log(2)) < 1e-10
        assert prevalence(0) == 0.0
        # A corpus where every path occurs exactly once: median is exactly ln 2.
        records = prevalence_table({f"path{i}": 1 for i in range(501)}, "path")
        threshold = median_split(records)
        assert threshold == math.log(2)


def test_power_law_recovery():
    with criterion("power-law-recovery"):
        rng = random.Random(99)
        for _ in range(20):
            c = 10 ** rng.uniform(1, 5)
            a = -rng.uniform(0.3, 2.5)
            pairs = [(r, c * r**a) for r in range(1, 51)]
            fit = fit_power_law(pairs)
            assert abs(fit.exponent - a) < 1e-9
            assert abs(fit.r_squared - 1.0) < 1e-12
            k = 10 ** rng.uniform(-2, 2)
            scaled = fit_power_law([(r, k * f) for r, f in pairs])
            assert abs(scaled.exponent - fit.exponent) < 1e-9
            assert abs(scaled.coefficient - k * fit.coefficient) <= 1e-9 * k * fit.coefficient
            assert abs(scaled.r_squared - fit.r_squared) < 1e-9
    if NSU_WORKSPACE and os.path.isdir(NSU_WORKSPACE):
        with criterion("power-law-nsu-dataset"):
            store = load_workspace(NSU_WORKSPACE)
            freq: dict[str, int] = {}
            for work in store.works.values():
                for cid in work.concept_ids:
                    freq[cid] = freq.get(cid, 0) + 1
            ranked = [(r, f) for r, _, f in rank_frequency(freq)]
            fit = fit_power_law(ranked)
            assert abs(fit.exponent - (-1.1193)) < 0.02
            assert abs(fit.r_squared - 0.9746) < 0.01
    else:
        _dataset_note("power-law-nsu-dataset")


def test_mann_whitney_oracle():
    with criterion("mann-whitney-oracle"):
        rng = random.Random(5150)
        for case in range(200):
            n1 = rng.randint(1, 200)
            n2 = rng.randint(1, 200)
            a = [rng.randint(0, 12) / 3.0 for _ in range(n1)]
            b = [rng.randint(0, 12) / 3.0 for _ in range(n2)]
            result = mann_whitney(a, b)
            assert abs(result.u_statistic - brute_force_u(a, b)) < 1e-9, f"case {case}"
            swapped = mann_whitney(b, a)
            assert swapped.u_statistic == n1 * n2 - result.u_statistic
        exact = mann_whitney([1, 2, 3], [4, 5, 6])
        assert exact.u_statistic == 0.0
        assert exact.p_value == pytest.approx(0.1, abs=1e-12)
    if NSU_WORKSPACE and os.path.isdir(NSU_WORKSPACE):
        with criterion("mann-whitney-nsu-dataset"):
            report_path = os.path.join(NSU_WORKSPACE, "report.json")
            assert os.path.exists(report_path), "run `analyze innovation` over the dataset first"
            report = json.loads(open(report_path).read())
            assert abs(report["mw_concepts_r"] - 0.714) <= 0.02
            assert abs(report["mw_paths_r"] - 0.472) <= 0.02
            assert report["mw_concepts_p"] < 0.001
            assert report["mw_paths_p"] < 0.001
    else:
        _dataset_note("mann-whitney-nsu-dataset")


def test_vocabulary_closure_under_noise():
    with criterion("vocabulary-closure-under-noise"):
        corpus = FuzzCorpus(seed=4242, n_works=50, oov_rate=0.2)
        runner = PipelineRunner(corpus.store, corpus.backend(), PipelineConfig())
        results = runner.run_corpus(corpus.works)
        assert len(results) == 50
        hallucinations = 0
        for result in results.values():
            assert result.status == "completed", result.error
            assert_vocabulary_closure(result, corpus.store)
            assert all(node in corpus.store.concepts for node in result.g_nodes)
            hallucinations += result.report.hallucinations
        assert corpus.injected_total > 0
        assert hallucinations == corpus.injected_total


def test_stage4_termination_bound():
    with criterion("stage4-termination"):
        for seed in range(25):
            store, work = adversarial_chain_store(seed)
            runner = PipelineRunner(store, adversarial_backend(), PipelineConfig())
            result = runner.run_work(work)
            assert result.status == "completed"
            assert result.report.refinement_iterations <= 5
            assert result.report.refinement_iterations == 5  # the mock never stops proposing


def test_end_to_end_oracle():
    with criterion("end-to-end-oracle"):
        gold = fixture_gold()
        store = fixture_store()
        works = sorted(store.works.values(), key=lambda w: w.id)
        script, _ = build_gold_script(include_stage4=True)
        report = run_ablation("end_to_end", store, works, ScriptedMockBackend(script), gold)
        for unit in ("concept", "triplet", "path"):
            assert report.micro(unit).f1 == 1.0, unit

        seed = 20240101
        store_raw = fixture_store()
        script_raw, injected = build_gold_script(include_stage4=False, inject_oov=0.2, seed=seed)
        assert injected > 0
        raw = run_ablation(
            "stages23_raw", store_raw, works, ScriptedMockBackend(script_raw), gold
        )
        store_kg = fixture_store()
        script_kg, _ = build_gold_script(include_stage4=False, inject_oov=0.2, seed=seed)
        constrained = run_ablation(
            "stages23_expert_kg",
            store_kg,
            works,
            ScriptedMockBackend(script_kg),
            gold,
            decision_source=gold_vocabulary_expert(store_kg, gold),
        )
        for unit in ("concept", "triplet"):
            assert constrained.micro(unit).precision > raw.micro(unit).precision, unit


def test_metric_identities():
    with criterion("metric-identities"):
        row = score({"a", "b", "c"}, {"b", "c", "d"}, "concept")
        assert row.precision == 2 / 3 and row.recall == 2 / 3
        assert row.f1 == pytest.approx(2 / 3, abs=1e-15)
        rng = random.Random(31337)
        for _ in range(1000):
            pred = {f"e{i}" for i in rng.sample(range(50), rng.randint(0, 30))}
            gold = {f"e{i}" for i in rng.sample(range(50), rng.randint(1, 30))}
            s = score(pred, gold, "concept")
            expected = 2 * s.precision * s.recall / (s.precision + s.recall) if s.precision + s.recall else 0.0
            assert s.f1 == pytest.approx(expected, abs=1e-12)


def test_abstract_reconstruction():
    with criterion("abstract-reconstruction"):
        assert reconstruct_abstract({"Hello": [0], "world": [1]}) == "Hello world"
        assert reconstruct_abstract({"a": [0, 2], "b": [1]}) == "a b a"
        rng = random.Random(777)
        vocabulary = [f"tok{i}" for i in range(40)] + ["Hello", "world", "a", "b"]
        for _ in range(100):
            text = " ".join(rng.choice(vocabulary) for _ in range(rng.randint(1, 80)))
            assert reconstruct_abstract(invert_abstract(text)) == text


def test_share_statistics():
    with criterion("share-statistics"):
        from fractions import Fraction

        from conceptpaths.analytics import (
            PrevalenceRecord,
            innovation_rate,
            region_share,
        )
        from conceptpaths.kgstore import ConceptEdge, InnovationAnnotation
        from conceptpaths.paths import (
            ConceptPath,
            edge_level_gap_stats,
            level_span_matrix,
            path_key,
            path_length_distribution,
        )
        from helpers import build_store

        def mk(nodes, levels):
            return ConceptPath("w", tuple(nodes), levels[0], levels[-1], path_key(nodes))

        dist = path_length_distribution(
            [mk("ab", [0, 1]), mk("cd", [0, 1]), mk("efg", [0, 1, 2]), mk("hijkl", [0, 1, 2, 3, 4])]
        )
        assert dist.share_len_2_3 == Fraction(3, 4)

        matrix = level_span_matrix([mk("ab", [0, 1]), mk("cd", [2, 4])])
        assert matrix.counts == {(0, 1): 1, (2, 4): 1}
        assert matrix.share_levels_0_3 == Fraction(1, 2)

        store = build_store([("a", "a", 0), ("b", "b", 1), ("c", "c", 1), ("d", "d", 2), ("e", "e", 4)])
        gaps = edge_level_gap_stats(
            [ConceptEdge("a", "b"), ConceptEdge("c", "d"), ConceptEdge("b", "e")], store
        )
        assert gaps.share_gap_le_2 == Fraction(2, 3)
        assert gaps.share_touching_levels_0_2 == Fraction(1)

        records = [
            PrevalenceRecord("k0", "concept", 1, prevalence(1), "low"),
            PrevalenceRecord("k1", "concept", 5, prevalence(5), "high"),
            PrevalenceRecord("k2", "concept", 6, prevalence(6), "high"),
            PrevalenceRecord("k3", "concept", 7, prevalence(7), "high"),
        ]
        assert region_share(records, {"k0", "k1", "k2", "k3"}) == Fraction(1, 4)

        low_paths = [
            ConceptPath(f"w{i}", ("x", "y"), 0, 1, "x>y") for i in range(10)
        ]
        annotations = [InnovationAnnotation(f"w{i}", "x", "t") for i in range(5)]
        path_records = [PrevalenceRecord("x>y", "path", 10, prevalence(10), "low")]
        rates = innovation_rate(low_paths, annotations, path_records)
        assert rates.rate_low == Fraction(1, 2)
    if NSU_WORKSPACE and os.path.isdir(NSU_WORKSPACE):
        with criterion("share-statistics-nsu-dataset"):
            report_path = os.path.join(NSU_WORKSPACE, "report.json")
            assert os.path.exists(report_path), "run the analyze subcommands over the dataset first"
            report = json.loads(open(report_path).read())
            targets = {
                "share_paths_len_2_3": 0.8428,
                "share_spans_levels_0_3": 0.7637,
                "share_edge_gap_le_2": 0.8940,
                "share_edges_touching_levels_0_2": 0.9248,
                "share_innovative_concepts_low": 0.2099,
                "share_noninnovative_concepts_low": 0.5333,
                "share_innovative_paths_low": 0.9027,
                "share_noninnovative_paths_low": 0.8479,
                "innovation_rate_low": 0.577,
                "innovation_rate_high": 0.232,
                "share_innovative_paths_in_low": 0.8377,
            }
            for key, target in targets.items():
                assert abs(report[key] - target) <= 0.005, key
    else:
        _dataset_note("share-statistics-nsu-dataset")
