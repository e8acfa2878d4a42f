"""Command-line entry point.

Subcommands: ``ingest``, ``clean``, ``paths extract``, ``analyze
<powerlaw|prevalence|innovation|spans>``, ``pipeline run``, ``evaluate``,
``serve``. Every subcommand operates on a workspace directory and writes its
artifacts there. Exit codes: 0 success, 1 runtime failure, 2 usage error
(argparse default), 3 workspace schema mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from typing import Optional

import numpy as np

from . import analytics, evalharness
from .analytics import AnalyticsError
from .evalharness import EvalError
from .ingest import (
    CassetteTransport,
    Checkpoint,
    IngestError,
    IngestQuery,
    IngestReport,
    concepts_from_tags,
    fetch_works,
    filter_complete,
    load_dump,
)
from .kgstore import (
    SchemaMismatchError,
    Store,
    StoreError,
    Work,
    clean_hierarchy,
    load_workspace,
    save_workspace,
)
from .pipeline.backends import BackendError
from .paths import (
    edge_level_gap_stats,
    extract_all,
    level_span_matrix,
    path_length_distribution,
)
from .pipeline.backends import HttpChatBackend, ScriptedMockBackend
from .pipeline.engine import PipelineConfig, PipelineRunner

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_SCHEMA = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conceptpaths", description=__doc__)
    parser.add_argument("-w", "--workspace", default="workspace", help="workspace directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="fetch works from OpenAlex or a local dump")
    p_ingest.add_argument("--institution", help="OpenAlex institution id (e.g. I123456)")
    p_ingest.add_argument("--from", dest="date_from", help="start month, e.g. 2001-01")
    p_ingest.add_argument("--to", dest="date_to", help="end month, e.g. 2025-09")
    p_ingest.add_argument("--min-score", type=float, default=0.0, help="drop concept tags below this score")
    p_ingest.add_argument("--email", default=None, help="polite-pool contact email")
    p_ingest.add_argument("--resume", action="store_true", help="resume from the cursor checkpoint")
    p_ingest.add_argument("--dump", default=None, help="load raw works from local JSONL instead of HTTP")
    p_ingest.add_argument("--cassette", default=None, help="replay a recorded HTTP fixture")
    p_ingest.add_argument("--page-size", type=int, default=200)

    sub.add_parser("clean", help="reduce raw edges to the strict level-ordered hierarchy")

    p_paths = sub.add_parser("paths", help="concept path operations")
    paths_sub = p_paths.add_subparsers(dest="paths_command", required=True)
    p_extract = paths_sub.add_parser("extract", help="enumerate complete paths for every work")
    p_extract.add_argument("--no-singletons", action="store_true", help="exclude length-1 paths")

    p_analyze = sub.add_parser("analyze", help="corpus statistics into report.json + CSV")
    p_analyze.add_argument("kind", choices=["powerlaw", "prevalence", "innovation", "spans"])
    p_analyze.add_argument("--top-k", type=int, default=None, help="restrict the power-law fit to top K ranks")
    p_analyze.add_argument(
        "--per-occurrence", action="store_true", help="repeat samples by frequency in rank tests"
    )

    p_pipe = sub.add_parser("pipeline", help="run the four-stage agent pipeline")
    pipe_sub = p_pipe.add_subparsers(dest="pipeline_command", required=True)
    p_run = pipe_sub.add_parser("run", help="process unprocessed works and resume unblocked ones")
    _backend_flags(p_run)
    p_run.add_argument("--parallel", type=int, default=1)
    p_run.add_argument("--no-singletons", action="store_true")

    p_eval = sub.add_parser("evaluate", help="set-coverage evaluation of a configuration")
    p_eval.add_argument("--config", required=True, choices=list(evalharness.ABLATION_CONFIGS))
    p_eval.add_argument("--gold", required=True, help="directory holding gold_concepts.jsonl / gold_paths.jsonl")
    _backend_flags(p_eval)
    p_eval.add_argument(
        "--auto-expert",
        action="store_true",
        help="answer review items from the gold vocabulary (required by expert configs in batch runs)",
    )

    p_serve = sub.add_parser("serve", help="start the HTTP review service")
    p_serve.add_argument("--port", type=int, default=8400)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--workspace", dest="serve_workspace", default=None, help="workspace to serve (overrides -w)")
    p_serve.add_argument("--static", default=None, help="directory with the built review UI")

    return parser


def _backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["mock", "http"], required=True)
    parser.add_argument("--script", default=None, help="JSONL script for the mock backend")
    parser.add_argument("--endpoint", default=None, help="chat-completions endpoint URL")
    parser.add_argument("--model", default=None, help="model name for the HTTP backend")


def _make_backend(args) -> ScriptedMockBackend | HttpChatBackend:
    if args.backend == "mock":
        if not args.script:
            raise SystemExit("--backend mock requires --script FILE")
        return ScriptedMockBackend.from_jsonl(args.script)
    if not args.endpoint or not args.model:
        raise SystemExit("--backend http requires --endpoint URL and --model NAME")
    return HttpChatBackend(endpoint=args.endpoint, model=args.model)


def _load(workspace: str) -> Store:
    return load_workspace(workspace)


def _share(value: Optional[Fraction]) -> Optional[float]:
    return analytics.render_share(value)


def _update_report(workspace: str, updates: dict) -> None:
    path = os.path.join(workspace, "report.json")
    report = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    report.update(updates)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands --------------------------------------------------------------


def cmd_ingest(args) -> int:
    store = _load(args.workspace)
    report = IngestReport()
    if args.dump:
        raw_stream = load_dump(args.dump)
    else:
        for flag, name in ((args.institution, "--institution"), (args.date_from, "--from"), (args.date_to, "--to")):
            if not flag:
                raise SystemExit(f"{name} is required unless --dump is given")
        query = IngestQuery(
            institution=args.institution,
            date_from=args.date_from,
            date_to=args.date_to,
            page_size=args.page_size,
            polite_email=args.email,
        )
        transport = CassetteTransport(args.cassette) if args.cassette else None
        checkpoint = Checkpoint(os.path.join(args.workspace, "ingest_checkpoint.json"))
        os.makedirs(args.workspace, exist_ok=True)
        raw_stream = fetch_works(query, transport, checkpoint, resume=args.resume, report=report)

    raw_works = list(raw_stream)
    for concept in concepts_from_tags(raw_works).values():
        if concept.id not in store.concepts:
            store.add_concept(concept)
    for raw in raw_works:
        out = filter_complete(raw, min_score=args.min_score)
        if isinstance(out, Work):
            store.add_work(out)
            report.accepted += 1
        else:
            report.tally_rejection(out.reason)
    save_workspace(store, args.workspace)
    print(
        f"ingested {report.accepted} works "
        f"({sum(report.rejections.values())} rejected: {report.rejections}, "
        f"{report.malformed} malformed)"
    )
    return EXIT_OK


def cmd_clean(args) -> int:
    store = _load(args.workspace)
    cleaned, report = clean_hierarchy(store.edges, store.concepts)
    store.replace_edges(cleaned)
    save_workspace(store, args.workspace)
    _update_report(args.workspace, {"clean_rejections": report.as_dict(), "cleaned_edges": len(cleaned)})
    print(f"cleaned edges: {len(cleaned)} kept, {report.self_loop} self-loops, {report.intra_level} intra-level")
    return EXIT_OK


def cmd_paths_extract(args) -> int:
    store = _load(args.workspace)
    if not store.works:
        print("warning: workspace has no works; nothing to extract", file=sys.stderr)
        save_workspace(store, args.workspace)
        print("extracted 0 paths")
        return EXIT_OK
    paths = extract_all(store, include_singletons=not args.no_singletons)
    store.replace_paths(paths)
    save_workspace(store, args.workspace)
    print(f"extracted {len(paths)} paths across {len(store.works)} works")
    return EXIT_OK


def _concept_frequencies(store: Store) -> dict[str, int]:
    freq: dict[str, int] = {}
    for work in store.works.values():
        for cid in work.concept_ids:
            freq[cid] = freq.get(cid, 0) + 1
    return freq


def _path_frequencies(store: Store) -> dict[str, int]:
    freq: dict[str, int] = {}
    for p in store.paths:
        freq[p.key] = freq.get(p.key, 0) + 1
    return freq


def cmd_analyze(args) -> int:
    store = _load(args.workspace)
    ws = args.workspace
    if args.kind == "powerlaw":
        freq = _concept_frequencies(store)
        ranked = analytics.rank_frequency(freq)
        analytics.write_rank_frequency_csv(os.path.join(ws, "rank_frequency.csv"), ranked)
        fit_range = (1, args.top_k) if args.top_k else None
        fit = analytics.fit_power_law([(r, f) for r, _, f in ranked], fit_range)
        _update_report(
            ws,
            {
                "powerlaw_coefficient": fit.coefficient,
                "powerlaw_exponent": fit.exponent,
                "powerlaw_r_squared": fit.r_squared,
                "powerlaw_fit_range": list(fit.fit_range),
            },
        )
        print(f"power-law fit: C={fit.coefficient:.4f} a={fit.exponent:.4f} R2={fit.r_squared:.4f}")
        return EXIT_OK

    if args.kind == "prevalence":
        concept_records = analytics.prevalence_table(_concept_frequencies(store), "concept")
        path_records = analytics.prevalence_table(_path_frequencies(store), "path")
        analytics.write_prevalence_csv(os.path.join(ws, "prevalence_concept.csv"), concept_records)
        analytics.write_prevalence_csv(os.path.join(ws, "prevalence_path.csv"), path_records)
        updates: dict = {}
        if concept_records:
            updates["median_concept_prevalence"] = analytics.median_split(concept_records)
        if path_records:
            updates["median_path_prevalence"] = analytics.median_split(path_records)
        _update_report(ws, updates)
        print(
            f"prevalence tables written ({len(concept_records)} concepts, {len(path_records)} paths)"
        )
        return EXIT_OK

    if args.kind == "spans":
        dist = path_length_distribution(store.paths)
        matrix = level_span_matrix(store.paths)
        gaps = edge_level_gap_stats(store.cleaned_edges(), store)
        with open(os.path.join(ws, "path_length_histogram.csv"), "w", encoding="utf-8") as fh:
            fh.write("length,count\n")
            for length in sorted(dist.histogram):
                fh.write(f"{length},{dist.histogram[length]}\n")
        with open(os.path.join(ws, "level_span_matrix.csv"), "w", encoding="utf-8") as fh:
            fh.write("start_level,end_level,count\n")
            for (start, end) in sorted(matrix.counts):
                fh.write(f"{start},{end},{matrix.counts[(start, end)]}\n")
        with open(os.path.join(ws, "edge_gap_histogram.csv"), "w", encoding="utf-8") as fh:
            fh.write("gap,count\n")
            for gap in sorted(gaps.histogram):
                fh.write(f"{gap},{gaps.histogram[gap]}\n")
        _update_report(
            ws,
            {
                "total_paths": dist.total,
                "share_paths_len_2_3": _share(dist.share_len_2_3),
                "share_spans_levels_0_3": _share(matrix.share_levels_0_3),
                "share_edge_gap_le_2": _share(gaps.share_gap_le_2),
                "share_edges_touching_levels_0_2": _share(gaps.share_touching_levels_0_2),
            },
        )
        print(f"span statistics over {dist.total} paths written")
        return EXIT_OK

    # innovation
    concept_records = analytics.prevalence_table(_concept_frequencies(store), "concept")
    path_records = analytics.prevalence_table(_path_frequencies(store), "path")
    innovative_concepts = {a.concept_id for a in store.annotations}
    innovative_instances = analytics.innovative_path_instances(store.paths, store.annotations)
    innovative_path_keys = {store.paths[i].key for i in innovative_instances}
    all_path_keys = {p.key for p in store.paths}
    updates = {
        "share_innovative_concepts_low": _share(
            analytics.region_share(concept_records, innovative_concepts)
        ),
        "share_noninnovative_concepts_low": _share(
            analytics.region_share(concept_records, set(_concept_frequencies(store)) - innovative_concepts)
        ),
        "share_innovative_paths_low": _share(analytics.region_share(path_records, innovative_path_keys)),
        "share_noninnovative_paths_low": _share(
            analytics.region_share(path_records, all_path_keys - innovative_path_keys)
        ),
    }
    rates = analytics.innovation_rate(store.paths, store.annotations, path_records)
    updates["innovation_rate_low"] = _share(rates.rate_low)
    updates["innovation_rate_high"] = _share(rates.rate_high)
    updates["share_innovative_paths_in_low"] = _share(rates.share_of_innovative_in_low)

    for kind, records, predicate in (
        ("concepts", concept_records, innovative_concepts),
        ("paths", path_records, innovative_path_keys),
    ):
        inside, outside = analytics.split_samples(records, predicate, per_occurrence=args.per_occurrence)
        if inside and outside:
            test = analytics.mann_whitney(inside, outside)
            updates[f"mw_{kind}_u"] = test.u_statistic
            updates[f"mw_{kind}_z"] = test.z_score
            updates[f"mw_{kind}_p"] = test.p_value
            updates[f"mw_{kind}_r"] = test.effect_size_r
        values_in = [r.prevalence for r in records if r.item_key in predicate]
        values_out = [r.prevalence for r in records if r.item_key not in predicate]
        for label, values in ((f"{kind}_innovative", values_in), (f"{kind}_noninnovative", values_out)):
            if len(values) >= 2 and len(set(values)) > 1:
                grid = np.linspace(min(values) - 1.0, max(values) + 1.0, 512)
                x, density = analytics.kde_series(values, grid)
                analytics.write_kde_csv(os.path.join(ws, f"kde_{label}.csv"), x, density)
    _update_report(ws, updates)
    print("innovation statistics written")
    return EXIT_OK


def cmd_pipeline_run(args) -> int:
    store = _load(args.workspace)
    backend = _make_backend(args)
    parallel = args.parallel
    if isinstance(backend, ScriptedMockBackend) and parallel > 1:
        # An ordered script cannot serve interleaved works.
        print("warning: mock scripts are consumed in order; forcing --parallel 1", file=sys.stderr)
        parallel = 1
    config = PipelineConfig(parallel=parallel, include_singletons=not args.no_singletons)
    runner = PipelineRunner(store, backend, config)
    to_resume = [
        work_id
        for work_id, state in sorted(store.pipeline_states.items())
        if state.get("status") == "ready"
    ]
    fresh = [w for wid, w in sorted(store.works.items()) if wid not in store.pipeline_states]
    results = {}
    for work_id in to_resume:
        results[work_id] = runner.resume_work(work_id)
    results.update(runner.run_corpus(fresh))

    completed = [r for r in results.values() if r.status == "completed"]
    parked = [r for r in results.values() if r.status == "awaiting_review"]
    failed = [r for r in results.values() if r.status == "failed"]
    touched = set(results)
    kept = [p for p in store.paths if p.work_id not in touched]
    for result in completed:
        kept.extend(result.paths)
    store.replace_paths(kept)
    save_workspace(store, args.workspace)
    print(
        f"pipeline: {len(completed)} completed, {len(parked)} awaiting review, {len(failed)} failed"
    )
    for result in failed:
        print(f"  failed {result.work_id}: {result.error}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_FAILURE


def cmd_evaluate(args) -> int:
    store = _load(args.workspace)
    backend = _make_backend(args)
    gold = evalharness.load_gold(args.gold)
    decision_source = evalharness.gold_vocabulary_expert(store, gold) if args.auto_expert else None
    works = [w for w in store.works.values() if w.id in gold.concepts]
    if not works:
        raise SystemExit("no workspace works have gold annotations")
    report = evalharness.run_ablation(
        args.config, store, sorted(works, key=lambda w: w.id), backend, gold, decision_source=decision_source
    )
    evalharness.write_report(report, args.workspace)
    for unit in ("concept", "triplet", "path"):
        micro = report.micro(unit)
        print(f"{args.config} {unit}: P={micro.precision:.4f} R={micro.recall:.4f} F1={micro.f1:.4f}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import serve

    workspace = args.serve_workspace or args.workspace
    serve(workspace, args.port, host=args.host, static_dir=args.static)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "clean":
            return cmd_clean(args)
        if args.command == "paths":
            return cmd_paths_extract(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "pipeline":
            return cmd_pipeline_run(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "serve":
            return cmd_serve(args)
        parser.error(f"unknown command {args.command}")
    except SchemaMismatchError as exc:
        print(f"workspace schema mismatch: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (StoreError, IngestError, BackendError, AnalyticsError, EvalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
