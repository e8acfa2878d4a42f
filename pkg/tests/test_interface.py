import json
import threading

import pytest
from fastapi.testclient import TestClient

from conceptpaths import review
from conceptpaths.cli import main
from conceptpaths.kgstore import Concept, Store, Work, load_workspace, save_workspace
from conceptpaths.server import create_app
from fixtures import HAND_GOLD_PATHS, build_gold_script, fixture_gold, fixture_store
from conceptpaths.evalharness import save_gold


# -- CLI ------------------------------------------------------------------------


def _fixture_workspace(tmp_path) -> str:
    ws = tmp_path / "ws"
    save_workspace(fixture_store(), str(ws))
    return str(ws)


def test_cli_unknown_flag_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(["-w", str(tmp_path), "clean", "--definitely-not-a-flag"])
    assert exc_info.value.code == 2


def test_cli_schema_mismatch_exits_3(tmp_path):
    store = Store()
    store.meta["schema_version"] = 99
    save_workspace(store, str(tmp_path / "bad"))
    assert main(["-w", str(tmp_path / "bad"), "clean"]) == 3


def test_cli_paths_extract_on_empty_workspace(tmp_path, capsys):
    ws = tmp_path / "empty"
    ws.mkdir()
    assert main(["-w", str(ws), "paths", "extract"]) == 0
    captured = capsys.readouterr()
    assert "0 paths" in captured.out
    assert "warning" in captured.err


def test_cli_clean_then_extract_then_analyze(tmp_path, capsys):
    ws = _fixture_workspace(tmp_path)
    assert main(["-w", ws, "clean"]) == 0
    assert main(["-w", ws, "paths", "extract"]) == 0
    assert main(["-w", ws, "analyze", "prevalence"]) == 0
    assert main(["-w", ws, "analyze", "spans"]) == 0
    assert main(["-w", ws, "analyze", "innovation"]) == 0
    report = json.loads((tmp_path / "ws" / "report.json").read_text())
    assert report["median_path_prevalence"] == pytest.approx(0.6931471805599453)
    assert 0 < report["share_paths_len_2_3"] <= 1
    assert "innovation_rate_low" in report
    assert (tmp_path / "ws" / "prevalence_concept.csv").exists()
    store = load_workspace(ws)
    assert len(store.paths) == sum(len(v) for v in HAND_GOLD_PATHS.values())


def test_cli_analyze_powerlaw_recovers_exact_fit(tmp_path):
    ws = tmp_path / "pl"
    store = Store()
    # concept frequencies 24, 12, 8, 6 = 24 * r^-1 exactly
    for i, freq in enumerate([24, 12, 8, 6], start=1):
        store.add_concept(Concept.make(f"c{i}", f"Concept {i}", 0))
    counts = {"c1": 24, "c2": 12, "c3": 8, "c4": 6}
    work_no = 0
    for cid, freq in counts.items():
        for _ in range(freq):
            work_no += 1
            store.add_work(
                Work(
                    id=f"w{work_no:03d}",
                    title="t",
                    abstract_text="a",
                    publication_date="2020-01-01",
                    authors=("A",),
                    concept_ids=frozenset({cid}),
                )
            )
    save_workspace(store, str(ws))
    assert main(["-w", str(ws), "analyze", "powerlaw"]) == 0
    report = json.loads((ws / "report.json").read_text())
    assert report["powerlaw_exponent"] == pytest.approx(-1.0, abs=1e-9)
    assert report["powerlaw_coefficient"] == pytest.approx(24.0, abs=1e-6)
    assert report["powerlaw_r_squared"] == pytest.approx(1.0, abs=1e-12)
    assert (ws / "rank_frequency.csv").read_text().splitlines()[0] == "rank,concept_id,frequency"


def test_cli_pipeline_run_with_mock_script(tmp_path, capsys):
    ws = _fixture_workspace(tmp_path)
    script, _ = build_gold_script()
    script_path = tmp_path / "gold.jsonl"
    script_path.write_text("\n".join(json.dumps(line) for line in script))
    assert main(["-w", ws, "pipeline", "run", "--backend", "mock", "--script", str(script_path)]) == 0
    store = load_workspace(ws)
    assert store.paths, "paths.jsonl should be populated"
    assert all(state["status"] == "completed" for state in store.pipeline_states.values())
    assert "10 completed" in capsys.readouterr().out


def test_cli_evaluate_end_to_end(tmp_path, capsys):
    ws = _fixture_workspace(tmp_path)
    gold_dir = tmp_path / "gold"
    save_gold(fixture_gold(), str(gold_dir))
    script, _ = build_gold_script()
    script_path = tmp_path / "gold.jsonl"
    script_path.write_text("\n".join(json.dumps(line) for line in script))
    code = main(
        [
            "-w", ws, "evaluate",
            "--config", "end_to_end",
            "--gold", str(gold_dir),
            "--backend", "mock",
            "--script", str(script_path),
        ]
    )
    assert code == 0
    report = json.loads((tmp_path / "ws" / "eval_report.json").read_text())
    assert report["units"]["path"]["micro"]["f1"] == 1.0
    assert "F1=1.0000" in capsys.readouterr().out


def test_cli_mock_backend_requires_script(tmp_path):
    with pytest.raises(SystemExit):
        main(["-w", str(tmp_path), "pipeline", "run", "--backend", "mock"])


def test_cli_runtime_error_exits_1_with_message(tmp_path, capsys):
    (tmp_path / "ws").mkdir()
    (tmp_path / "ws" / "concepts.jsonl").write_text('{"id": "A", "name": "Alpha"}\n')
    assert main(["-w", str(tmp_path / "ws"), "clean"]) == 1
    assert "normalized_name" in capsys.readouterr().err


def test_cli_scripted_mock_forces_sequential(tmp_path, capsys):
    ws = _fixture_workspace(tmp_path)
    script, _ = build_gold_script()
    script_path = tmp_path / "gold.jsonl"
    script_path.write_text("\n".join(json.dumps(line) for line in script))
    code = main([
        "-w", ws, "pipeline", "run", "--backend", "mock",
        "--script", str(script_path), "--parallel", "4",
    ])
    captured = capsys.readouterr()
    assert code == 0
    assert "forcing --parallel 1" in captured.err
    assert "10 completed" in captured.out


def test_cli_composability_reproduces_report(tmp_path):
    ws1 = tmp_path / "a"
    ws2 = tmp_path / "b"
    for ws in (ws1, ws2):
        save_workspace(fixture_store(), str(ws))
        assert main(["-w", str(ws), "clean"]) == 0
        assert main(["-w", str(ws), "paths", "extract"]) == 0
        assert main(["-w", str(ws), "analyze", "spans"]) == 0
    assert (ws1 / "report.json").read_text() == (ws2 / "report.json").read_text()


# -- review API -------------------------------------------------------------------


def _app_with_items(tmp_path, n_refinement=3):
    store = fixture_store()
    items = []
    for i in range(n_refinement):
        items.append(
            review.enqueue(
                store,
                "refinement",
                "w01",
                {"pair": ["Physics", "Neutrino oscillation"], "proposed_intermediate": f"Mid {i}", "action": "add"},
            )
        )
    pair_item = review.enqueue(
        store, "pair", "w02", {"pair": ["Computer science", "Quantum widgets"], "unmatched": ["specific"]}
    )
    ws = tmp_path / "served"
    save_workspace(store, str(ws))
    app = create_app(str(ws), store=store)
    return app, store, items, pair_item


def test_queue_filtering_and_order(tmp_path):
    app, _store, items, _pair = _app_with_items(tmp_path)
    client = TestClient(app)
    response = client.get("/api/queue", params={"kind": "refinement", "state": "pending"})
    assert response.status_code == 200
    body = response.json()
    assert [i["id"] for i in body["items"]] == [i.id for i in items]
    assert body["total"] == 3
    everything = client.get("/api/queue").json()
    assert everything["total"] == 4


def test_queue_pagination_cursor(tmp_path):
    app, *_ = _app_with_items(tmp_path, n_refinement=3)
    client = TestClient(app)
    first = client.get("/api/queue", params={"limit": 2}).json()
    assert len(first["items"]) == 2 and first["next_cursor"] == "2"
    second = client.get("/api/queue", params={"limit": 2, "cursor": first["next_cursor"]}).json()
    assert len(second["items"]) == 2
    assert second["next_cursor"] is None
    ids = [i["id"] for i in first["items"] + second["items"]]
    assert len(set(ids)) == 4


def test_item_detail_includes_context_and_legal_actions(tmp_path):
    app, _store, items, pair_item = _app_with_items(tmp_path)
    client = TestClient(app)
    detail = client.get(f"/api/items/{items[0].id}").json()
    assert detail["kind"] == "refinement"
    assert detail["context"]["legal_actions"] == ["add", "delete", "keep"]
    assert detail["context"]["abstract"]
    pair_detail = client.get(f"/api/items/{pair_item.id}").json()
    assert pair_detail["context"]["legal_actions"] == ["annotate", "approve", "reject"]
    assert client.get("/api/items/nope").status_code == 404


def test_decision_approve_then_conflict(tmp_path):
    app, store, _items, pair_item = _app_with_items(tmp_path)
    client = TestClient(app)
    ok = client.post(f"/api/items/{pair_item.id}/decision", json={"action": "approve"})
    assert ok.status_code == 200
    assert ok.json()["item"]["state"] == "approved"
    assert any(e.item_id == pair_item.id and e.action == "approve" for e in store.review_journal)
    again = client.post(f"/api/items/{pair_item.id}/decision", json={"action": "reject"})
    assert again.status_code == 409


def test_illegal_action_for_kind_is_422(tmp_path):
    app, _store, items, pair_item = _app_with_items(tmp_path)
    client = TestClient(app)
    assert client.post(f"/api/items/{items[0].id}/decision", json={"action": "approve"}).status_code == 422
    assert client.post(f"/api/items/{pair_item.id}/decision", json={"action": "add"}).status_code == 422
    assert client.post("/api/items/missing/decision", json={"action": "approve"}).status_code == 404


def test_concurrent_decisions_yield_one_200_one_409(tmp_path):
    app, store, items, _pair = _app_with_items(tmp_path)
    client = TestClient(app)
    target = items[1].id
    codes: list[int] = []
    barrier = threading.Barrier(2)

    def fire(action):
        barrier.wait()
        codes.append(client.post(f"/api/items/{target}/decision", json={"action": action}).status_code)

    threads = [threading.Thread(target=fire, args=(a,)) for a in ("keep", "delete")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(codes) == [200, 409]
    assert sum(1 for e in store.review_journal if e.item_id == target) == 1


def test_decision_unblocks_parked_work(tmp_path):
    store = fixture_store()
    item = review.enqueue(store, "pair", "w03", {"pair": ["Biology", "Mystery"], "unmatched": ["specific"]})
    store.set_pipeline_state("w03", {"status": "awaiting_review", "stage": "stage2", "counters": {}})
    ws = tmp_path / "parked"
    save_workspace(store, str(ws))
    app = create_app(str(ws), store=store)
    client = TestClient(app)
    response = client.post(f"/api/items/{item.id}/decision", json={"action": "reject"})
    assert response.status_code == 200
    assert response.json()["work_unblocked"] is True
    assert store.pipeline_states["w03"]["status"] == "ready"
    work_view = client.get("/api/works/w03").json()
    assert work_view["status"] == "ready"
    # decision persisted to disk for the next pipeline run
    reloaded = load_workspace(str(ws))
    assert reloaded.review_items[item.id].state == "rejected"


def test_stats_endpoint(tmp_path):
    app, _store, _items, _pair = _app_with_items(tmp_path)
    client = TestClient(app)
    stats = client.get("/api/stats").json()
    assert stats["queue_depth"] == 4
    assert stats["pending_by_kind"] == {"refinement": 3, "pair": 1}
    assert stats["journal_length"] == 0


def test_works_endpoint_404(tmp_path):
    app, *_ = _app_with_items(tmp_path)
    client = TestClient(app)
    assert client.get("/api/works/None").status_code == 404
