"""Session lifecycle, page jobs, caching, logging, and the HTTP API."""
from __future__ import annotations

import json
import re
import time

import pytest
from fastapi.testclient import TestClient

from conftest import CountingBackend, StubBackend
from tasklens.api import create_app
from tasklens.backends import LexicalBackend
from tasklens.errors import (
    BackendUnavailable, EmptyTask, JobNotDone, MissingScores, SessionCompleted,
    UnknownPage, UnknownSession,
)
from tasklens.service import JsonlLogStore, MemoryLogStore, SessionManager

TASK = "I want to buy the cheapest 4 pack low sugar vanilla greek yogurt"

SMALL_PAGE = """
<body>
  <h1>Greek Yogurt</h1>
  <div class="card"><p>Vanilla Greek Yogurt 4 pack</p><p>$4.58</p></div>
  <div class="card"><p>Plain tub</p><p>$5.12</p></div>
  <footer><p>Contact us</p></footer>
</body>
"""


def make_manager(**kwargs) -> SessionManager:
    kwargs.setdefault("synchronous", True)
    return SessionManager(LexicalBackend(), **kwargs)


def wait_done(manager: SessionManager, page_id: str, timeout: float = 10.0) -> list[str]:
    statuses = []
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        status = manager.get_job(page_id).status
        if not statuses or statuses[-1] != status:
            statuses.append(status)
        if status in ("done", "error"):
            return statuses
        time.sleep(0.005)
    raise TimeoutError(f"job stuck in {statuses}")


class TestSessionLifecycle:
    def test_create_session(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        assert session.status == "active"
        assert session.breakdown.entity

    def test_empty_task_rejected(self):
        with pytest.raises(EmptyTask):
            make_manager().create_session("   ")

    def test_backend_down_session_not_created(self):
        class DownBackend(StubBackend):
            def breakdown(self, task):
                raise BackendUnavailable("scorer offline")

        manager = SessionManager(DownBackend(), synchronous=True)
        with pytest.raises(BackendUnavailable):
            manager.create_session(TASK)
        assert manager._sessions == {}

    def test_unknown_session(self):
        with pytest.raises(UnknownSession):
            make_manager().submit_page("nope", "u", SMALL_PAGE)

    def test_complete_blocks_submits(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        manager.complete_session(session.session_id)
        with pytest.raises(SessionCompleted):
            manager.submit_page(session.session_id, "u", SMALL_PAGE)

    def test_double_complete_idempotent(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        first = manager.complete_session(session.session_id)
        second = manager.complete_session(session.session_id)
        assert first["status"] == second["status"] == "completed"

    def test_final_stats_mean_latency(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        for _ in range(3):
            manager.submit_page(session.session_id, "u", SMALL_PAGE)
        stats = manager.complete_session(session.session_id)
        latencies = [
            j.stats.latency_ms for j in manager._session_jobs(session.session_id)]
        assert stats["pages"] == 3
        assert stats["mean_latency_ms"] == pytest.approx(sum(latencies) / 3)


class TestPageJobs:
    def test_status_transitions_observable(self):
        manager = SessionManager(LexicalBackend(), synchronous=False, max_workers=2)
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "http://x", SMALL_PAGE)
        statuses = wait_done(manager, page_id)
        allowed = ["queued", "processing", "done"]
        assert statuses[-1] == "done"
        assert statuses == [s for s in allowed if s in statuses]
        manager.shutdown()

    def test_job_error_on_unparseable_page(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", "<!-- nothing -->")
        job = manager.get_job(page_id)
        assert job.status == "error"
        assert job.error["code"] == "empty_document"

    def test_unknown_page(self):
        with pytest.raises(UnknownPage):
            make_manager().get_job("missing")

    def test_render_before_done_rejected(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", "")
        with pytest.raises(JobNotDone):
            manager.get_render(page_id, "gradient")

    def test_pruned_fraction_matches_independent_count(self):
        parts = [f"<span>x{i % 7}</span>" for i in range(80)]
        parts += [f"<span>keep me {i}</span>" for i in range(20)]
        html = "<body>" + "".join(parts) + "</body>"
        scanned = re.findall(r">([^<>]+)<", html)
        expected = 1 - sum(1 for t in scanned if len(t.strip()) >= 3) / len(scanned)

        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", html)
        job = manager.get_job(page_id)
        assert job.status == "done"
        assert job.stats.pruned_fraction == pytest.approx(expected)


class TestRenderCache:
    def test_mode_changes_make_zero_backend_calls(self):
        counting = CountingBackend(LexicalBackend())
        manager = SessionManager(counting, synchronous=True)
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        calls_after_processing = counting.total_calls
        manager.get_render(page_id, "gradient")
        manager.get_render(page_id, "opacity")
        manager.get_render(page_id, "filter", threshold=40)
        manager.get_render(page_id, "filter", threshold=70)
        assert counting.total_calls == calls_after_processing

    def test_render_returns_scores_and_html(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        html, scores = manager.get_render(page_id, "gradient")
        assert "data-tm-id" in html
        assert len(scores) > 0

    def test_cache_coherence_repeated_renders_equal(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        _, first = manager.get_render(page_id, "filter", threshold=60)
        _, second = manager.get_render(page_id, "filter", threshold=10)
        assert first == second

    def test_threshold_widening_superset(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        html70, _ = manager.get_render(page_id, "filter", threshold=70)
        html40, _ = manager.get_render(page_id, "filter", threshold=40)

        def hidden_ids(html: str) -> set[int]:
            return {
                int(m.group(1))
                for m in re.finditer(r'data-tm-id="(\d+)"[^>]*aria-hidden="true"', html)
            }

        assert hidden_ids(html40) <= hidden_ids(html70)

    def test_filter_at_100_keeps_only_root_chain(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        _, scores = manager.get_render(page_id, "gradient")
        assert all(e.score < 100 for e in scores.entries.values())
        html, _ = manager.get_render(page_id, "filter", threshold=100)
        visible = re.findall(r'<(\w+)[^>]*data-tm-id="\d+"(?![^>]*aria-hidden)[^>]*>', html)
        assert visible == ["body"]


class TestTaskUpdate:
    def test_update_invalidates_cached_scores(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        manager.get_render(page_id, "gradient")
        manager.update_task(session.session_id, "find a brownie mix under $4")
        with pytest.raises(MissingScores):
            manager.get_render(page_id, "gradient")

    def test_same_text_update_still_invalidates(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        page_id = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        manager.update_task(session.session_id, TASK)
        with pytest.raises(MissingScores):
            manager.get_render(page_id, "gradient")

    def test_update_recomputes_breakdown(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        breakdown = manager.update_task(session.session_id, "show me pasta recipes with shrimp")
        assert "pasta" in breakdown.entity
        assert session.breakdown is breakdown

    def test_update_completed_session_rejected(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        manager.complete_session(session.session_id)
        with pytest.raises(SessionCompleted):
            manager.update_task(session.session_id, "new task")

    def test_resubmission_after_update_rescores(self):
        manager = make_manager()
        session = manager.create_session(TASK)
        old_page = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        manager.update_task(session.session_id, "find chocolate brownie mix")
        new_page = manager.submit_page(session.session_id, "u", SMALL_PAGE)
        html, scores = manager.get_render(new_page, "gradient")
        assert len(scores) > 0
        with pytest.raises(MissingScores):
            manager.get_render(old_page, "gradient")


class TestLogStore:
    def test_replay_reconstructs_all_triples(self, tmp_path):
        store = JsonlLogStore(tmp_path / "log.jsonl")
        manager = SessionManager(LexicalBackend(), log_store=store, synchronous=True)
        session = manager.create_session(TASK)
        pages = {}
        for url in ("http://a", "http://b", "http://c"):
            page_id = manager.submit_page(session.session_id, url, SMALL_PAGE)
            _, scores = manager.get_render(page_id, "gradient")
            pages[url] = scores.to_wire()

        records = store.replay()
        assert len(records) == 3
        for record in records:
            assert record["task"] == TASK
            assert record["scores"] == pages[record["url"]]
            assert set(record["counts"]) == {"text", "image", "svg", "iframe"}

    def test_append_only_file_grows(self, tmp_path):
        path = tmp_path / "log.jsonl"
        store = JsonlLogStore(path)
        store.append({"a": 1})
        first = path.read_text()
        store.append({"b": 2})
        assert path.read_text().startswith(first)

    def test_memory_store_replays_copies(self):
        store = MemoryLogStore()
        store.append({"a": 1})
        replayed = store.replay()
        replayed[0]["a"] = 99
        assert store.replay()[0]["a"] == 1


class TestHttpApi:
    @pytest.fixture
    def client(self):
        manager = SessionManager(LexicalBackend(), synchronous=True)
        return TestClient(create_app(manager))

    def _create(self, client) -> str:
        response = client.post("/v1/sessions", json={"task": TASK})
        assert response.status_code == 201
        body = response.json()
        assert set(body["breakdown"]) == {"entity", "constraints", "actions",
                                          "default", "fallback"}
        return body["session_id"]

    def _submit(self, client, session_id: str) -> str:
        response = client.post(f"/v1/sessions/{session_id}/pages",
                               json={"url": "http://x", "html": SMALL_PAGE})
        assert response.status_code == 202
        return response.json()["page_id"]

    def test_full_flow(self, client):
        session_id = self._create(client)
        page_id = self._submit(client, session_id)

        status = client.get(f"/v1/pages/{page_id}").json()
        assert status["status"] == "done"
        assert status["stats"]["text_count"] > 0

        render = client.get(f"/v1/pages/{page_id}/render",
                            params={"mode": "filter", "threshold": 50})
        assert render.status_code == 200
        body = render.json()
        assert "data-tm-id" in body["html"]
        assert body["scores"]
        assert body["threshold"] == 50

    def test_empty_task_400(self, client):
        response = client.post("/v1/sessions", json={"task": "  "})
        assert response.status_code == 400
        body = response.json()
        assert body["code"] == "empty_task"
        assert body["retryable"] is False

    def test_unknown_session_404(self, client):
        response = client.post("/v1/sessions/nope/pages",
                               json={"url": "", "html": SMALL_PAGE})
        assert response.status_code == 404
        assert response.json()["code"] == "unknown_session"

    def test_unknown_page_404(self, client):
        assert client.get("/v1/pages/missing").status_code == 404

    def test_invalid_mode_400(self, client):
        session_id = self._create(client)
        page_id = self._submit(client, session_id)
        response = client.get(f"/v1/pages/{page_id}/render", params={"mode": "sparkle"})
        assert response.status_code == 400
        assert response.json()["code"] == "invalid_argument"

    def test_update_task_then_render_409(self, client):
        session_id = self._create(client)
        page_id = self._submit(client, session_id)
        response = client.post(f"/v1/sessions/{session_id}/task",
                               json={"task": "find hiking boots"})
        assert response.status_code == 200
        render = client.get(f"/v1/pages/{page_id}/render", params={"mode": "gradient"})
        assert render.status_code == 409
        assert render.json()["code"] == "missing_scores"

    def test_complete_then_submit_409(self, client):
        session_id = self._create(client)
        done = client.post(f"/v1/sessions/{session_id}/complete")
        assert done.status_code == 200
        assert done.json()["status"] == "completed"
        response = client.post(f"/v1/sessions/{session_id}/pages",
                               json={"url": "", "html": SMALL_PAGE})
        assert response.status_code == 409
        assert response.json()["code"] == "session_completed"

    def test_backend_down_503(self):
        class DownBackend(StubBackend):
            def breakdown(self, task):
                raise BackendUnavailable("offline")

        client = TestClient(create_app(SessionManager(DownBackend(), synchronous=True)))
        response = client.post("/v1/sessions", json={"task": TASK})
        assert response.status_code == 503
        body = response.json()
        assert body["code"] == "backend_unavailable"
        assert body["retryable"] is True
