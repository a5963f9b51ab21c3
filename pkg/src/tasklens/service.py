"""Sessions, asynchronous page jobs, score caching, and the append-only log.

A session pins one task (and its breakdown) across any number of pages.
Scores are cached per page and reused for every mode or threshold change;
updating the task invalidates every cached score in the session because
relevance is task-relative. One record per processed page is appended to
the log store.
"""
from __future__ import annotations

import json
import statistics
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dom import ElementTree, parse_document, serialize
from .errors import (
    JobNotDone, MissingScores, SessionCompleted, TaskLensError, UnknownPage,
    UnknownSession,
)
from .pipeline import PageStats, score_page
from .rendering import RenderConfig, rerender
from .scoring import ScoreMap, ScoringConfig, TaskBreakdown, decompose_task

_STATUS_RANK = {"queued": 0, "processing": 1, "done": 2, "error": 2}


class LogStore:
    """Append-only persistence for session records."""

    def append(self, record: dict) -> None:
        raise NotImplementedError

    def replay(self) -> list[dict]:
        raise NotImplementedError


class JsonlLogStore(LogStore):
    """One JSON object per line; the file is only ever appended to."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def replay(self) -> list[dict]:
        if not self.path.exists():
            return []
        with self.path.open("r", encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


class MemoryLogStore(LogStore):
    def __init__(self) -> None:
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        with self._lock:
            self.records.append(dict(record))

    def replay(self) -> list[dict]:
        with self._lock:
            return [dict(r) for r in self.records]


@dataclass
class PageCacheEntry:
    tree: ElementTree
    digest: str
    scores: Optional[ScoreMap]
    stats: PageStats


@dataclass
class PageJob:
    page_id: str
    session_id: str
    url: str
    status: str = "queued"
    error: Optional[dict] = None
    stats: Optional[PageStats] = None

    def advance(self, status: str) -> None:
        if _STATUS_RANK[status] < _STATUS_RANK[self.status]:
            raise RuntimeError(f"job status cannot move {self.status} -> {status}")
        self.status = status

    def to_payload(self) -> dict:
        return {
            "page_id": self.page_id,
            "status": self.status,
            "error": self.error,
            "stats": self.stats.to_row() if self.stats else None,
        }


@dataclass
class Session:
    session_id: str
    task: str
    breakdown: TaskBreakdown
    created_at: float
    updated_at: float
    status: str = "active"
    pages: dict = field(default_factory=dict)  # page_id -> PageCacheEntry
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionManager:
    """Owns all sessions and page jobs; one writer per session."""

    def __init__(self, backend, config: Optional[ScoringConfig] = None,
                 log_store: Optional[LogStore] = None, max_workers: int = 4,
                 synchronous: bool = False):
        self.backend = backend
        self.config = config or ScoringConfig()
        self.log = log_store or MemoryLogStore()
        self.synchronous = synchronous
        self._executor = None if synchronous else ThreadPoolExecutor(max_workers=max_workers)
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._jobs: dict[str, PageJob] = {}

    # -- session lifecycle --

    def create_session(self, task: str) -> Session:
        breakdown = decompose_task(task, self.backend, self.config.retry_limit)
        now = time.time()
        session = Session(
            session_id=uuid.uuid4().hex,
            task=task,
            breakdown=breakdown,
            created_at=now,
            updated_at=now,
        )
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def _session(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id}")
        return session

    def _active_session(self, session_id: str) -> Session:
        session = self._session(session_id)
        if session.status != "active":
            raise SessionCompleted(f"session {session_id} is completed")
        return session

    def update_task(self, session_id: str, new_task: str) -> TaskBreakdown:
        """Recompute the breakdown and invalidate every cached score.

        Same-text updates invalidate too; task equivalence is not judged.
        """
        session = self._active_session(session_id)
        breakdown = decompose_task(new_task, self.backend, self.config.retry_limit)
        with session.lock:
            session.task = new_task
            session.breakdown = breakdown
            session.updated_at = time.time()
            for entry in session.pages.values():
                entry.scores = None
        return breakdown

    def complete_session(self, session_id: str) -> dict:
        """Idempotent; returns aggregate stats over the session's done pages."""
        session = self._session(session_id)
        with session.lock:
            session.status = "completed"
            session.updated_at = time.time()
        job_latencies = [
            job.stats.latency_ms
            for job in self._session_jobs(session_id)
            if job.status == "done" and job.stats
        ]
        return {
            "session_id": session_id,
            "status": "completed",
            "pages": len(job_latencies),
            "mean_latency_ms": statistics.fmean(job_latencies) if job_latencies else 0.0,
        }

    def _session_jobs(self, session_id: str) -> list[PageJob]:
        with self._lock:
            return [j for j in self._jobs.values() if j.session_id == session_id]

    # -- page jobs --

    def submit_page(self, session_id: str, url: str, html) -> str:
        session = self._active_session(session_id)
        job = PageJob(page_id=uuid.uuid4().hex, session_id=session.session_id, url=url)
        with self._lock:
            self._jobs[job.page_id] = job
        if self.synchronous:
            self._run_job(job, session, html)
        else:
            self._executor.submit(self._run_job, job, session, html)
        return job.page_id

    def _run_job(self, job: PageJob, session: Session, html) -> None:
        job.advance("processing")
        try:
            tree = parse_document(html)
            scores, stats = score_page(tree, session.breakdown, self.backend, self.config)
        except Exception as exc:
            job.error = (
                exc.to_payload() if isinstance(exc, TaskLensError)
                else {"code": "internal", "message": str(exc), "retryable": False}
            )
            job.advance("error")
            return
        with session.lock:
            session.pages[job.page_id] = PageCacheEntry(
                tree=tree, digest=tree.digest(), scores=scores, stats=stats,
            )
        job.stats = stats
        self.log.append({
            "timestamp": time.time(),
            "session_id": session.session_id,
            "url": job.url,
            "task": session.task,
            "counts": {
                "text": stats.text_count,
                "image": stats.image_count,
                "svg": stats.svg_count,
                "iframe": stats.iframe_count,
            },
            "scores": scores.to_wire(),
        })
        job.advance("done")

    def get_job(self, page_id: str) -> PageJob:
        with self._lock:
            job = self._jobs.get(page_id)
        if job is None:
            raise UnknownPage(f"no page {page_id}")
        return job

    def get_render(self, page_id: str, mode: str, threshold: int = 70) -> tuple[str, ScoreMap]:
        """Serialize the cached page with fresh annotations; zero backend calls."""
        job = self.get_job(page_id)
        if job.status != "done":
            raise JobNotDone(f"page {page_id} is {job.status}")
        session = self._session(job.session_id)
        with session.lock:
            entry = session.pages.get(page_id)
            scores = entry.scores if entry else None
        if entry is None or scores is None:
            raise MissingScores(f"no cached scores for page {page_id}")
        config = RenderConfig(mode=mode, threshold=threshold)
        annotations = rerender(entry.tree, scores, config)
        return serialize(entry.tree, annotations), scores

    def shutdown(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
