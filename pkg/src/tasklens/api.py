"""HTTP JSON API over the session manager.

Errors are uniform ``{code, message, retryable}`` bodies; processing
status is exposed for polling.
"""
from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .errors import (
    BackendUnavailable, BatchProtocolViolation, EmptyDocument, EmptyTask,
    EncodingError, JobNotDone, MissingScores, SchemaViolation,
    SessionCompleted, TaskLensError, UnknownPage, UnknownSession,
)
from .service import SessionManager

_STATUS_BY_ERROR = {
    EmptyTask: 400,
    EmptyDocument: 400,
    EncodingError: 400,
    UnknownSession: 404,
    UnknownPage: 404,
    SessionCompleted: 409,
    JobNotDone: 409,
    MissingScores: 409,
    SchemaViolation: 502,
    BatchProtocolViolation: 502,
    BackendUnavailable: 503,
}


class TaskBody(BaseModel):
    task: str


class PageBody(BaseModel):
    url: str = ""
    html: str


def create_app(manager: SessionManager) -> FastAPI:
    app = FastAPI(title="tasklens", version="0.1.0")

    @app.exception_handler(TaskLensError)
    async def _engine_error(_request: Request, exc: TaskLensError):
        status = _STATUS_BY_ERROR.get(type(exc), 500)
        return JSONResponse(status_code=status, content=exc.to_payload())

    @app.exception_handler(ValueError)
    async def _value_error(_request: Request, exc: ValueError):
        return JSONResponse(
            status_code=400,
            content={"code": "invalid_argument", "message": str(exc), "retryable": False},
        )

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: TaskBody):
        session = manager.create_session(body.task)
        return {
            "session_id": session.session_id,
            "breakdown": session.breakdown.to_wire(),
        }

    @app.post("/v1/sessions/{session_id}/pages", status_code=202)
    def submit_page(session_id: str, body: PageBody):
        page_id = manager.submit_page(session_id, body.url, body.html)
        return {"page_id": page_id}

    @app.get("/v1/pages/{page_id}")
    def page_status(page_id: str):
        return manager.get_job(page_id).to_payload()

    @app.get("/v1/pages/{page_id}/render")
    def page_render(page_id: str, mode: str = "gradient", threshold: int = 70):
        html, scores = manager.get_render(page_id, mode=mode, threshold=threshold)
        return {
            "page_id": page_id,
            "mode": mode,
            "threshold": threshold,
            "html": html,
            "scores": scores.to_wire(),
        }

    @app.post("/v1/sessions/{session_id}/task")
    def update_task(session_id: str, body: TaskBody):
        breakdown = manager.update_task(session_id, body.task)
        return {"session_id": session_id, "breakdown": breakdown.to_wire()}

    @app.post("/v1/sessions/{session_id}/complete")
    def complete_session(session_id: str):
        return manager.complete_session(session_id)

    return app
