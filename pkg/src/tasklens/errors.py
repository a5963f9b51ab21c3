"""Exception hierarchy shared by every layer of the engine.

Each error carries a stable machine-readable ``code`` and a ``retryable``
hint so the HTTP layer and the CLI can map failures uniformly.
"""
from __future__ import annotations


class TaskLensError(Exception):
    """Base class for all engine errors."""

    code = "internal"
    retryable = False

    def to_payload(self) -> dict:
        return {"code": self.code, "message": str(self), "retryable": self.retryable}


# --- document parsing ---

class EmptyDocument(TaskLensError):
    """Input contained no parseable element."""

    code = "empty_document"


class EncodingError(TaskLensError):
    """Input bytes could not be decoded with the declared or assumed encoding."""

    code = "encoding_error"


class DanglingAnnotation(TaskLensError):
    """An annotation referenced a node id that is not in the tree."""

    code = "dangling_annotation"


# --- scoring ---

class EmptyTask(TaskLensError):
    """Task text was empty after trimming."""

    code = "empty_task"


class BackendUnavailable(TaskLensError):
    """The scorer backend could not be reached or refused the request."""

    code = "backend_unavailable"
    retryable = True


class SchemaViolation(TaskLensError):
    """A task-breakdown reply did not match the five-key schema."""

    code = "schema_violation"


class BatchProtocolViolation(TaskLensError):
    """A batch reply was malformed (wrong length, non-integer, out of range)."""

    code = "batch_protocol_violation"


# --- sessions and jobs ---

class UnknownSession(TaskLensError):
    code = "unknown_session"


class UnknownPage(TaskLensError):
    code = "unknown_page"


class SessionCompleted(TaskLensError):
    """Operation requires an active session but the session was completed."""

    code = "session_completed"


class JobNotDone(TaskLensError):
    """Render requested before the page job reached the done state."""

    code = "job_not_done"


class MissingScores(TaskLensError):
    """No cached scores exist for the page (never scored, or invalidated)."""

    code = "missing_scores"
