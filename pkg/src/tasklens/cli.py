"""Batch front-end: single-page processing, corpus audits, and the server.

Exit codes: 0 success, 2 input problems, 3 scorer backend failures,
4 scorer protocol violations, 5 when an audit produced no usable row.
"""
from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .backends import LexicalBackend, RecordingBackend, RemoteBackend, ReplayBackend
from .dom import parse_document, serialize
from .errors import (
    BackendUnavailable, BatchProtocolViolation, EmptyDocument, EmptyTask,
    EncodingError, SchemaViolation,
)
from .pipeline import score_page
from .rendering import RenderConfig, render
from .report import (
    build_report, error_row, make_row, render_audit_figures, write_rows_csv,
)
from .scoring import ScoringConfig, decompose_task

EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_PROTOCOL = 4
EXIT_AUDIT_EMPTY = 5

SCORES_SCHEMA = "tm-scores/1"

_INPUT_ERRORS = (EmptyDocument, EncodingError, EmptyTask, FileNotFoundError,
                 IsADirectoryError, PermissionError, ValueError)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _build_backend(scorer: str, fixture, endpoint, model, api_key, record):
    if scorer.startswith("replay"):
        path = scorer.split(":", 1)[1] if ":" in scorer else fixture
        if not path:
            raise ValueError("replay scorer needs a fixture (--fixture PATH or replay:PATH)")
        backend = ReplayBackend(path)
    elif scorer == "remote":
        if not endpoint or not model:
            raise ValueError("remote scorer needs --endpoint and --model")
        backend = RemoteBackend(endpoint, model, api_key=api_key)
    elif scorer == "lexical":
        backend = LexicalBackend()
    else:
        raise ValueError(f"unknown scorer {scorer!r}")
    if record:
        backend = RecordingBackend(backend, record)
    return backend


def _load_input(source: str) -> bytes:
    if source.startswith(("http://", "https://")):
        import requests

        response = requests.get(source, timeout=30)
        response.raise_for_status()
        return response.content
    return Path(source).read_bytes()


def _run_page(source: str, breakdown, backend, config, mode: str, threshold: int):
    tree = parse_document(_load_input(source))
    scores, stats = score_page(tree, breakdown, backend, config)
    annotations = render(tree, scores, RenderConfig(mode=mode, threshold=threshold))
    return serialize(tree, annotations), scores, stats


@click.group()
def main():
    """Score page elements against a task and emit a transformed page."""


_scorer_options = [
    click.option("--scorer", default="lexical", show_default=True,
                 help="lexical | remote | replay[:FIXTURE]"),
    click.option("--fixture", type=click.Path(), default=None,
                 help="JSONL fixture for the replay scorer."),
    click.option("--endpoint", envvar="TASKLENS_ENDPOINT", default=None,
                 help="Remote scorer base URL (chat-completions style)."),
    click.option("--model", envvar="TASKLENS_MODEL", default=None,
                 help="Remote scorer model name."),
    click.option("--api-key", envvar="TASKLENS_API_KEY", default=None),
    click.option("--record", type=click.Path(), default=None,
                 help="Record backend replies to this JSONL file."),
]


def scorer_options(fn):
    for option in reversed(_scorer_options):
        fn = option(fn)
    return fn


@main.command("process")
@click.option("--input", "input_", required=True, help="HTML file or URL.")
@click.option("--task", required=True, help="Natural-language task description.")
@click.option("--mode", type=click.Choice(["gradient", "opacity", "filter"]), required=True)
@click.option("--threshold", type=int, default=70, show_default=True,
              help="Relevance threshold for filter mode.")
@click.option("--out", required=True, type=click.Path(), help="Annotated HTML output.")
@click.option("--stats", "stats_path", type=click.Path(), default=None,
              help="Write a one-row stats report (tm-report/1).")
@click.option("--score-dump", type=click.Path(), default=None,
              help="Write the raw score map as JSON.")
@scorer_options
def cmd_process(input_, task, mode, threshold, out, stats_path, score_dump,
                scorer, fixture, endpoint, model, api_key, record):
    """Process one page offline and write the annotated HTML."""
    try:
        backend = _build_backend(scorer, fixture, endpoint, model, api_key, record)
        config = ScoringConfig()
        breakdown = decompose_task(task, backend, config.retry_limit)
        html, scores, stats = _run_page(input_, breakdown, backend, config, mode, threshold)
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    except BackendUnavailable as exc:
        _fail(EXIT_BACKEND, str(exc))
    except (BatchProtocolViolation, SchemaViolation) as exc:
        _fail(EXIT_PROTOCOL, str(exc))

    Path(out).write_text(html, encoding="utf-8")
    if score_dump:
        payload = {"schema": SCORES_SCHEMA, "task": task, "scores": scores.to_wire()}
        Path(score_dump).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if stats_path:
        report = build_report([make_row(input_, stats.to_row())])
        Path(stats_path).write_text(
            json.dumps(report, indent=2) + "\n", encoding="utf-8")
    click.echo(f"wrote {out} ({len(scores)} scored elements)")


@main.command("audit")
@click.option("--sites", required=True, type=click.Path(exists=True),
              help="URL list file or directory of saved HTML pages.")
@click.option("--task", required=True)
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also write per-site rows as CSV.")
@click.option("--figures", type=click.Path(), default=None,
              help="Directory for per-site matplotlib figures.")
@click.option("--jobs", type=int, default=4, show_default=True)
@scorer_options
def cmd_audit(sites, task, report_path, csv_path, figures, jobs,
              scorer, fixture, endpoint, model, api_key, record):
    """Process a corpus of sites and write an aggregate robustness report.

    A single site failing marks its row and moves on; the exit code is 5
    only when no site produced a usable row.
    """
    try:
        backend = _build_backend(scorer, fixture, endpoint, model, api_key, record)
        config = ScoringConfig()
        breakdown = decompose_task(task, backend, config.retry_limit)
    except _INPUT_ERRORS as exc:
        _fail(EXIT_INPUT, str(exc))
    except BackendUnavailable as exc:
        _fail(EXIT_BACKEND, str(exc))
    except (BatchProtocolViolation, SchemaViolation) as exc:
        _fail(EXIT_PROTOCOL, str(exc))

    sources = _collect_sites(sites)

    def one(source: str) -> dict:
        try:
            tree = parse_document(_load_input(source))
            _, stats = score_page(tree, breakdown, backend, config)
            return make_row(source, stats.to_row())
        except Exception as exc:
            return error_row(source, str(exc))

    if sources:
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            rows = list(pool.map(one, sources))
    else:
        rows = []

    report = build_report(rows)
    Path(report_path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if csv_path:
        write_rows_csv(report, csv_path)
    if figures:
        for path in render_audit_figures(report, figures):
            click.echo(f"figure: {path}")
    ok = len(rows) - report["failures"]
    click.echo(f"audited {len(rows)} sites, {ok} ok, report: {report_path}")
    if not rows or ok == 0:
        sys.exit(EXIT_AUDIT_EMPTY)


def _collect_sites(sites: str) -> list[str]:
    path = Path(sites)
    if path.is_dir():
        return sorted(
            str(p) for p in path.iterdir() if p.suffix.lower() in (".html", ".htm")
        )
    lines = path.read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip() and not line.startswith("#")]


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--log", "log_path", type=click.Path(), default="tasklens-log.jsonl",
              show_default=True, help="Append-only session record file.")
@scorer_options
def cmd_serve(host, port, log_path, scorer, fixture, endpoint, model, api_key, record):
    """Run the HTTP service."""
    import uvicorn

    from .api import create_app
    from .service import JsonlLogStore, SessionManager

    try:
        backend = _build_backend(scorer, fixture, endpoint, model, api_key, record)
    except ValueError as exc:
        _fail(EXIT_INPUT, str(exc))
    manager = SessionManager(backend, log_store=JsonlLogStore(log_path))
    uvicorn.run(create_app(manager), host=host, port=port)


if __name__ == "__main__":
    main()
