"""Audit report assembly: per-site rows, aggregates, CSV, and figures.

Reports carry ``schema: tm-report/1``. ``generated_at`` and the latency
fields are wall-clock volatile; everything else is deterministic for the
lexical and replay scorers.
"""
from __future__ import annotations

import csv
import statistics
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

REPORT_SCHEMA = "tm-report/1"

NUMERIC_FIELDS = (
    "text_count", "image_count", "svg_count", "iframe_count",
    "batched_count", "batch_count", "pruned_fraction", "latency_ms",
    "tokens_in_estimate", "tokens_out_estimate",
)

VOLATILE_FIELDS = ("generated_at", "latency_ms")


def make_row(url: str, stats_row: dict) -> dict:
    row = {"url": url}
    row.update(stats_row)
    return row


def error_row(url: str, message: str) -> dict:
    return {"url": url, "error": message}


def build_report(rows: list[dict], token_note: str = "character-based estimate") -> dict:
    """Assemble the report; aggregates are recomputable from the rows."""
    ok_rows = [r for r in rows if "error" not in r]
    aggregates = {}
    for name in NUMERIC_FIELDS:
        values = [r[name] for r in ok_rows if name in r]
        if not values:
            continue
        aggregates[name] = {
            "mean": statistics.fmean(values),
            "stddev": statistics.pstdev(values),
        }
    return {
        "schema": REPORT_SCHEMA,
        "generated_at": time.time(),
        "token_estimate_method": token_note,
        "sites": len(rows),
        "failures": len(rows) - len(ok_rows),
        "rows": rows,
        "aggregates": aggregates,
    }


def strip_volatile(report: dict) -> dict:
    """Drop wall-clock fields; what remains must be run-to-run identical."""
    out = {k: v for k, v in report.items() if k not in VOLATILE_FIELDS}
    out["rows"] = [
        {k: v for k, v in row.items() if k not in VOLATILE_FIELDS}
        for row in report["rows"]
    ]
    out["aggregates"] = {
        k: v for k, v in report["aggregates"].items() if k not in VOLATILE_FIELDS
    }
    return out


def write_rows_csv(report: dict, path) -> None:
    """Delimited per-site rows alongside the JSON report."""
    fieldnames = ["url", *NUMERIC_FIELDS, "canvas", "webgl", "error"]
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in report["rows"]:
            flat = dict(row)
            unsupported = flat.pop("unsupported_content", {}) or {}
            flat["canvas"] = unsupported.get("canvas", "")
            flat["webgl"] = unsupported.get("webgl", "")
            writer.writerow(flat)


def _site_labels(rows: list[dict]) -> list[str]:
    labels = []
    for row in rows:
        url = row.get("url", "")
        name = url.rsplit("/", 1)[-1] or url
        labels.append(name[:24] or "?")
    return labels


def render_audit_figures(report: dict, outdir) -> list[Path]:
    """Render the per-site bar figures next to the delimited output."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in report["rows"] if "error" not in r]
    written: list[Path] = []
    if not rows:
        return written
    labels = _site_labels(rows)
    positions = range(len(rows))

    def bar_figure(filename: str, values, title: str, ylabel: str):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(rows) + 2.0), 3.2))
        ax.bar(positions, values, color="#4878b0")
        ax.set_xticks(list(positions))
        ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
        ax.set_title(title, fontsize=10)
        ax.set_ylabel(ylabel, fontsize=8)
        fig.tight_layout()
        path = outdir / filename
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    bar_figure("latency_ms.png", [r["latency_ms"] for r in rows],
               "Per-site processing latency", "ms")
    bar_figure("pruned_fraction.png", [r["pruned_fraction"] for r in rows],
               "Short-text pruning per site", "fraction pruned")

    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(rows) + 2.0), 3.2))
    width = 0.27
    for offset, (key, label) in enumerate(
        (("text_count", "text"), ("image_count", "images"), ("svg_count", "svgs"))
    ):
        xs = [p + (offset - 1) * width for p in positions]
        ax.bar(xs, [r[key] for r in rows], width=width, label=label)
    ax.set_xticks(list(positions))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    ax.set_title("Element counts per site", fontsize=10)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = outdir / "element_counts.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
