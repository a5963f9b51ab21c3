"""Page-level orchestration: parse, batch, score all channels, merge.

Also computes the per-page instrumentation row (element counts, pruning,
latency, token estimates). Token figures are character-count estimates
(prompt and reply length divided by four), not tokenizer output.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

from . import backends as backend_prompts
from .dom import (
    ElementTree, build_text_batches, extract_visuals, iter_text_nodes,
)
from .scoring import (
    ScoreMap, ScoringConfig, TaskBreakdown,
    label_and_score_icons, score_iframes, score_images, score_text_batches,
)


@dataclass
class PageStats:
    """Instrumentation for one processed page."""

    text_count: int = 0
    image_count: int = 0
    svg_count: int = 0
    iframe_count: int = 0
    batched_count: int = 0
    batch_count: int = 0
    pruned_fraction: float = 0.0
    latency_ms: float = 0.0
    tokens_in_estimate: int = 0
    tokens_out_estimate: int = 0
    unsupported_content: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        return {
            "text_count": self.text_count,
            "image_count": self.image_count,
            "svg_count": self.svg_count,
            "iframe_count": self.iframe_count,
            "batched_count": self.batched_count,
            "batch_count": self.batch_count,
            "pruned_fraction": self.pruned_fraction,
            "latency_ms": self.latency_ms,
            "tokens_in_estimate": self.tokens_in_estimate,
            "tokens_out_estimate": self.tokens_out_estimate,
            "unsupported_content": self.unsupported_content,
        }


def detect_unsupported(tree: ElementTree) -> dict:
    """Flag canvas/WebGL content the engine cannot analyze.

    WebGL lives behind a canvas context, invisible to static markup; the
    flag is a hint keyed off attribute values mentioning webgl.
    """
    canvas = False
    webgl = False
    for node in tree.walk():
        if node.tag == "canvas":
            canvas = True
            for value in node.attrs.values():
                if value and "webgl" in value.lower():
                    webgl = True
    return {"canvas": canvas, "webgl": webgl}


def _estimate_tokens(chars: int) -> int:
    return chars // 4


def score_page(tree: ElementTree, breakdown: TaskBreakdown, backend,
               config: ScoringConfig | None = None) -> tuple[ScoreMap, PageStats]:
    """Run every scoring channel over the tree and merge the results."""
    config = config or ScoringConfig()
    started = time.monotonic()
    stats = PageStats()

    batches = build_text_batches(tree, config.batch_size)
    visuals = extract_visuals(tree)
    images = [v for v in visuals if v.kind == "image"]
    icons = [v for v in visuals if v.kind == "svg_icon"]
    frames = [v for v in visuals if v.kind == "iframe"]

    stats.text_count = sum(1 for _ in iter_text_nodes(tree))
    stats.image_count = len(images)
    stats.svg_count = len(icons)
    stats.iframe_count = len(frames)
    stats.batched_count = sum(len(b) for b in batches)
    stats.batch_count = len(batches)
    stats.pruned_fraction = (
        1.0 - stats.batched_count / stats.text_count if stats.text_count else 0.0
    )
    stats.unsupported_content = detect_unsupported(tree)

    scores = score_text_batches(breakdown, batches, backend, config)
    scores.merge(score_images(breakdown, images, backend, config))
    scores.merge(label_and_score_icons(breakdown, icons, backend, config))
    scores.merge(score_iframes(breakdown, frames, backend, config))

    chars_in = len(backend_prompts.render_breakdown_prompt(breakdown.task))
    for batch in batches:
        chars_in += len(backend_prompts.render_text_prompt(breakdown, batch))
    for image in images:
        alt = (image.alt_text or "").strip()
        if alt:
            chars_in += len(backend_prompts.render_alt_prompt(breakdown, [alt]))
    if icons:
        paths = [v.path_data or "" for v in icons]
        chars_in += len(backend_prompts.render_svg_prompt(paths))
        chars_in += len(backend_prompts.render_icon_prompt(breakdown, ["icon"] * len(icons)))
    stats.tokens_in_estimate = _estimate_tokens(chars_in)

    reply_chars = len(json.dumps(breakdown.to_wire()))
    reply_chars += len(json.dumps([e.score for e in scores.entries.values()]))
    stats.tokens_out_estimate = _estimate_tokens(reply_chars)

    stats.latency_ms = (time.monotonic() - started) * 1000.0
    return scores, stats
