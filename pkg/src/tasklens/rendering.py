"""The three visualization modes and their score-propagation semantics.

Gradient colors every node by its own score and never propagates.
Opacity propagates child maxima upward first so containers of relevant
content stay visible, then fades by score. Filter hides everything
outside the ancestor closure of the above-threshold set; the page root
is always retained so the document itself survives.

All functions are pure over (tree, scores, config) and never mutate the
tree; they emit an :class:`AnnotationSet`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .annotations import AnnotationSet
from .dom import ElementTree
from .errors import MissingScores
from .scoring import ScoreMap

MODES = ("gradient", "opacity", "filter")

DEFAULT_CONTAINER_TAGS = frozenset({
    "div", "body", "section", "header", "footer", "nav", "main", "aside",
    "ul", "ol", "table",
})


@dataclass
class RenderConfig:
    """Mode selection plus the presentation knobs of each mode."""

    mode: str = "gradient"
    threshold: int = 70
    opacity_floor: float = 0.1
    gradient_saturation: int = 85
    gradient_lightness: int = 75
    fill_background: bool = False
    container_tags: frozenset = field(default_factory=lambda: DEFAULT_CONTAINER_TAGS)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0 <= self.threshold <= 100:
            raise ValueError("threshold must be in [0, 100]")
        if not 0 <= self.opacity_floor < 1:
            raise ValueError("opacity_floor must be in [0, 1)")


def propagate_max(tree: ElementTree, scores: ScoreMap) -> ScoreMap:
    """Lift child scores upward in one bottom-up pass.

    Unscored nodes count as 0. The result holds an entry for every node;
    a node whose value came purely from a child inherits that child's
    channel (first document-order child achieving the maximum).
    """
    order = list(tree.walk())
    result = ScoreMap()
    effective: dict[int, int] = {}
    channel: dict[int, str] = {}
    for node in reversed(order):
        own_entry = scores.entries.get(node.id)
        best = own_entry.score if own_entry else 0
        best_channel = own_entry.channel if own_entry else "text"
        for child_id in node.children:
            if effective[child_id] > best:
                best = effective[child_id]
                best_channel = channel[child_id]
        effective[node.id] = best
        channel[node.id] = best_channel
    for node in order:
        result.set(node.id, effective[node.id], channel[node.id])
    return result


def gradient_hue(score: int) -> float:
    """Linear green(120) -> yellow(60) -> red(0) mapping over [0, 100]."""
    return 120.0 - 1.2 * score


def _hsl(score: int, config: RenderConfig) -> str:
    return (f"hsl({gradient_hue(score):g}, "
            f"{config.gradient_saturation}%, {config.gradient_lightness}%)")


def render_gradient(tree: ElementTree, scores: ScoreMap, config: RenderConfig) -> AnnotationSet:
    """Color each node independently by its own score; no propagation.

    Container tags get a transparent border instead of a color so the
    leaf content carries the visual signal. Nothing is hidden.
    """
    annotations = AnnotationSet()
    for node in tree.walk():
        if node.tag in config.container_tags:
            annotations.style(node.id, "border-color", "transparent")
        else:
            color = _hsl(scores.get(node.id, 0), config)
            if config.fill_background:
                annotations.style(node.id, "background-color", color)
            else:
                annotations.style(node.id, "outline", f"2px solid {color}")
    return annotations


def render_opacity(tree: ElementTree, scores: ScoreMap, config: RenderConfig) -> AnnotationSet:
    """Fade nodes by propagated score; fully relevant content stays opaque."""
    propagated = propagate_max(tree, scores)
    annotations = AnnotationSet()
    for node in tree.walk():
        opacity = max(config.opacity_floor, propagated.get(node.id) / 100.0)
        annotations.style(node.id, "opacity", f"{opacity:g}")
    return annotations


def retained_set(tree: ElementTree, scores: ScoreMap, threshold: int) -> set[int]:
    """Ancestor closure of every node scoring at or above the threshold.

    The root is always retained: hiding the document element would take
    the whole page with it.
    """
    retained = {tree.root_id}
    for node in tree.walk():
        if scores.get(node.id, 0) >= threshold:
            retained.add(node.id)
            for ancestor in tree.ancestors(node.id):
                if ancestor in retained:
                    break
                retained.add(ancestor)
    return retained


def render_filter(tree: ElementTree, scores: ScoreMap, config: RenderConfig) -> AnnotationSet:
    """Hide everything outside the retained set.

    Hidden nodes keep their place in the document (structure preserved)
    but carry the hiding marker; the topmost node of each hidden subtree
    additionally carries ``inert``.
    """
    keep = retained_set(tree, scores, config.threshold)
    annotations = AnnotationSet()
    for node in tree.walk():
        if node.id in keep:
            continue
        topmost = node.parent is None or node.parent in keep
        annotations.hide(node.id, inert=topmost)
    return annotations


def render(tree: ElementTree, scores: ScoreMap, config: RenderConfig) -> AnnotationSet:
    """Dispatch to the configured mode."""
    if config.mode == "gradient":
        return render_gradient(tree, scores, config)
    if config.mode == "opacity":
        return render_opacity(tree, scores, config)
    return render_filter(tree, scores, config)


def rerender(tree: ElementTree, cached_scores: ScoreMap | None,
             config: RenderConfig) -> AnnotationSet:
    """Re-render from cached scores only; never touches a scorer backend."""
    if cached_scores is None:
        raise MissingScores("no cached scores for this page")
    return render(tree, cached_scores, config)
