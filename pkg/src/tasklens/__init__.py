"""Task-relevance scoring and filtering engine for web pages.

Given a page's HTML and a natural-language task, assigns every element a
0-100 relevance score through a pluggable scorer backend and emits a
transformed page in one of three modes: color gradient, opacity fade, or
threshold filter.
"""

from .annotations import AnnotationSet, NodeAnnotation
from .dom import (
    ElementNode, ElementTree, ParseOptions, ScoringBatchItem, VisualElement,
    build_text_batches, extract_visuals, parse_document, serialize, tree_equal,
)
from .rendering import (
    RenderConfig, propagate_max, render, render_filter, render_gradient,
    render_opacity, rerender, retained_set,
)
from .scoring import (
    ScoreMap, ScoringConfig, TaskBreakdown, decompose_task,
    label_and_score_icons, score_iframes, score_image, score_text_batches,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet", "NodeAnnotation",
    "ElementNode", "ElementTree", "ParseOptions", "ScoringBatchItem",
    "VisualElement", "build_text_batches", "extract_visuals", "parse_document",
    "serialize", "tree_equal",
    "RenderConfig", "propagate_max", "render", "render_filter",
    "render_gradient", "render_opacity", "rerender", "retained_set",
    "ScoreMap", "ScoringConfig", "TaskBreakdown", "decompose_task",
    "label_and_score_icons", "score_iframes", "score_image", "score_text_batches",
    "__version__",
]
