"""Task decomposition and relevance scoring over a pluggable backend.

Every score the engine emits is an integer in [0, 100]. Backend replies
are validated strictly: a malformed batch reply gets one retry and then
fails the batch, and out-of-range values are rejected, never clamped.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .dom import ScoringBatchItem, VisualElement
from .errors import BackendUnavailable, BatchProtocolViolation, EmptyTask, SchemaViolation

BREAKDOWN_KEYS = ("entity", "constraints", "actions", "default", "fallback")

CHANNELS = ("text", "alt", "image_embedding", "combined_image", "icon", "iframe_title")


@dataclass
class TaskBreakdown:
    """Five-component decomposition of the user's task.

    ``task`` keeps the source text for backends that template it into
    requests; it is not part of the five-key wire structure.
    """

    entity: str
    constraints: list[str] = field(default_factory=list)
    actions: list[str] = field(default_factory=list)
    defaults: list[str] = field(default_factory=list)
    fallbacks: list[str] = field(default_factory=list)
    task: str = ""

    def to_wire(self) -> dict:
        """The exact five-key wire structure of the backend protocol."""
        return {
            "entity": self.entity,
            "constraints": list(self.constraints),
            "actions": list(self.actions),
            "default": list(self.defaults),
            "fallback": list(self.fallbacks),
        }

    @classmethod
    def from_wire(cls, payload: dict) -> "TaskBreakdown":
        validate_breakdown_payload(payload)
        return cls(
            entity=payload["entity"],
            constraints=list(payload["constraints"]),
            actions=list(payload["actions"]),
            defaults=list(payload["default"]),
            fallbacks=list(payload["fallback"]),
        )


def validate_breakdown_payload(payload) -> None:
    """Raise :class:`SchemaViolation` unless payload is the exact five-key shape."""
    if not isinstance(payload, dict):
        raise SchemaViolation(f"breakdown reply is not an object: {type(payload).__name__}")
    keys = set(payload)
    expected = set(BREAKDOWN_KEYS)
    if keys != expected:
        missing = sorted(expected - keys)
        extra = sorted(keys - expected)
        raise SchemaViolation(f"breakdown keys wrong; missing={missing} extra={extra}")
    entity = payload["entity"]
    if not isinstance(entity, str) or not entity.strip():
        raise SchemaViolation("breakdown entity must be a nonempty string")
    for key in BREAKDOWN_KEYS[1:]:
        value = payload[key]
        if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
            raise SchemaViolation(f"breakdown field {key!r} must be a list of strings")


@dataclass
class ScoreEntry:
    score: int
    channel: str


class ScoreMap:
    """element id -> (score, provenance channel), scores in [0, 100]."""

    def __init__(self) -> None:
        self.entries: dict[int, ScoreEntry] = {}

    def set(self, element_id: int, score: int, channel: str) -> None:
        if not isinstance(score, int) or isinstance(score, bool) or not 0 <= score <= 100:
            raise ValueError(f"score out of range for element {element_id}: {score!r}")
        if channel not in CHANNELS:
            raise ValueError(f"unknown channel {channel!r}")
        self.entries[element_id] = ScoreEntry(score, channel)

    def get(self, element_id: int, default: int = 0) -> int:
        entry = self.entries.get(element_id)
        return entry.score if entry is not None else default

    def merge(self, other: "ScoreMap") -> None:
        overlap = self.entries.keys() & other.entries.keys()
        if overlap:
            raise ValueError(f"duplicate score entries for ids {sorted(overlap)}")
        self.entries.update(other.entries)

    def to_wire(self) -> dict:
        return {
            str(eid): {"score": e.score, "channel": e.channel}
            for eid, e in sorted(self.entries.items())
        }

    @classmethod
    def from_wire(cls, payload: dict) -> "ScoreMap":
        smap = cls()
        for eid, entry in payload.items():
            smap.set(int(eid), entry["score"], entry["channel"])
        return smap

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ScoreMap) and self.entries == other.entries


@dataclass
class ScoringConfig:
    """Weights and limits for the scoring pipeline.

    The embedding calibration range maps raw cosine similarity onto
    [0, 100] by clamped min-max scaling.
    """

    alt_weight: float = 0.3
    image_weight: float = 0.7
    missing_alt_policy: str = "image_only"
    missing_embedding_default: int = 0
    batch_size: int = 200
    retry_limit: int = 1
    embedding_low: float = 0.15
    embedding_high: float = 0.40

    def __post_init__(self) -> None:
        if self.alt_weight < 0 or self.image_weight < 0:
            raise ValueError("channel weights must be non-negative")
        if abs(self.alt_weight + self.image_weight - 1.0) > 1e-9:
            raise ValueError("alt_weight + image_weight must equal 1.0")
        if self.embedding_high <= self.embedding_low:
            raise ValueError("embedding calibration range must be increasing")


class _MalformedReply(Exception):
    """Internal: backend reply failed validation; candidate for retry."""


def _validated_call(call: Callable[[], object], validate: Callable[[object], object],
                    retry_limit: int, what: str):
    attempts = retry_limit + 1
    last = None
    for _ in range(attempts):
        try:
            return validate(call())
        except _MalformedReply as exc:
            last = exc
    raise BatchProtocolViolation(f"{what}: {last}")


def _validate_score_array(reply, expected_len: int) -> list[int]:
    if not isinstance(reply, list):
        raise _MalformedReply(f"reply is not an array: {type(reply).__name__}")
    if len(reply) != expected_len:
        raise _MalformedReply(f"expected {expected_len} scores, got {len(reply)}")
    for value in reply:
        if not isinstance(value, int) or isinstance(value, bool):
            raise _MalformedReply(f"non-integer score: {value!r}")
        if not 0 <= value <= 100:
            raise _MalformedReply(f"score out of range: {value}")
    return reply


def _validate_label_array(reply, expected_len: int) -> list[str]:
    if not isinstance(reply, list):
        raise _MalformedReply(f"reply is not an array: {type(reply).__name__}")
    if len(reply) != expected_len:
        raise _MalformedReply(f"expected {expected_len} labels, got {len(reply)}")
    for value in reply:
        if not isinstance(value, str) or not value.strip():
            raise _MalformedReply(f"label is not a nonempty string: {value!r}")
    return reply


def decompose_task(task: str, backend, retry_limit: int = 1) -> TaskBreakdown:
    """Break the task into the five-component structure via the backend.

    The reply is validated against the exact five-key schema before
    acceptance; after ``retry_limit`` retries a malformed reply fails
    with :class:`SchemaViolation`.
    """
    if not task or not task.strip():
        raise EmptyTask("task text is empty")
    last: Optional[SchemaViolation] = None
    for _ in range(retry_limit + 1):
        payload = backend.breakdown(task)
        try:
            breakdown = TaskBreakdown.from_wire(payload)
        except SchemaViolation as exc:
            last = exc
            continue
        breakdown.task = task
        return breakdown
    raise last  # type: ignore[misc]


def score_text_batches(breakdown: TaskBreakdown, batches: Sequence[Sequence[ScoringBatchItem]],
                       backend, config: ScoringConfig) -> ScoreMap:
    """Score every batched text element, channel ``text``."""
    smap = ScoreMap()
    for index, batch in enumerate(batches):
        items = list(batch)
        if not items:
            continue
        scores = _validated_call(
            lambda: backend.score_texts(breakdown, items),
            lambda reply: _validate_score_array(reply, len(items)),
            config.retry_limit,
            f"text batch {index}",
        )
        for item, score in zip(items, scores):
            smap.set(item.element_id, score, "text")
    return smap


def scale_embedding_similarity(cosine: float, config: ScoringConfig) -> int:
    """Min-max scale a cosine similarity onto [0, 100], clamped."""
    span = config.embedding_high - config.embedding_low
    scaled = (cosine - config.embedding_low) / span * 100.0
    return max(0, min(100, round(scaled)))


def combine_image_scores(alt_score: int, image_score: int, config: ScoringConfig) -> int:
    """Weighted combination of the alt and embedding channels, exact rounding."""
    total = (Fraction(str(config.alt_weight)) * alt_score
             + Fraction(str(config.image_weight)) * image_score)
    return int(round(total))


def score_image(breakdown: TaskBreakdown, visual: VisualElement, backend,
                config: ScoringConfig) -> tuple[int, str]:
    """Score one image; returns (score, channel).

    Both channels present -> weighted combination; alt missing -> embedding
    score alone; embedding unavailable -> alt score alone; neither ->
    ``missing_embedding_default``. An alt consisting only of whitespace
    counts as absent.
    """
    if visual.kind != "image":
        raise ValueError(f"score_image expects kind=image, got {visual.kind}")
    alt = (visual.alt_text or "").strip()

    alt_score: Optional[int] = None
    alt_error: Optional[BackendUnavailable] = None
    if alt and "alt_batch" in backend.capabilities:
        try:
            alt_score = _validated_call(
                lambda: backend.score_alts(breakdown, [alt]),
                lambda reply: _validate_score_array(reply, 1),
                config.retry_limit,
                "alt batch",
            )[0]
        except BackendUnavailable as exc:
            alt_error = exc

    image_score: Optional[int] = None
    if "image_embedding" in backend.capabilities:
        try:
            cosine = backend.embed_similarity(breakdown, visual.source)
        except BackendUnavailable:
            cosine = None
        if cosine is not None:
            image_score = scale_embedding_similarity(cosine, config)

    if alt_score is not None and image_score is not None:
        return combine_image_scores(alt_score, image_score, config), "combined_image"
    if alt_score is not None:
        return alt_score, "alt"
    if image_score is not None:
        return image_score, "image_embedding"
    if alt_error is not None:
        raise alt_error
    return config.missing_embedding_default, "image_embedding"


def score_images(breakdown: TaskBreakdown, visuals: Sequence[VisualElement], backend,
                 config: ScoringConfig) -> ScoreMap:
    smap = ScoreMap()
    for visual in visuals:
        if visual.kind != "image":
            continue
        score, channel = score_image(breakdown, visual, backend, config)
        smap.set(visual.element_id, score, channel)
    return smap


def label_and_score_icons(breakdown: TaskBreakdown, visuals: Sequence[VisualElement],
                          backend, config: ScoringConfig) -> ScoreMap:
    """Two-stage SVG scoring: path data -> semantic labels -> scores."""
    smap = ScoreMap()
    icons = [v for v in visuals if v.kind == "svg_icon"]
    for start in range(0, len(icons), config.batch_size):
        chunk = icons[start:start + config.batch_size]
        paths = [v.path_data or "" for v in chunk]
        labels = _validated_call(
            lambda: backend.label_svgs(paths),
            lambda reply: _validate_label_array(reply, len(paths)),
            config.retry_limit,
            "svg label batch",
        )
        scores = _validated_call(
            lambda: backend.score_icons(breakdown, labels),
            lambda reply: _validate_score_array(reply, len(labels)),
            config.retry_limit,
            "icon score batch",
        )
        for visual, score in zip(chunk, scores):
            smap.set(visual.element_id, score, "icon")
    return smap


def score_iframes(breakdown: TaskBreakdown, visuals: Sequence[VisualElement],
                  backend, config: ScoringConfig) -> ScoreMap:
    """Score iframes by their title through the text channel.

    Iframes without a usable title (absent or under 3 chars trimmed)
    score 0; untitled iframes are commonly ad slots.
    """
    smap = ScoreMap()
    frames = [v for v in visuals if v.kind == "iframe"]
    titled = [v for v in frames if v.alt_text and len(v.alt_text.strip()) >= 3]
    for v in frames:
        if v not in titled:
            smap.set(v.element_id, 0, "iframe_title")
    for start in range(0, len(titled), config.batch_size):
        chunk = titled[start:start + config.batch_size]
        items = [
            ScoringBatchItem(v.element_id, "iframe", (v.alt_text or "").strip(), v.element_id)
            for v in chunk
        ]
        scores = _validated_call(
            lambda: backend.score_texts(breakdown, items),
            lambda reply: _validate_score_array(reply, len(items)),
            config.retry_limit,
            "iframe title batch",
        )
        for visual, score in zip(chunk, scores):
            smap.set(visual.element_id, score, "iframe_title")
    return smap
