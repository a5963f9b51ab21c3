"""Scorer backends: remote chat endpoint, deterministic lexical, recorded replay.

A backend exposes capability-gated batch methods. The engine validates
every reply; backends only transport. The remote backend templates the
batch prompts below and expects bare JSON arrays back (one tolerant
code-fence strip is applied before parsing).
"""
from __future__ import annotations

import hashlib
import json
import re
import threading
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import requests

from .dom import ScoringBatchItem
from .errors import BackendUnavailable
from .scoring import TaskBreakdown

ALL_CAPABILITIES = frozenset({
    "breakdown", "text_batch", "alt_batch", "svg_label_batch", "icon_batch",
    "image_embedding",
})

BREAKDOWN_PROMPT = """\
Given the user's task: {task}, break it down into the following components to help identify and prioritize relevant page elements:

1. entity: the main object or item the user is interested in
2. constraints: broad categories of requirements or preferences (e.g., cost, color, brand, filter categories)
3. actions: logical steps the user might take on a webpage (e.g., filter, compare, add to cart)
4. default: elements the user expects to see on a webpage (e.g., product name, price, image)
5. fallback: alternative elements the user can use if primary ones are missing (e.g., search bar, contact support)

Return in the following JSON format:
{
    "entity": "...",
    "constraints": ["...", "..."],
    "actions": ["...", "..."],
    "default": ["...", "..."],
    "fallback": ["...", "..."]
}
"""

TEXT_BATCH_PROMPT = """\
User Task: {task}
Task Steps: {taskBreakdown}

You are interpreting the webpage from a list of text elements to determine which are relevant for completing the user's task. Do not evaluate elements in isolation. Instead, consider their surrounding elements and whether they belong to a structured unit or repeated group (e.g., a product card, listing, or section).

If one element in a unit strongly matches the task (e.g., product title, price, size), score associated elements (e.g., "Add to cart") accordingly based on how much they contribute to completing the task.

Score each element on a scale from 0 (irrelevant) to 100 (critical to the task).

Key Guidelines:
1. Interpret structured groups (cards) from the tags of texts. Treat these as semantic units. Score inner elements similarly only if the card as a whole is relevant.
2. Match all task constraints (e.g., flavor, price, size, pickup availability). If 2-3 constraints are satisfied, the card is still relevant.
3. Score repeated actions (like "Add to cart" or "Add to list") only if tied to a relevant card.
4. Penalize loose, standalone text (e.g., titles, prices, buttons) not clearly part of a relevant group.
5. If missing the element would prevent task success, assign a high score.

Infer relationships based on text proximity, matching patterns, and card repetition structure.

Return only an array with {len(batch)} scores. No explanation.
Example format: [12, 87, 34, 0, 75]
Text elements to score: {numbered_elements}
"""

ALT_BATCH_PROMPT = """\
Given the user's task: {task} and the task steps: {taskBreakdown}, evaluate the relevance of each image's alt text in helping the user complete their task.

Score each image description (alt text) from 0 (irrelevant) to 100 (critical to the task). Return only an array of scores.

Example output: [12, 87, 34, 0, 75]
Alt texts to score: {numbered_alts}
"""

SVG_LABEL_PROMPT = """\
Given the following list of SVG paths, identify what each icon represents. For each path, return a short name like "search", "close", "menu", "user", etc.

DO NOT add any other text. Only return a list of {len(paths)} names in this format: ["search", "user", "menu", ...]

SVG paths: {numbered_paths}
"""

ICON_SCORE_PROMPT = """\
Given the user's task: {task} and the task steps: {taskBreakdown}, you are interpreting the context of the current webpage from the icon titles given to you to understand which steps are meaningful and actionable from the breakdown of the user's task.

Score each icon title on a scale from 0 (irrelevant) to 100 (critical to the task).

Prioritize scoring task-relevant icons higher, as the user must see them to successfully complete their task. Missing these icons would result in a poor experience, which this system aims to prevent.

Return only an array with {len(batch)} scores. Do NOT include any explanation, notes, or additional text.

Example output format: [12, 87, 34, 0, 75]
Icons to score: {numbered_elements}
"""

_FENCE_RE = re.compile(r"^\s*```(?:json)?\s*\n(.*?)\n\s*```\s*$", re.DOTALL)

_TOKEN_RE = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric, drop empties."""
    return [t for t in _TOKEN_RE.split(text.lower()) if t]


def _fill(template: str, **values: str) -> str:
    for key, value in values.items():
        template = template.replace("{%s}" % key, value)
    return template


def _numbered(lines: Sequence[str]) -> str:
    return "\n".join(f"{i + 1}. {line}" for i, line in enumerate(lines))


def render_breakdown_prompt(task: str) -> str:
    return _fill(BREAKDOWN_PROMPT, task=task)


def render_text_prompt(breakdown: TaskBreakdown, items: Sequence[ScoringBatchItem]) -> str:
    numbered = _numbered(
        f"[id={it.element_id}] [tag={it.tag}] [order={it.order_index}] {it.text}"
        for it in items
    )
    return _fill(
        TEXT_BATCH_PROMPT,
        task=breakdown.task,
        taskBreakdown=json.dumps(breakdown.to_wire(), ensure_ascii=False),
        **{"len(batch)": str(len(items)), "numbered_elements": numbered},
    )


def render_alt_prompt(breakdown: TaskBreakdown, alts: Sequence[str]) -> str:
    return _fill(
        ALT_BATCH_PROMPT,
        task=breakdown.task,
        taskBreakdown=json.dumps(breakdown.to_wire(), ensure_ascii=False),
        numbered_alts=_numbered(alts),
    )


def render_svg_prompt(paths: Sequence[str]) -> str:
    return _fill(
        SVG_LABEL_PROMPT,
        **{"len(paths)": str(len(paths)), "numbered_paths": _numbered(paths)},
    )


def render_icon_prompt(breakdown: TaskBreakdown, labels: Sequence[str]) -> str:
    return _fill(
        ICON_SCORE_PROMPT,
        task=breakdown.task,
        taskBreakdown=json.dumps(breakdown.to_wire(), ensure_ascii=False),
        **{"len(batch)": str(len(labels)), "numbered_elements": _numbered(labels)},
    )


class ScorerBackend:
    """Interface all backends implement; methods are capability-gated."""

    capabilities: frozenset = frozenset()

    def breakdown(self, task: str) -> dict:
        raise NotImplementedError

    def score_texts(self, breakdown: TaskBreakdown, items: Sequence[ScoringBatchItem]) -> list:
        raise NotImplementedError

    def score_alts(self, breakdown: TaskBreakdown, alts: Sequence[str]) -> list:
        raise NotImplementedError

    def label_svgs(self, paths: Sequence[str]) -> list:
        raise NotImplementedError

    def score_icons(self, breakdown: TaskBreakdown, labels: Sequence[str]) -> list:
        raise NotImplementedError

    def embed_similarity(self, breakdown: TaskBreakdown, source: Optional[str]) -> Optional[float]:
        raise NotImplementedError


# Leading verb-phrase tokens dropped when deriving the lexical entity.
_LEADING_STOPWORDS = frozenset({
    "i", "we", "want", "wants", "would", "like", "need", "to", "buy", "find",
    "show", "get", "search", "look", "looking", "for", "me", "my", "us",
    "the", "a", "an", "please",
})

ENTITY_WEIGHT = 3
CONSTRAINT_WEIGHT = 2
SUPPORT_WEIGHT = 1


class LexicalBackend(ScorerBackend):
    """Deterministic offline scorer: weighted token overlap with the breakdown.

    Entity tokens weigh 3, constraint tokens 2, everything else 1 (a token
    in several fields takes its maximum). The score is the matched weight
    share of the total, scaled to 100. Task decomposition is rule-based
    (entity = task minus leading stop words, other fields empty) and SVG
    labeling returns "icon" for every path -- test-only semantics, not a
    model substitute.
    """

    capabilities = frozenset({
        "breakdown", "text_batch", "alt_batch", "svg_label_batch", "icon_batch",
    })

    def breakdown(self, task: str) -> dict:
        tokens = tokenize(task)
        index = 0
        while index < len(tokens) and tokens[index] in _LEADING_STOPWORDS:
            index += 1
        entity_tokens = tokens[index:] or tokens
        entity = " ".join(entity_tokens) if entity_tokens else task.strip()
        return {
            "entity": entity,
            "constraints": [],
            "actions": [],
            "default": [],
            "fallback": [],
        }

    @staticmethod
    def _weights(breakdown: TaskBreakdown) -> dict[str, int]:
        weights: dict[str, int] = {}
        groups = (
            (ENTITY_WEIGHT, [breakdown.entity]),
            (CONSTRAINT_WEIGHT, breakdown.constraints),
            (SUPPORT_WEIGHT, breakdown.actions),
            (SUPPORT_WEIGHT, breakdown.defaults),
            (SUPPORT_WEIGHT, breakdown.fallbacks),
        )
        for weight, texts in groups:
            for text in texts:
                for token in tokenize(text):
                    weights[token] = max(weights.get(token, 0), weight)
        return weights

    @classmethod
    def score_one(cls, breakdown: TaskBreakdown, text: str) -> int:
        weights = cls._weights(breakdown)
        denom = sum(weights.values())
        if denom == 0:
            return 0
        present = set(tokenize(text))
        raw = sum(w for token, w in weights.items() if token in present)
        return max(0, min(100, int(round(Fraction(100 * raw, denom)))))

    def score_texts(self, breakdown, items):
        return [self.score_one(breakdown, item.text) for item in items]

    def score_alts(self, breakdown, alts):
        return [self.score_one(breakdown, alt) for alt in alts]

    def label_svgs(self, paths):
        return ["icon" for _ in paths]

    def score_icons(self, breakdown, labels):
        return [self.score_one(breakdown, label) for label in labels]


class RemoteBackend(ScorerBackend):
    """HTTP JSON chat-completion-style scorer.

    Sends one user message per request and expects the reply content to be
    a bare JSON value (array, or object for the breakdown). Code fences
    are stripped once before parsing; anything else unparseable is handed
    to the engine's validators, which retry and then fail the batch.
    """

    capabilities = frozenset({
        "breakdown", "text_batch", "alt_batch", "svg_label_batch", "icon_batch",
    })

    def __init__(self, endpoint: str, model: str, api_key: Optional[str] = None,
                 timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def _chat(self, prompt: str):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            response = requests.post(
                f"{self.endpoint}/chat/completions",
                json=body, headers=headers, timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"scorer endpoint unreachable: {exc}") from exc
        if response.status_code != 200:
            raise BackendUnavailable(
                f"scorer endpoint returned {response.status_code}")
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendUnavailable(f"scorer reply envelope malformed: {exc}") from exc
        return _parse_reply_content(content)

    def breakdown(self, task):
        return self._chat(render_breakdown_prompt(task))

    def score_texts(self, breakdown, items):
        return self._chat(render_text_prompt(breakdown, items))

    def score_alts(self, breakdown, alts):
        return self._chat(render_alt_prompt(breakdown, alts))

    def label_svgs(self, paths):
        return self._chat(render_svg_prompt(paths))

    def score_icons(self, breakdown, labels):
        return self._chat(render_icon_prompt(breakdown, labels))


def _parse_reply_content(content):
    if not isinstance(content, str):
        return content
    match = _FENCE_RE.match(content)
    if match:
        content = match.group(1)
    try:
        return json.loads(content)
    except ValueError:
        return content


def request_fingerprint(op: str, payload: dict) -> str:
    """Stable hash identifying one backend request for record/replay."""
    canonical = json.dumps({"op": op, "payload": payload},
                           sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _payload_for(op: str, *, task: str = "", breakdown: Optional[TaskBreakdown] = None,
                 items=None, alts=None, paths=None, labels=None, source=None) -> dict:
    payload: dict = {"task": task}
    if breakdown is not None:
        payload["breakdown"] = breakdown.to_wire()
        payload["task"] = breakdown.task
    if items is not None:
        payload["items"] = [
            [it.element_id, it.tag, it.text, it.order_index] for it in items
        ]
    if alts is not None:
        payload["alts"] = list(alts)
    if paths is not None:
        payload["paths"] = list(paths)
    if labels is not None:
        payload["labels"] = list(labels)
    if source is not None:
        payload["source"] = source
    return payload


class ReplayBackend(ScorerBackend):
    """Replays recorded replies from a JSONL fixture of hash -> reply."""

    capabilities = ALL_CAPABILITIES

    def __init__(self, fixture_path):
        self.replies: dict[str, object] = {}
        path = Path(fixture_path)
        with path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                self.replies[row["hash"]] = row["reply"]

    def _lookup(self, op: str, payload: dict):
        key = request_fingerprint(op, payload)
        if key not in self.replies:
            raise BackendUnavailable(f"no recorded reply for {op} request {key[:12]}")
        return self.replies[key]

    def breakdown(self, task):
        return self._lookup("breakdown", _payload_for("breakdown", task=task))

    def score_texts(self, breakdown, items):
        return self._lookup("text_batch", _payload_for("text_batch", breakdown=breakdown, items=items))

    def score_alts(self, breakdown, alts):
        return self._lookup("alt_batch", _payload_for("alt_batch", breakdown=breakdown, alts=alts))

    def label_svgs(self, paths):
        return self._lookup("svg_label_batch", _payload_for("svg_label_batch", paths=paths))

    def score_icons(self, breakdown, labels):
        return self._lookup("icon_batch", _payload_for("icon_batch", breakdown=breakdown, labels=labels))

    def embed_similarity(self, breakdown, source):
        return self._lookup("image_embedding", _payload_for("image_embedding", breakdown=breakdown, source=source))


class RecordingBackend(ScorerBackend):
    """Wraps another backend and appends every (hash, reply) to a JSONL file."""

    def __init__(self, inner: ScorerBackend, fixture_path):
        self.inner = inner
        self.path = Path(fixture_path)
        self._lock = threading.Lock()

    @property
    def capabilities(self):  # type: ignore[override]
        return self.inner.capabilities

    def _record(self, op: str, payload: dict, reply):
        row = json.dumps(
            {"hash": request_fingerprint(op, payload), "op": op, "reply": reply},
            ensure_ascii=False,
        )
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(row + "\n")
        return reply

    def breakdown(self, task):
        payload = _payload_for("breakdown", task=task)
        return self._record("breakdown", payload, self.inner.breakdown(task))

    def score_texts(self, breakdown, items):
        payload = _payload_for("text_batch", breakdown=breakdown, items=items)
        return self._record("text_batch", payload, self.inner.score_texts(breakdown, items))

    def score_alts(self, breakdown, alts):
        payload = _payload_for("alt_batch", breakdown=breakdown, alts=alts)
        return self._record("alt_batch", payload, self.inner.score_alts(breakdown, alts))

    def label_svgs(self, paths):
        payload = _payload_for("svg_label_batch", paths=paths)
        return self._record("svg_label_batch", payload, self.inner.label_svgs(paths))

    def score_icons(self, breakdown, labels):
        payload = _payload_for("icon_batch", breakdown=breakdown, labels=labels)
        return self._record("icon_batch", payload, self.inner.score_icons(breakdown, labels))

    def embed_similarity(self, breakdown, source):
        payload = _payload_for("image_embedding", breakdown=breakdown, source=source)
        return self._record("image_embedding", payload, self.inner.embed_similarity(breakdown, source))
