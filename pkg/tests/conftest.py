"""Shared fixtures: sample pages, mock backends, synthetic tree builders."""
from __future__ import annotations

import random
from pathlib import Path

import pytest

from tasklens.backends import LexicalBackend, ScorerBackend
from tasklens.dom import ElementNode, ElementTree
from tasklens.scoring import ScoreMap, TaskBreakdown

FIXTURES = Path(__file__).parent / "fixtures"

YOGURT_TASK = "I want to buy the cheapest 4 pack low sugar vanilla greek yogurt"


@pytest.fixture
def shop_html() -> str:
    return (FIXTURES / "shop.html").read_text(encoding="utf-8")


@pytest.fixture
def yogurt_breakdown() -> TaskBreakdown:
    return TaskBreakdown(
        entity="vanilla greek yogurt",
        constraints=["low sugar", "cheapest"],
        actions=["search"],
        defaults=["price"],
        task=YOGURT_TASK,
    )


@pytest.fixture
def lexical() -> LexicalBackend:
    return LexicalBackend()


class StubBackend(ScorerBackend):
    """Returns canned replies; records every call for assertions."""

    capabilities = frozenset({
        "breakdown", "text_batch", "alt_batch", "svg_label_batch", "icon_batch",
        "image_embedding",
    })

    def __init__(self, *, breakdown_reply=None, text_replies=None, alt_replies=None,
                 label_replies=None, icon_replies=None, embed_reply=None):
        self.breakdown_reply = breakdown_reply
        self.text_replies = list(text_replies or [])
        self.alt_replies = list(alt_replies or [])
        self.label_replies = list(label_replies or [])
        self.icon_replies = list(icon_replies or [])
        self.embed_reply = embed_reply
        self.calls: list[tuple] = []

    def _next(self, queue, fallback):
        return queue.pop(0) if queue else fallback

    def breakdown(self, task):
        self.calls.append(("breakdown", task))
        return self.breakdown_reply

    def score_texts(self, breakdown, items):
        self.calls.append(("text_batch", [i.element_id for i in items]))
        return self._next(self.text_replies, [0] * len(items))

    def score_alts(self, breakdown, alts):
        self.calls.append(("alt_batch", list(alts)))
        return self._next(self.alt_replies, [0] * len(alts))

    def label_svgs(self, paths):
        self.calls.append(("svg_label_batch", list(paths)))
        return self._next(self.label_replies, ["icon"] * len(paths))

    def score_icons(self, breakdown, labels):
        self.calls.append(("icon_batch", list(labels)))
        return self._next(self.icon_replies, [0] * len(labels))

    def embed_similarity(self, breakdown, source):
        self.calls.append(("image_embedding", source))
        return self.embed_reply

    def count(self, op: str) -> int:
        return sum(1 for call in self.calls if call[0] == op)


class IndexEchoBackend(ScorerBackend):
    """Score i-th item of every batch as i % 101; labels echo positions."""

    capabilities = frozenset({
        "breakdown", "text_batch", "alt_batch", "svg_label_batch", "icon_batch",
    })

    def breakdown(self, task):
        return {"entity": task, "constraints": [], "actions": [],
                "default": [], "fallback": []}

    def score_texts(self, breakdown, items):
        return [i % 101 for i in range(len(items))]

    def score_alts(self, breakdown, alts):
        return [i % 101 for i in range(len(alts))]

    def label_svgs(self, paths):
        return [f"icon-{i}" for i in range(len(paths))]

    def score_icons(self, breakdown, labels):
        return [i % 101 for i in range(len(labels))]


class CountingBackend(ScorerBackend):
    """Delegates to an inner backend, counting every call."""

    def __init__(self, inner):
        self.inner = inner
        self.total_calls = 0

    @property
    def capabilities(self):
        return self.inner.capabilities

    def _delegate(self, name, *args):
        self.total_calls += 1
        return getattr(self.inner, name)(*args)

    def breakdown(self, task):
        return self._delegate("breakdown", task)

    def score_texts(self, breakdown, items):
        return self._delegate("score_texts", breakdown, items)

    def score_alts(self, breakdown, alts):
        return self._delegate("score_alts", breakdown, alts)

    def label_svgs(self, paths):
        return self._delegate("label_svgs", paths)

    def score_icons(self, breakdown, labels):
        return self._delegate("score_icons", breakdown, labels)

    def embed_similarity(self, breakdown, source):
        return self._delegate("embed_similarity", breakdown, source)


def tree_from_parents(parents: list, tags: list | None = None) -> ElementTree:
    """Build an ElementTree from a parent array (parents[i] < i, root None).

    Nodes are renumbered in pre-order so engine invariants hold.
    """
    n = len(parents)
    children: dict[int, list[int]] = {i: [] for i in range(n)}
    root_old = 0
    for i, parent in enumerate(parents):
        if parent is None:
            root_old = i
        else:
            children[parent].append(i)

    nodes: dict[int, ElementNode] = {}
    mapping: dict[int, int] = {}
    counter = 0

    def visit(old: int, new_parent) -> int:
        nonlocal counter
        new_id = counter
        counter += 1
        mapping[old] = new_id
        nodes[new_id] = ElementNode(
            id=new_id,
            tag=(tags[old] if tags else "div"),
            text="",
            parent=new_parent,
            children=[],
            order_index=new_id,
        )
        for child in children[old]:
            nodes[new_id].children.append(visit(child, new_id))
        return new_id

    root_id = visit(root_old, None)
    tree = ElementTree(nodes, root_id)
    tree.validate()
    return tree


def random_tree(rng: random.Random, max_nodes: int = 1000) -> ElementTree:
    """Random recursive tree; occasionally a deep chain to stress depth."""
    if rng.random() < 0.05:
        n = rng.randint(1, 250)
        parents = [None] + [i for i in range(n - 1)]
    else:
        n = rng.randint(1, max_nodes)
        parents = [None] + [rng.randrange(i) for i in range(1, n)]
    return tree_from_parents(parents)


def random_scores(rng: random.Random, tree: ElementTree, density: float = 0.6) -> ScoreMap:
    scores = ScoreMap()
    for node in tree.walk():
        if rng.random() < density:
            scores.set(node.id, rng.randint(0, 100), "text")
    return scores


def brute_force_subtree_max(tree: ElementTree, scores: ScoreMap) -> dict[int, int]:
    """Independent oracle: enumerate every node's subtree explicitly."""
    result = {}
    for node in tree.walk():
        best = 0
        stack = [node.id]
        while stack:
            nid = stack.pop()
            best = max(best, scores.get(nid, 0))
            stack.extend(tree.get(nid).children)
        result[node.id] = best
    return result
