"""HTML parsing into an annotated element tree, and serialization back to HTML.

The parser is built on the stdlib tokenizer and recovers from malformed
markup the way browsers do at a coarse grain: unclosed tags are closed at
end of input, stray end tags are dropped, and a small implied-close table
handles the common sibling patterns (``<li>``, ``<p>``, table cells).
``script``/``style``/``noscript`` subtrees never enter the tree.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from html import escape
from html.parser import HTMLParser
from typing import Iterator, Optional

from .annotations import AnnotationSet
from .errors import DanglingAnnotation, EmptyDocument, EncodingError

EXCLUDED_TAGS = frozenset({"script", "style", "noscript"})

VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr",
})

# Tags scored through the visual channels, never through text batches.
VISUAL_TAGS = frozenset({"img", "svg", "iframe"})

_HEADINGS = frozenset({"h1", "h2", "h3", "h4", "h5", "h6"})

_P_CLOSERS = frozenset({
    "address", "article", "aside", "blockquote", "div", "dl", "fieldset",
    "footer", "form", "header", "hr", "li", "main", "nav", "ol", "p",
    "pre", "section", "table", "ul",
}) | _HEADINGS

# Incoming start tag -> open tags it implicitly closes while they sit on
# top of the stack. Applied identically on every parse, so serialized
# output re-parses to the same structure.
_CLOSES: dict[str, frozenset[str]] = {
    "li": frozenset({"li"}),
    "dd": frozenset({"dd", "dt"}),
    "dt": frozenset({"dd", "dt"}),
    "tr": frozenset({"tr", "td", "th"}),
    "td": frozenset({"td", "th"}),
    "th": frozenset({"td", "th"}),
    "option": frozenset({"option"}),
    "optgroup": frozenset({"option", "optgroup"}),
    "thead": frozenset({"tr", "td", "th", "tbody", "thead", "tfoot"}),
    "tbody": frozenset({"tr", "td", "th", "tbody", "thead", "tfoot"}),
    "tfoot": frozenset({"tr", "td", "th", "tbody", "thead", "tfoot"}),
}
for _h in _HEADINGS:
    _CLOSES[_h] = _HEADINGS
for _t in _P_CLOSERS:
    _CLOSES[_t] = _CLOSES.get(_t, frozenset()) | {"p"}

_WS_RE = re.compile(r"\s+")
_CHARSET_RE = re.compile(rb"""charset\s*=\s*["']?([a-zA-Z0-9_\-:.]+)""")


def _normalize_text(chunks: list[str]) -> str:
    return _WS_RE.sub(" ", "".join(chunks)).strip()


@dataclass
class ElementNode:
    """One element of the parsed tree.

    ``relevance`` is always False and ``score`` always None at construction;
    scores live in a separate ScoreMap so the tree stays immutable.
    """

    id: int
    tag: str
    text: str
    parent: Optional[int]
    children: list[int]
    order_index: int
    relevance: bool = False
    score: Optional[int] = None
    attrs: dict[str, Optional[str]] = field(default_factory=dict)


@dataclass
class VisualElement:
    """An image, SVG icon, or iframe discovered in the tree."""

    element_id: int
    kind: str  # "image" | "svg_icon" | "iframe"
    source: Optional[str] = None
    alt_text: Optional[str] = None
    path_data: Optional[str] = None


@dataclass
class ScoringBatchItem:
    """One text element as sent to the scorer backend."""

    element_id: int
    tag: str
    text: str
    order_index: int


class ElementTree:
    """Immutable element tree with engine-assigned ids in pre-order."""

    def __init__(self, nodes: dict[int, ElementNode], root_id: int):
        self.nodes = nodes
        self.root_id = root_id

    @property
    def root(self) -> ElementNode:
        return self.nodes[self.root_id]

    def get(self, node_id: int) -> ElementNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.nodes

    def walk(self) -> Iterator[ElementNode]:
        """Pre-order traversal from the root."""
        stack = [self.root_id]
        while stack:
            node = self.nodes[stack.pop()]
            yield node
            stack.extend(reversed(node.children))

    def ancestors(self, node_id: int) -> Iterator[int]:
        parent = self.nodes[node_id].parent
        while parent is not None:
            yield parent
            parent = self.nodes[parent].parent

    def in_head(self, node_id: int) -> bool:
        if self.nodes[node_id].tag == "head":
            return False
        return any(self.nodes[a].tag == "head" for a in self.ancestors(node_id))

    def digest(self) -> str:
        """Stable fingerprint of (structure, tags, text)."""
        h = hashlib.sha256()
        for node in self.walk():
            depth = sum(1 for _ in self.ancestors(node.id))
            h.update(f"{depth}|{node.tag}|{node.text}\n".encode("utf-8"))
        return h.hexdigest()

    def validate(self) -> None:
        """Assert the structural invariants; raises AssertionError on breach."""
        seen_parentless = [n.id for n in self.nodes.values() if n.parent is None]
        assert seen_parentless == [self.root_id], "exactly one root expected"
        last_order = -1
        for node in self.walk():
            assert node.tag not in EXCLUDED_TAGS, f"excluded tag in tree: {node.tag}"
            assert node.order_index > last_order, "pre-order order_index must increase"
            last_order = node.order_index
            for child_id in node.children:
                assert self.nodes[child_id].parent == node.id, "parent/child mismatch"
            if node.parent is not None:
                assert node.id in self.nodes[node.parent].children, "child link missing"
        assert sum(1 for _ in self.walk()) == len(self.nodes), "unreachable nodes"


@dataclass
class ParseOptions:
    """Parsing knobs; ``encoding`` overrides charset detection for byte input."""

    encoding: Optional[str] = None


class _BuildNode:
    __slots__ = ("tag", "attrs", "text_chunks", "children")

    def __init__(self, tag: str, attrs: dict[str, Optional[str]]):
        self.tag = tag
        self.attrs = attrs
        self.text_chunks: list[str] = []
        self.children: list["_BuildNode"] = []


class _TreeBuilder(HTMLParser):
    """Stack-based tree construction with coarse browser-style recovery."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.sentinel = _BuildNode("#document", {})
        self.stack: list[_BuildNode] = [self.sentinel]
        self.skip_depth = 0

    def _open_implicit(self, tag: str) -> None:
        node = _BuildNode(tag, {})
        self.stack[-1].children.append(node)
        self.stack.append(node)

    def handle_starttag(self, tag, attrs):
        if self.skip_depth:
            if tag in EXCLUDED_TAGS:
                self.skip_depth += 1
            return
        if tag in EXCLUDED_TAGS:
            self.skip_depth = 1
            return
        closes = _CLOSES.get(tag)
        if closes:
            while len(self.stack) > 1 and self.stack[-1].tag in closes:
                self.stack.pop()
        # Browsers wrap stray table rows/cells in implicit sections; doing
        # the same keeps engine ids aligned with live-DOM snapshots.
        top = self.stack[-1].tag
        if tag == "tr" and top == "table":
            self._open_implicit("tbody")
        elif tag in ("td", "th"):
            if top == "table":
                self._open_implicit("tbody")
                self._open_implicit("tr")
            elif top in ("tbody", "thead", "tfoot"):
                self._open_implicit("tr")
        node = _BuildNode(tag, dict(attrs))
        self.stack[-1].children.append(node)
        if tag not in VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        if self.skip_depth or tag in EXCLUDED_TAGS:
            return
        node = _BuildNode(tag, dict(attrs))
        self.stack[-1].children.append(node)

    def handle_endtag(self, tag):
        if self.skip_depth:
            if tag in EXCLUDED_TAGS:
                self.skip_depth -= 1
            return
        if tag in VOID_TAGS:
            return
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # stray end tag: drop

    def handle_data(self, data):
        if self.skip_depth or not data:
            return
        self.stack[-1].text_chunks.append(data)


def _decode(raw: bytes, override: Optional[str]) -> str:
    candidates: list[str] = []
    if override:
        candidates.append(override)
    if raw.startswith(b"\xef\xbb\xbf"):
        candidates.append("utf-8-sig")
    elif raw.startswith(b"\xff\xfe"):
        candidates.append("utf-16-le")
    elif raw.startswith(b"\xfe\xff"):
        candidates.append("utf-16-be")
    match = _CHARSET_RE.search(raw[:2048])
    if match:
        candidates.append(match.group(1).decode("ascii"))
    candidates.append("utf-8")
    for enc in candidates:
        try:
            return raw.decode(enc)
        except (UnicodeDecodeError, LookupError):
            continue
    raise EncodingError("input bytes not decodable as %s" % ", ".join(candidates))


def _freeze(build_root: _BuildNode) -> ElementTree:
    nodes: dict[int, ElementNode] = {}
    counter = 0

    def visit(bnode: _BuildNode, parent: Optional[int]) -> int:
        nonlocal counter
        node_id = counter
        counter += 1
        node = ElementNode(
            id=node_id,
            tag=bnode.tag,
            text=_normalize_text(bnode.text_chunks),
            parent=parent,
            children=[],
            order_index=node_id,
            attrs=bnode.attrs,
        )
        nodes[node_id] = node
        for child in bnode.children:
            node.children.append(visit(child, node_id))
        return node_id

    root_id = visit(build_root, None)
    return ElementTree(nodes, root_id)


def parse_document(html, options: Optional[ParseOptions] = None) -> ElementTree:
    """Parse HTML text or bytes into an :class:`ElementTree`.

    Malformed input is recovered, never rejected. Raises
    :class:`EmptyDocument` when no element or text survives, and
    :class:`EncodingError` when byte input cannot be decoded.
    """
    options = options or ParseOptions()
    if isinstance(html, (bytes, bytearray)):
        text = _decode(bytes(html), options.encoding)
    else:
        text = html

    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    top = builder.sentinel

    stray_text = _normalize_text(top.text_chunks)
    if not top.children and not stray_text:
        raise EmptyDocument("no parseable element in input")

    if len(top.children) == 1 and not stray_text and top.children[0].tag in ("html", "body"):
        root = top.children[0]
    else:
        root = _BuildNode("body", {})
        root.text_chunks = top.text_chunks
        root.children = top.children
    return _freeze(root)


def extract_visuals(tree: ElementTree) -> list[VisualElement]:
    """Collect image/SVG-icon/iframe elements in document order.

    SVG elements without a ``<path d=...>`` descendant carry nothing a
    scorer could use, so they yield no entry.
    """
    visuals: list[VisualElement] = []
    for node in tree.walk():
        if node.tag == "img":
            visuals.append(VisualElement(
                element_id=node.id, kind="image",
                source=node.attrs.get("src"), alt_text=node.attrs.get("alt"),
            ))
        elif node.tag == "svg":
            path_data = _first_path_d(tree, node)
            if path_data is not None:
                visuals.append(VisualElement(
                    element_id=node.id, kind="svg_icon", path_data=path_data,
                ))
        elif node.tag == "iframe":
            visuals.append(VisualElement(
                element_id=node.id, kind="iframe",
                source=node.attrs.get("src"), alt_text=node.attrs.get("title"),
            ))
    return visuals


def _first_path_d(tree: ElementTree, svg: ElementNode) -> Optional[str]:
    stack = list(reversed(svg.children))
    while stack:
        node = tree.get(stack.pop())
        if node.tag == "path":
            d = node.attrs.get("d")
            if d is not None:
                return d
        stack.extend(reversed(node.children))
    return None


def iter_text_nodes(tree: ElementTree) -> Iterator[ElementNode]:
    """All text-bearing nodes, visual tags excluded, in document order."""
    for node in tree.walk():
        if node.tag in VISUAL_TAGS:
            continue
        if node.text:
            yield node


def is_batchable(tree: ElementTree, node: ElementNode) -> bool:
    """Text nodes eligible for scorer batches: >=3 chars trimmed, and not
    head metadata (the head's title is the one exception)."""
    if node.tag in VISUAL_TAGS or len(node.text.strip()) < 3:
        return False
    if tree.in_head(node.id) and node.tag != "title":
        return False
    return True


def build_text_batches(tree: ElementTree, batch_size: int = 200) -> list[list[ScoringBatchItem]]:
    """Partition eligible text nodes into order-preserving batches."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    items = [
        ScoringBatchItem(node.id, node.tag, node.text, node.order_index)
        for node in tree.walk()
        if node.text and is_batchable(tree, node)
    ]
    return [items[i:i + batch_size] for i in range(0, len(items), batch_size)]


def serialize(tree: ElementTree, annotations: Optional[AnnotationSet] = None) -> str:
    """Emit UTF-8 HTML for the tree, applying per-node annotations.

    Every element carries a ``data-tm-id`` attribute with its engine id.
    Hidden nodes stay in the output but carry ``aria-hidden="true"``,
    ``tabindex="-1"``, an inline ``display:none``, and ``inert`` on the
    top of each hidden subtree.
    """
    annotations = annotations or AnnotationSet()
    for node_id in annotations.entries:
        if node_id not in tree:
            raise DanglingAnnotation(f"annotation targets unknown node id {node_id}")

    out: list[str] = []

    def emit(node_id: int) -> None:
        node = tree.get(node_id)
        ann = annotations.entries.get(node_id)
        attrs = {k: v for k, v in node.attrs.items() if k != "data-tm-id"}
        attrs["data-tm-id"] = str(node.id)

        style_parts = []
        if attrs.get("style"):
            style_parts.append(attrs["style"].rstrip("; "))
        if ann is not None:
            style_parts.extend(f"{k}: {v}" for k, v in ann.styles.items())
            if ann.hidden:
                style_parts.append("display: none")
                attrs["aria-hidden"] = "true"
                attrs["tabindex"] = "-1"
                if ann.inert:
                    attrs["inert"] = None
        if style_parts:
            attrs["style"] = "; ".join(style_parts)

        rendered = "".join(
            f' {k}' if v is None else f' {k}="{escape(v, quote=True)}"'
            for k, v in attrs.items()
        )
        out.append(f"<{node.tag}{rendered}>")
        if node.text:
            out.append(escape(node.text, quote=False))
        for child_id in node.children:
            emit(child_id)
        if node.tag not in VOID_TAGS:
            out.append(f"</{node.tag}>")

    emit(tree.root_id)
    return "".join(out)


def tree_equal(a: ElementTree, b: ElementTree) -> bool:
    """Structural equality: tag, normalized text, and child order."""

    def eq(id_a: int, id_b: int) -> bool:
        na, nb = a.get(id_a), b.get(id_b)
        if na.tag != nb.tag or na.text != nb.text:
            return False
        if len(na.children) != len(nb.children):
            return False
        return all(eq(ca, cb) for ca, cb in zip(na.children, nb.children))

    return eq(a.root_id, b.root_id)
