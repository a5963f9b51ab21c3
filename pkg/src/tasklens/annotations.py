"""Per-node presentation annotations produced by the rendering modes.

Annotations never mutate the element tree; they are applied at
serialization time (or client-side against a live page).
"""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class NodeAnnotation:
    """Style additions or a hidden marker for one node.

    A node is either styled or hidden, never both.
    """

    styles: dict[str, str] = field(default_factory=dict)
    hidden: bool = False
    inert: bool = False


class AnnotationSet:
    """Map of node id -> :class:`NodeAnnotation`."""

    def __init__(self) -> None:
        self.entries: dict[int, NodeAnnotation] = {}

    def style(self, node_id: int, prop: str, value: str) -> None:
        ann = self.entries.setdefault(node_id, NodeAnnotation())
        if ann.hidden:
            raise ValueError(f"node {node_id} is hidden; cannot also style it")
        ann.styles[prop] = value

    def hide(self, node_id: int, inert: bool = False) -> None:
        ann = self.entries.setdefault(node_id, NodeAnnotation())
        if ann.styles:
            raise ValueError(f"node {node_id} is styled; cannot also hide it")
        ann.hidden = True
        ann.inert = ann.inert or inert

    def hidden_ids(self) -> set[int]:
        return {nid for nid, ann in self.entries.items() if ann.hidden}

    def __len__(self) -> int:
        return len(self.entries)
