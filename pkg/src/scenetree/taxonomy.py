"""Semantic taxonomy: parsing, validation and structural queries.

A taxonomy is a rooted tree read from an indented text document. Leaves are
concrete scene classes, internal nodes are meta-classes that group them by
activity. Every iteration order in the package derives from document order
(preorder over the tree), so all downstream results are deterministic for a
given file. Instances are immutable after parsing and safe to share across
threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources

DEFAULT_TAXONOMY_RESOURCE = "data/food_scenes.txt"


class TaxonomyError(ValueError):
    """Malformed taxonomy document or invalid structural query."""


def node_id_from_name(name: str) -> str:
    """Node id: lowercase display name with spaces replaced by hyphens."""
    return name.strip().lower().replace(" ", "-")


@dataclass(frozen=True)
class TaxonomyNode:
    id: str
    name: str
    parent: str | None
    children: tuple[str, ...]
    depth: int

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class Taxonomy:
    """Validated rooted tree of named nodes.

    ``nodes`` maps id to node in document order, ``leaves`` lists the
    zero-child nodes in document order, ``max_depth`` is the depth of the
    deepest node (root has depth 0).
    """

    nodes: dict[str, TaxonomyNode]
    root: str
    leaves: tuple[str, ...]
    max_depth: int

    def node(self, node_id: str) -> TaxonomyNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TaxonomyError(f"unknown node {node_id!r}") from None

    def preorder(self) -> tuple[str, ...]:
        """All node ids in document (preorder) order."""
        return tuple(self.nodes)

    def internal_nodes(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if self.nodes[n].children)

    def path_to_root(self, node_id: str) -> list[str]:
        """Ids from ``node_id`` up to the root, consecutive child to parent."""
        node = self.node(node_id)
        path = [node.id]
        while node.parent is not None:
            node = self.nodes[node.parent]
            path.append(node.id)
        return path

    def ancestor_at_level(self, node_id: str, level: int) -> str:
        """The unique ancestor of ``node_id`` at the requested depth.

        ``level`` must be between 0 and the node's own depth; the node itself
        is returned when ``level`` equals its depth.
        """
        path = self.path_to_root(node_id)
        depth = len(path) - 1
        if not 0 <= level <= depth:
            raise TaxonomyError(
                f"level {level} out of range for node {node_id!r} at depth {depth}"
            )
        return path[depth - level]

    def label_at_level(self, node_id: str, level: int) -> str:
        """Carry-down label: a node shallower than ``level`` represents itself.

        This is the labelling rule that gives every sample a class at every
        level even when leaves sit at different depths.
        """
        if not 0 <= level <= self.max_depth:
            raise TaxonomyError(f"level {level} outside [0, {self.max_depth}]")
        return self.ancestor_at_level(node_id, min(level, self.nodes[node_id].depth))

    def nodes_at_level(self, level: int) -> list[str]:
        """Nodes whose depth equals ``level``, plus shallower leaves carried down.

        The result partitions the leaf set at every level and is returned in
        document order.
        """
        if not 0 <= level <= self.max_depth:
            raise TaxonomyError(f"level {level} outside [0, {self.max_depth}]")
        out = []
        for nid, node in self.nodes.items():
            if node.depth == level or (node.is_leaf and node.depth < level):
                out.append(nid)
        return out

    def child_towards(self, ancestor_id: str, leaf_id: str) -> str:
        """The child of ``ancestor_id`` lying on the path to ``leaf_id``."""
        path = self.path_to_root(leaf_id)
        try:
            i = path.index(ancestor_id)
        except ValueError:
            raise TaxonomyError(
                f"{ancestor_id!r} is not an ancestor of {leaf_id!r}"
            ) from None
        if i == 0:
            raise TaxonomyError(f"{leaf_id!r} has no child towards itself")
        return path[i - 1]

    def serialize(self) -> str:
        """Canonical text form; ``parse_taxonomy`` round-trips it exactly."""
        lines = [
            "  " * self.nodes[nid].depth + self.nodes[nid].name
            for nid in self.nodes
        ]
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


def parse_taxonomy(text: str) -> Taxonomy:
    """Parse an indented taxonomy document into a validated :class:`Taxonomy`.

    Format: UTF-8 text, one node per line, two spaces of indentation per
    depth level, node name is the trimmed line content, node id is the
    lowercased name with spaces replaced by hyphens. Lines whose first
    non-blank character is ``#`` are comments. The line format cannot express
    cycles or multiple parents, and the parser rejects duplicate ids, orphan
    nodes (indentation jumping more than one level), multiple roots, odd or
    tab indentation, and empty documents.
    """
    entries: list[tuple[int, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        indent = len(raw) - len(raw.lstrip(" "))
        if raw.lstrip(" ")[:1] == "\t" or "\t" in raw[:indent]:
            raise TaxonomyError(f"line {lineno}: tab in indentation")
        if indent % 2 != 0:
            raise TaxonomyError(
                f"line {lineno}: indentation must be two spaces per level"
            )
        entries.append((indent // 2, stripped, lineno))

    if not entries:
        raise TaxonomyError("empty taxonomy document")

    names: dict[str, str] = {}
    parents: dict[str, str | None] = {}
    children: dict[str, list[str]] = {}
    depths: dict[str, int] = {}
    stack: list[str] = []  # stack[d] = most recent node at depth d
    root: str | None = None

    for depth, name, lineno in entries:
        nid = node_id_from_name(name)
        if nid in names:
            raise TaxonomyError(f"line {lineno}: duplicate id {nid!r}")
        if depth == 0:
            if root is not None:
                raise TaxonomyError(f"line {lineno}: multiple roots")
            root = nid
            parent = None
        else:
            if depth > len(stack):
                raise TaxonomyError(
                    f"line {lineno}: orphan node {name!r} at depth {depth}, "
                    f"no parent at depth {depth - 1}"
                )
            parent = stack[depth - 1]
            children[parent].append(nid)
        names[nid] = name
        parents[nid] = parent
        children[nid] = []
        depths[nid] = depth
        del stack[depth:]
        stack.append(nid)

    nodes = {
        nid: TaxonomyNode(
            id=nid,
            name=names[nid],
            parent=parents[nid],
            children=tuple(children[nid]),
            depth=depths[nid],
        )
        for nid in names
    }
    leaves = tuple(nid for nid in nodes if not nodes[nid].children)
    assert root is not None
    return Taxonomy(
        nodes=nodes,
        root=root,
        leaves=leaves,
        max_depth=max(depths.values()),
    )


def load_taxonomy(path: str) -> Taxonomy:
    with open(path, encoding="utf-8") as fh:
        return parse_taxonomy(fh.read())


def default_taxonomy() -> Taxonomy:
    """The food-scene taxonomy shipped with the package."""
    text = (
        resources.files("scenetree")
        .joinpath(DEFAULT_TAXONOMY_RESOURCE)
        .read_text(encoding="utf-8")
    )
    return parse_taxonomy(text)
