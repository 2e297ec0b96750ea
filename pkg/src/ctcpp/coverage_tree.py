"""Dynamic coverage tree of disconnected planar subregions."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .errors import DomainError, StateError
from .occupancy import Subregion, Tiling


class NodeState(str, enum.Enum):
    UNEXPLORED = "U"
    EXPLORED = "E"


@dataclass
class TreeNode:
    id: int
    level: int
    region: Subregion
    parent: int | None = None
    state: NodeState = NodeState.UNEXPLORED
    children: list[int] = field(default_factory=list)


class CoverageTree:
    """Rooted tree; node ``0`` is the surface region at level 0."""

    def __init__(self, root_region: Subregion):
        if root_region is None or len(root_region) == 0:
            raise DomainError("the root region must be non-empty")
        self.nodes: dict[int, TreeNode] = {0: TreeNode(0, 0, root_region)}
        self.root = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> TreeNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise DomainError(f"no node {node_id} in the tree") from None

    @property
    def branches(self) -> list[tuple[int, int]]:
        return [(n.parent, n.id) for n in self.nodes.values() if n.parent is not None]

    @property
    def unexplored(self) -> list[int]:
        return [i for i, n in self.nodes.items() if n.state is NodeState.UNEXPLORED]

    @property
    def explored(self) -> list[int]:
        return [i for i, n in self.nodes.items() if n.state is NodeState.EXPLORED]

    def at_level(self, level: int) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.level == level]

    def add_children(self, parent_id: int, subregions) -> list[int]:
        parent = self.node(parent_id)
        if parent.state is not NodeState.EXPLORED:
            raise StateError(f"node {parent_id} must be explored before it can receive children")
        new_ids = []
        for region in subregions:
            if len(region) == 0:
                raise DomainError("child subregions must be non-empty")
            nid = len(self.nodes)
            self.nodes[nid] = TreeNode(nid, parent.level + 1, region, parent_id)
            parent.children.append(nid)
            new_ids.append(nid)
        return new_ids

    def extend_region(self, node_id: int, region: Subregion) -> None:
        """Replace an unexplored node's region with a grown one."""
        node = self.node(node_id)
        if node.state is not NodeState.UNEXPLORED:
            raise StateError(f"node {node_id} is already explored")
        if not node.region.cells <= region.cells:
            raise DomainError("a region may only grow")
        node.region = region

    def mark_explored(self, node_id: int) -> None:
        node = self.node(node_id)
        if node.state is NodeState.EXPLORED:
            raise StateError(f"node {node_id} is already explored")
        node.state = NodeState.EXPLORED

    def ancestors(self, node_id: int) -> list[int]:
        """Path from the node up to the root, inclusive of both."""
        path = [node_id]
        while self.node(path[-1]).parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path

    def common_ancestor(self, a: int, b: int) -> int:
        # parent-pointer walk; trees here are a handful of levels deep
        seen = set(self.ancestors(a))
        for n in self.ancestors(b):
            if n in seen:
                return n
        raise StateError("nodes do not share a root")

    def common_ancestor_level(self, a: int, b: int) -> int:
        return self.nodes[self.common_ancestor(a, b)].level

    def check(self) -> None:
        """Assert the structural invariants; raises ``StateError`` on violation."""
        roots = [n for n in self.nodes.values() if n.parent is None]
        if len(roots) != 1 or roots[0].level != 0:
            raise StateError("tree must have exactly one level-0 root")
        for n in self.nodes.values():
            if n.parent is not None:
                p = self.nodes.get(n.parent)
                if p is None or n.id not in p.children:
                    raise StateError(f"node {n.id} has a dangling parent link")
                if n.level != p.level + 1:
                    raise StateError(f"node {n.id} level {n.level} under parent level {p.level}")
        reached = set()
        stack = [self.root]
        while stack:
            i = stack.pop()
            if i in reached:
                raise StateError("cycle detected")
            reached.add(i)
            stack.extend(self.nodes[i].children)
        if reached != set(self.nodes):
            raise StateError("unreachable nodes")

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "nodes": [
                {
                    "id": n.id,
                    "level": n.level,
                    "state": n.state.value,
                    "centroid": list(n.region.centroid),
                    "parent": n.parent,
                    "cells": sorted([list(c) for c in n.region.cells]),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "CoverageTree":
        tree = cls.__new__(cls)
        tree.root = d["root"]
        tree.nodes = {}
        for nd in d["nodes"]:
            cells = frozenset(tuple(c) for c in nd["cells"])
            region = Subregion(cells, tuple(nd["centroid"]))
            tree.nodes[nd["id"]] = TreeNode(nd["id"], nd["level"], region, nd["parent"], NodeState(nd["state"]))
        for n in tree.nodes.values():
            if n.parent is not None:
                tree.nodes[n.parent].children.append(n.id)
        return tree

    def to_dot(self) -> str:
        lines = ["digraph coverage_tree {"]
        for n in sorted(self.nodes.values(), key=lambda n: n.id):
            style = "filled" if n.state is NodeState.EXPLORED else "dashed"
            lines.append(
                f'  n{n.id} [label="n{n.id} L{n.level}\\n{len(n.region)} cells", style={style}];'
            )
        for p, c in self.branches:
            lines.append(f"  n{p} -> n{c};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def root_region(tiling: Tiling) -> Subregion:
    cells = [(iy, ix) for iy in range(tiling.ny) for ix in range(tiling.nx)]
    return Subregion.from_cells(cells, tiling)
