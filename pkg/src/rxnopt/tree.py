"""Hierarchical optimization tree: UCB path selection and reward backpropagation.

The tree shape is fixed at construction (one level per variable, one child per
candidate subset); only visit counts and cumulative returns change afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .space import Condition, SearchSpace, SpaceError, restrict_space, value_key


class TreeError(ValueError):
    """Invalid path, node id, or tree/space mismatch."""


@dataclass
class TreeNode:
    id: int
    level: int
    variable: str | None  # None at the root
    subset: int | None
    parent: int | None
    children: list[int] = field(default_factory=list)
    n: int = 0
    q: float = 0.0

    @property
    def mean(self) -> float:
        return self.q / self.n if self.n else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "level": self.level,
            "variable": self.variable,
            "subset": self.subset,
            "parent": self.parent,
            "children": list(self.children),
            "n": self.n,
            "q": self.q,
        }


@dataclass
class OptTree:
    """Node store plus the clustering that maps condition values to subsets."""

    nodes: dict[int, TreeNode]
    root: int
    c_p: float
    ranking: list[str]  # variable of level 1 first
    clusterings: dict[str, dict[str, int]]  # variable -> value key -> subset

    def node(self, node_id: int) -> TreeNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TreeError(f"unknown node id {node_id}") from None

    def leaves(self) -> list[int]:
        depth = len(self.ranking)
        return sorted(nid for nid, nd in self.nodes.items() if nd.level == depth)

    def is_leaf(self, node_id: int) -> bool:
        return not self.node(node_id).children

    def path_to(self, leaf_id: int) -> list[int]:
        path = [leaf_id]
        cur = self.node(leaf_id)
        while cur.parent is not None:
            path.append(cur.parent)
            cur = self.node(cur.parent)
        if path[-1] != self.root:
            raise TreeError(f"node {leaf_id} is not attached to the root")
        return list(reversed(path))

    def leaf_for(self, cond: Condition) -> int:
        """Leaf whose per-variable subsets contain this condition's values."""
        cur = self.node(self.root)
        for var in self.ranking:
            cmap = self.clusterings.get(var)
            if cmap is None:
                raise TreeError(f"tree has no clustering for variable {var!r}")
            key = value_key(cond.value(var))
            if key not in cmap:
                raise TreeError(f"value {key!r} of variable {var!r} not in any subset")
            subset = cmap[key]
            nxt = None
            for cid in cur.children:
                if self.nodes[cid].subset == subset:
                    nxt = self.nodes[cid]
                    break
            if nxt is None:
                raise TreeError(f"no child of node {cur.id} for subset {subset} of {var!r}")
            cur = nxt
        return cur.id

    def subset_values(self, variable: str, subset: int) -> list[str]:
        cmap = self.clusterings[variable]
        return [k for k, s in cmap.items() if s == subset]

    def leaf_signature(self, leaf_id: int) -> tuple:
        """Identity of a leaf by its per-variable value sets (structure-independent)."""
        sig = []
        for nid in self.path_to(leaf_id)[1:]:
            nd = self.nodes[nid]
            sig.append((nd.variable, frozenset(self.subset_values(nd.variable, nd.subset))))
        return tuple(sorted(sig))

    def to_dict(self) -> dict[str, Any]:
        return {
            "root": self.root,
            "c_p": self.c_p,
            "ranking": list(self.ranking),
            "clusterings": {v: dict(m) for v, m in self.clusterings.items()},
            "nodes": [self.nodes[k].to_dict() for k in sorted(self.nodes)],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "OptTree":
        nodes = {
            nd["id"]: TreeNode(
                id=nd["id"],
                level=nd["level"],
                variable=nd["variable"],
                subset=nd["subset"],
                parent=nd["parent"],
                children=list(nd["children"]),
                n=int(nd["n"]),
                q=float(nd["q"]),
            )
            for nd in d["nodes"]
        }
        return cls(
            nodes=nodes,
            root=d["root"],
            c_p=float(d["c_p"]),
            ranking=list(d["ranking"]),
            clusterings={v: {k: int(s) for k, s in m.items()} for v, m in d["clusterings"].items()},
        )


def ucb(node: TreeNode, parent_visits: int, c_p: float) -> float:
    """UCB1 score mean + c_p * sqrt(ln(N_parent) / n); unvisited nodes score +inf."""
    if node.n == 0:
        return math.inf
    if parent_visits < node.n:
        raise TreeError(f"parent visits {parent_visits} < child visits {node.n}")
    return node.q / node.n + c_p * math.sqrt(math.log(parent_visits) / node.n)


def _argmax_ties(scores: list[float], rng: np.random.Generator) -> int:
    best = max(scores)
    if math.isinf(best):
        ties = [i for i, s in enumerate(scores) if math.isinf(s)]
    else:
        tol = 1e-12 * max(1.0, abs(best))
        ties = [i for i, s in enumerate(scores) if s >= best - tol]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def select_path(tree: OptTree, rng: np.random.Generator) -> list[int]:
    """Greedy UCB descent from root to a leaf; ties broken uniformly via rng."""
    path = [tree.root]
    cur = tree.node(tree.root)
    while cur.children:
        scores = [ucb(tree.nodes[c], cur.n, tree.c_p) for c in cur.children]
        cur = tree.nodes[cur.children[_argmax_ties(scores, rng)]]
        path.append(cur.id)
    return path


def backpropagate(tree: OptTree, path: list[int], r_exp: float) -> None:
    """Apply the three per-node update rules along a root->leaf path."""
    if not path or path[0] != tree.root:
        raise TreeError("path must start at the root")
    for prev, nid in zip(path, path[1:]):
        if nid not in tree.node(prev).children:
            raise TreeError(f"{nid} is not a child of {prev}")
    if not tree.is_leaf(path[-1]):
        raise TreeError("path must end at a leaf")
    for nid in path:
        node = tree.nodes[nid]
        node.n += 1
        node.q += r_exp


def batch_select(tree: OptTree, q: int, rng: np.random.Generator) -> list[int]:
    """Select q leaves by repeated UCB descent with rolled-back virtual visits.

    Between draws each path node gets a virtual (n+1, Q+leaf mean) update so the
    batch spreads instead of collapsing onto one leaf; the tree is restored to
    its exact prior state afterwards.
    """
    if q < 1:
        raise TreeError("q must be >= 1")
    saved = {nid: (nd.n, nd.q) for nid, nd in tree.nodes.items()}
    picks: list[int] = []
    try:
        for _ in range(q):
            path = select_path(tree, rng)
            leaf = tree.nodes[path[-1]]
            picks.append(leaf.id)
            virtual_reward = leaf.mean
            for nid in path:
                node = tree.nodes[nid]
                node.n += 1
                node.q += virtual_reward
    finally:
        for nid, (n, qv) in saved.items():
            tree.nodes[nid].n = n
            tree.nodes[nid].q = qv
    return picks


def restrict(space: SearchSpace, tree: OptTree, leaf_id: int) -> SearchSpace:
    """Sub-space selected by a root->leaf path (one subset per variable)."""
    if not tree.is_leaf(leaf_id):
        raise TreeError(f"node {leaf_id} is not a leaf")
    allowed: dict[str, list] = {}
    for nid in tree.path_to(leaf_id)[1:]:
        nd = tree.nodes[nid]
        keys = set(tree.subset_values(nd.variable, nd.subset))
        known = {value_key(v) for v in space.variable(nd.variable).values()}
        if keys - known:
            raise TreeError(
                f"leaf path subset for {nd.variable!r} references unknown values {sorted(keys - known)}"
            )
        vals = [v for v in space.allowed_values(nd.variable) if value_key(v) in keys]
        if not vals:
            raise TreeError(
                f"leaf path subset for {nd.variable!r} is empty under the space's restrictions"
            )
        allowed[nd.variable] = vals
    try:
        return restrict_space(space, allowed)
    except SpaceError as e:
        raise TreeError(str(e)) from e
