"""Time-respecting repost tree for a single cascade.

Posts are ordered by (created_utc, id). The earliest post is the root;
every later post attaches to its explicit crosspost parent when that
parent is in the cascade and not later in the ordering, otherwise to its
immediate predecessor. The result is always a tree whose parent indices
point strictly backwards, which keeps every traversal a single O(n) pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .ingest import PostRecord


@dataclass(slots=True)
class RepostGraph:
    """nodes[i] is the i-th post id in time order; parents[i] < i, root at -1."""

    nodes: list[str]
    parents: list[int]

    @property
    def root(self) -> str:
        return self.nodes[0]

    @property
    def size(self) -> int:
        return len(self.nodes)

    def edges(self) -> list[tuple[str, str]]:
        """Parent -> child id pairs, one per non-root node."""
        return [(self.nodes[p], self.nodes[i])
                for i, p in enumerate(self.parents) if p >= 0]


def build_repost_graph(cascade_posts: Sequence[PostRecord]) -> RepostGraph:
    """Construct the repost tree for one cascade's posts.

    Raises ValueError on empty input. Input order does not matter; posts
    are sorted by (created_utc, id) with ties broken by ascending id.
    """
    if not cascade_posts:
        raise ValueError("cascade must contain at least one post")
    posts = sorted(cascade_posts, key=lambda r: (r.created_utc, r.id))
    index_of = {p.id: i for i, p in enumerate(posts)}
    parents = [-1]
    for i in range(1, len(posts)):
        p = posts[i]
        parent = i - 1
        if p.crosspost_parent_id is not None and p.crosspost_parent_id != p.id:
            j = index_of.get(p.crosspost_parent_id)
            if j is not None and j < i:
                parent = j
        parents.append(parent)
    return RepostGraph(nodes=[p.id for p in posts], parents=parents)


def depth(graph: RepostGraph) -> int:
    """Edges on the longest root-to-leaf path; 0 for a singleton."""
    parents = graph.parents
    depths = [0] * len(parents)
    best = 0
    for i in range(1, len(parents)):
        d = depths[parents[i]] + 1
        depths[i] = d
        if d > best:
            best = d
    return best


def branching(graph: RepostGraph) -> tuple[float, int]:
    """(mean out-degree, max out-degree) over all nodes; (0.0, 0) for a singleton."""
    n = len(graph.parents)
    if n == 1:
        return 0.0, 0
    out_deg = [0] * n
    for i in range(1, n):
        out_deg[graph.parents[i]] += 1
    return sum(out_deg) / n, max(out_deg)
