import random

import pytest

from cascadekit.graph import RepostGraph, branching, build_repost_graph, depth
from cascadekit.ingest import PostRecord


def post(i, ts, parent=None):
    return PostRecord(id=f"p{i}", created_utc=ts, crosspost_parent_id=parent)


class TestBuildRepostGraph:
    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            build_repost_graph([])

    def test_singleton(self):
        g = build_repost_graph([post(0, 100)])
        assert g.nodes == ["p0"]
        assert g.parents == [-1]
        assert g.root == "p0"
        assert g.edges() == []

    def test_no_crossposts_builds_chain(self):
        g = build_repost_graph([post(0, 0), post(1, 3600), post(2, 7200)])
        assert g.parents == [-1, 0, 1]
        assert depth(g) == 2

    def test_explicit_parent_builds_star(self):
        g = build_repost_graph([post(0, 0), post(1, 3600), post(2, 7200, parent="p0")])
        assert g.parents == [-1, 0, 0]
        assert branching(g)[1] == 2

    def test_input_order_irrelevant(self):
        posts = [post(2, 7200, parent="p0"), post(0, 0), post(1, 3600)]
        g = build_repost_graph(posts)
        assert g.nodes == ["p0", "p1", "p2"]
        assert g.parents == [-1, 0, 0]

    def test_tie_broken_by_id(self):
        g = build_repost_graph([post(2, 100), post(1, 100)])
        assert g.nodes == ["p1", "p2"]
        assert g.root == "p1"

    def test_later_parent_ignored_for_predecessor(self):
        # p1 claims p2 as parent, but p2 is later in the ordering: fall back
        g = build_repost_graph([post(0, 0), post(1, 10, parent="p2"), post(2, 20)])
        assert g.parents == [-1, 0, 1]

    def test_parent_outside_cascade_ignored(self):
        g = build_repost_graph([post(0, 0), post(1, 10, parent="elsewhere")])
        assert g.parents == [-1, 0]

    def test_self_parent_ignored(self):
        g = build_repost_graph([post(0, 0), post(1, 10, parent="p1")])
        assert g.parents == [-1, 0]

    def test_edges_listing(self):
        g = build_repost_graph([post(0, 0), post(1, 10), post(2, 20, parent="p0")])
        assert g.edges() == [("p0", "p1"), ("p0", "p2")]


class TestDepth:
    def test_singleton_zero(self):
        assert depth(RepostGraph(nodes=["a"], parents=[-1])) == 0

    def test_chain_of_four(self):
        g = build_repost_graph([post(i, i * 60) for i in range(4)])
        assert depth(g) == 3

    def test_star_depth_one(self):
        posts = [post(0, 0)] + [post(i, i * 60, parent="p0") for i in range(1, 6)]
        assert depth(build_repost_graph(posts)) == 1


class TestBranching:
    def test_singleton(self):
        assert branching(RepostGraph(nodes=["a"], parents=[-1])) == (0.0, 0)

    def test_chain_of_three(self):
        g = build_repost_graph([post(i, i * 60) for i in range(3)])
        mean, mx = branching(g)
        assert mean == pytest.approx(2 / 3)
        assert mx == 1

    def test_star_root_plus_four(self):
        posts = [post(0, 0)] + [post(i, i * 60, parent="p0") for i in range(1, 5)]
        mean, mx = branching(posts and build_repost_graph(posts))
        assert mean == pytest.approx(0.8)
        assert mx == 4


class TestTreeProperties:
    @staticmethod
    def random_cascade(rng, n):
        posts = [post(0, 0)]
        for i in range(1, n):
            parent = f"p{rng.randrange(i)}" if rng.random() < 0.6 else None
            posts.append(post(i, i * rng.randrange(1, 100) + 1, parent=parent))
        return posts

    def test_tree_invariants_on_random_cascades(self):
        rng = random.Random(23)
        for _ in range(50):
            n = rng.randrange(1, 80)
            g = build_repost_graph(self.random_cascade(rng, n))
            assert len(g.nodes) == n
            assert len(g.edges()) == n - 1 if n > 1 else g.edges() == []
            assert g.parents[0] == -1
            # every parent strictly earlier: acyclic and time-respecting
            assert all(0 <= g.parents[i] < i for i in range(1, n))

    def test_connected_ignoring_direction(self):
        rng = random.Random(29)
        for _ in range(20):
            n = rng.randrange(2, 50)
            g = build_repost_graph(self.random_cascade(rng, n))
            adj = {i: set() for i in range(n)}
            for i in range(1, n):
                adj[i].add(g.parents[i])
                adj[g.parents[i]].add(i)
            seen, stack = {0}, [0]
            while stack:
                for nb in adj[stack.pop()]:
                    if nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            assert len(seen) == n

    def test_mean_out_degree_is_fixed_by_size(self):
        # in any tree, out-degrees sum to n-1
        rng = random.Random(31)
        for _ in range(20):
            n = rng.randrange(2, 60)
            g = build_repost_graph(self.random_cascade(rng, n))
            mean, _ = branching(g)
            assert mean == pytest.approx((n - 1) / n)
