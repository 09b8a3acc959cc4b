"""Post-level and cascade-level virality metrics, labels, and group summaries.

Timestamps arrive as integer epoch seconds and every derived quantity is
expressed in fractional hours. Structural virality is the Wiener-index
mean: the average shortest-path distance over all unordered node pairs of
the undirected repost tree.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .graph import RepostGraph, branching, build_repost_graph, depth
from .ingest import PostRecord

SECONDS_PER_HOUR = 3600.0
DEFAULT_WINDOW_HR = 24.0


@dataclass(slots=True)
class VaiParams:
    """Attention-index shape parameters; defaults keep the formula singular-free."""

    alpha: float = 1.0
    beta: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(slots=True)
class CascadeMetrics:
    cascade_id: int
    size: int
    depth: int
    mean_branch: float
    max_branch: int
    structural_virality: float
    time_to_first_repost_hr: float | None
    peak_repost_speed_hr: float | None
    lifespan_hr: float
    avg_repost_delay_hr: float | None
    num_subreddits: int
    total_upvotes: int
    text_entropy_bits: float
    image_entropy_bits: float
    misinfo_cascade_flag: bool
    genai_cascade_flag: bool


def total_pairwise_distance(graph: RepostGraph) -> int:
    """Sum of shortest-path distances over all unordered pairs, exactly.

    In a tree, each edge (i, parent) separates the node set into the
    subtree under i and the rest, and is crossed by exactly
    subtree_size * (n - subtree_size) shortest paths. Parent indices point
    backwards, so subtree sizes accumulate in one reverse pass.
    """
    parents = graph.parents
    n = len(parents)
    sizes = [1] * n
    for i in range(n - 1, 0, -1):
        sizes[parents[i]] += sizes[i]
    return sum(sizes[i] * (n - sizes[i]) for i in range(1, n))


def structural_virality(graph: RepostGraph) -> float:
    """Mean pairwise distance in the undirected tree; 0 for a singleton."""
    n = len(graph.parents)
    if n < 2:
        return 0.0
    return total_pairwise_distance(graph) / (n * (n - 1) // 2)


def vai(score: int, total_comments: int, age_hours: float,
        params: VaiParams | None = None) -> float:
    """(score + alpha * comments) / (age_hours + tau) ** beta.

    Balances raw engagement against post age; tau keeps a zero-age post
    finite. Negative inputs are rejected.
    """
    if params is None:
        params = VaiParams()
    if score < 0 or total_comments < 0:
        raise ValueError("score and total_comments must be non-negative")
    if age_hours < 0:
        raise ValueError(f"age_hours must be non-negative, got {age_hours}")
    return (score + params.alpha * total_comments) / (age_hours + params.tau) ** params.beta


def engagement_ratio(total_comments: int, score: int) -> float:
    """total_comments / max(score, 1)."""
    if score < 0 or total_comments < 0:
        raise ValueError("inputs must be non-negative")
    return total_comments / max(score, 1)


@dataclass(slots=True)
class TemporalMetrics:
    time_to_first_repost_hr: float | None
    peak_repost_speed_hr: float | None
    lifespan_hr: float
    avg_repost_delay_hr: float | None


def temporal_metrics(cascade_posts: Sequence[PostRecord],
                     window_hr: float = DEFAULT_WINDOW_HR) -> TemporalMetrics:
    """Repost-timing summary of one cascade.

    peak_repost_speed is the offset (hours from the root) of the center of
    the densest window_hr-wide window over repost times: slide a window
    anchored at each repost, count reposts inside, and report the midpoint
    between the first and last repost covered by the best window. Ties go
    to the earliest window. All repost-derived values are absent for
    singletons; lifespan is always defined.
    """
    if not cascade_posts:
        raise ValueError("cascade must contain at least one post")
    if window_hr <= 0:
        raise ValueError(f"window_hr must be positive, got {window_hr}")
    times = sorted(p.created_utc for p in cascade_posts)
    lifespan = (times[-1] - times[0]) / SECONDS_PER_HOUR
    if len(times) < 2:
        return TemporalMetrics(None, None, lifespan, None)
    root = times[0]
    reposts = [(t - root) / SECONDS_PER_HOUR for t in times[1:]]
    first = reposts[0]
    avg_delay = lifespan / len(reposts)  # mean of consecutive gaps telescopes

    best_count = 0
    best_center = reposts[0]
    j = 0
    for i, anchor in enumerate(reposts):
        if j < i:
            j = i
        while j + 1 < len(reposts) and reposts[j + 1] - anchor <= window_hr:
            j += 1
        count = j - i + 1
        if count > best_count:
            best_count = count
            best_center = (anchor + reposts[j]) / 2.0
    return TemporalMetrics(first, best_center, lifespan, avg_delay)


def _entropy_bits(counts: Counter) -> float:
    total = sum(counts.values())
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


_ABSENT_URL = object()


def content_entropy(cascade_posts: Sequence[PostRecord]) -> tuple[float, float]:
    """Shannon entropy (bits) of title and image-URL distributions.

    Titles are case-folded; posts without an image URL are pooled into a
    single "absent" category.
    """
    if not cascade_posts:
        raise ValueError("cascade must contain at least one post")
    titles = Counter(p.title.casefold() for p in cascade_posts)
    urls = Counter(p.image_url if p.image_url else _ABSENT_URL for p in cascade_posts)
    return _entropy_bits(titles), _entropy_bits(urls)


def cascade_summary(cascade_id: int, cascade_posts: Sequence[PostRecord],
                    graph: RepostGraph | None = None,
                    window_hr: float = DEFAULT_WINDOW_HR) -> CascadeMetrics:
    """All CascadeMetrics fields for one cascade.

    The graph may be passed in when already built; otherwise it is
    reconstructed here. Raises ValueError when the graph does not match
    the posts.
    """
    if not cascade_posts:
        raise ValueError("cascade must contain at least one post")
    if graph is None:
        graph = build_repost_graph(cascade_posts)
    elif set(graph.nodes) != {p.id for p in cascade_posts}:
        raise ValueError("graph nodes do not match cascade posts")
    mean_branch, max_branch = branching(graph)
    t = temporal_metrics(cascade_posts, window_hr)
    text_h, image_h = content_entropy(cascade_posts)
    return CascadeMetrics(
        cascade_id=cascade_id,
        size=len(cascade_posts),
        depth=depth(graph),
        mean_branch=mean_branch,
        max_branch=max_branch,
        structural_virality=structural_virality(graph),
        time_to_first_repost_hr=t.time_to_first_repost_hr,
        peak_repost_speed_hr=t.peak_repost_speed_hr,
        lifespan_hr=t.lifespan_hr,
        avg_repost_delay_hr=t.avg_repost_delay_hr,
        num_subreddits=len({p.subreddit for p in cascade_posts}),
        total_upvotes=sum(p.score for p in cascade_posts),
        text_entropy_bits=text_h,
        image_entropy_bits=image_h,
        misinfo_cascade_flag=any(p.misinfo_flag for p in cascade_posts),
        genai_cascade_flag=any(p.genai_flag for p in cascade_posts),
    )


def label_top_quantile(values: Sequence[float], fraction: float) -> list[bool]:
    """True for values in the top `fraction` of the empirical distribution.

    The threshold is the k-th largest value with k = ceil(fraction * n);
    every value >= threshold is positive, so ties at the threshold are all
    included and at least one item is always labeled.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    n = len(values)
    if n == 0:
        raise ValueError("values must be non-empty")
    # small fuzz guard: 0.04 * 50 evaluates to 2.0000000000000004
    k = max(1, math.ceil(fraction * n - 1e-12))
    threshold = sorted(values, reverse=True)[k - 1]
    return [v >= threshold for v in values]


GROUP_ORDER = ((False, False), (False, True), (True, False), (True, True))


@dataclass(slots=True)
class GroupRow:
    """Mean/std summary of one (misinfo, genai) flag combination."""

    misinfo: bool
    genai: bool
    count: int
    stats: dict[str, tuple[float, float] | None]


def group_stats(rows: Sequence[dict], columns: Sequence[str],
                misinfo_key: str = "misinfo_flag",
                genai_key: str = "genai_flag") -> list[GroupRow]:
    """4-row summary (FF, FT, TF, TT) of means and population stds.

    Each input row is a mapping carrying both boolean flags and numeric
    columns; None-valued cells are skipped per column. A cell with no
    contributing values (including the whole-group-empty case) is None.
    """
    grouped: dict[tuple[bool, bool], list[dict]] = {key: [] for key in GROUP_ORDER}
    for row in rows:
        grouped[(bool(row[misinfo_key]), bool(row[genai_key]))].append(row)
    out = []
    for key in GROUP_ORDER:
        members = grouped[key]
        stats: dict[str, tuple[float, float] | None] = {}
        for col in columns:
            values = [row[col] for row in members if row.get(col) is not None]
            if not values:
                stats[col] = None
                continue
            mean = sum(values) / len(values)
            var = sum((v - mean) ** 2 for v in values) / len(values)
            stats[col] = (mean, math.sqrt(var))
        out.append(GroupRow(misinfo=key[0], genai=key[1], count=len(members), stats=stats))
    return out
