"""Deterministic synthetic post generator with planted ground truth.

Every dataset is drawn from a single seeded generator, so byte-identical
output is guaranteed for a fixed config. Cascade membership is expressed
only through evidence the clustering rules can see (shared image URLs,
explicit crosspost parents), which makes exact recovery testable; the
planted partition and trees ride along as the oracle.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ingest import PostRecord

SHAPES = ("chain", "star", "random_tree", "mixed")
SIZE_DISTS = ("geometric", "fixed")


@dataclass(slots=True)
class SynthConfig:
    seed: int = 0
    num_cascades: int = 100
    size_dist: str = "geometric"
    geometric_p: float = 0.35
    fixed_size: int = 3
    max_size: int = 200
    shape: str = "mixed"
    url_evidence_fraction: float = 1.0
    crosspost_evidence_fraction: float = 1.0
    misinfo_prob: float = 0.15
    genai_prob: float = 0.15
    flag_size_coupling: float = 0.0
    clickbait_prob: float = 0.0
    mean_gap_hours: float = 6.0
    subreddit_pool: int = 50
    base_score_mean: float = 40.0
    flag_score_boost: float = 1.0
    comments_rate: float = 0.3
    upvote_ratio_missing_fraction: float = 0.1
    start_utc: int = 1_600_000_000
    start_spread_hours: float = 720.0
    degrade: bool = False

    def validate(self) -> None:
        if self.num_cascades < 1:
            raise ValueError("num_cascades must be >= 1")
        if self.size_dist not in SIZE_DISTS:
            raise ValueError(f"size_dist must be one of {SIZE_DISTS}")
        if not 0 < self.geometric_p <= 1:
            raise ValueError("geometric_p must be in (0,1]")
        if self.fixed_size < 1 or self.max_size < 1:
            raise ValueError("sizes must be >= 1")
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}")
        for name in ("url_evidence_fraction", "crosspost_evidence_fraction",
                     "misinfo_prob", "genai_prob", "flag_size_coupling",
                     "clickbait_prob", "upvote_ratio_missing_fraction"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.mean_gap_hours <= 0:
            raise ValueError("mean_gap_hours must be positive")
        if self.subreddit_pool < 1:
            raise ValueError("subreddit_pool must be >= 1")
        if self.base_score_mean < 0 or self.comments_rate < 0 or self.flag_score_boost < 0:
            raise ValueError("engagement parameters must be non-negative")
        if self.start_utc <= 0:
            raise ValueError("start_utc must be positive")
        if self.start_spread_hours < 0:
            raise ValueError("start_spread_hours must be non-negative")


@dataclass(slots=True)
class PlantedTruth:
    """The generator's intended partition, trees, and per-cascade flags."""

    members: list[list[str]]
    trees: list[list[tuple[str, str]]]
    flags: list[tuple[bool, bool]]
    cascade_of: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cascade_of:
            self.cascade_of = {pid: ci for ci, ids in enumerate(self.members)
                               for pid in ids}


def _grouped_cumsum(values: np.ndarray, group_starts: np.ndarray,
                    sizes: np.ndarray) -> np.ndarray:
    total = np.cumsum(values)
    offsets = np.repeat(total[group_starts] - values[group_starts], sizes)
    return total - offsets


def generate(config: SynthConfig) -> tuple[list[PostRecord], PlantedTruth]:
    """Draw a dataset plus its planted truth; byte-stable for a fixed seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    m = config.num_cascades

    if config.size_dist == "geometric":
        sizes = np.minimum(rng.geometric(config.geometric_p, size=m), config.max_size)
    else:
        sizes = np.full(m, config.fixed_size, dtype=np.int64)
    sizes = sizes.astype(np.int64)
    n = int(sizes.sum())
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    cascade_idx = np.repeat(np.arange(m), sizes)
    local_idx = np.arange(n) - np.repeat(starts, sizes)

    if config.shape == "mixed":
        shape_of = rng.choice(np.array(["chain", "star", "random_tree"]), size=m)
    else:
        shape_of = np.full(m, config.shape, dtype=object)
    shape_per_post = np.asarray(shape_of)[cascade_idx]

    # local parent index for every non-root post
    parent_local = np.zeros(n, dtype=np.int64)
    chain_mask = (shape_per_post == "chain") & (local_idx > 0)
    parent_local[chain_mask] = local_idx[chain_mask] - 1
    rand_mask = (shape_per_post == "random_tree") & (local_idx > 0)
    parent_local[rand_mask] = (rng.random(int(rand_mask.sum()))
                               * local_idx[rand_mask]).astype(np.int64)
    # star posts keep parent_local 0 (the root)

    # timestamps: cascade roots spread uniformly, exponential in-cascade gaps
    root_times = (config.start_utc
                  + rng.uniform(0, config.start_spread_hours * 3600.0, size=m))
    gaps = rng.exponential(config.mean_gap_hours * 3600.0, size=n)
    gaps[local_idx == 0] = 0.0
    offsets = _grouped_cumsum(gaps, starts, sizes)
    times = (np.repeat(root_times, sizes) + offsets).astype(np.int64)

    # per-cascade flags, optionally coupled to the cascade's size rank
    if config.flag_size_coupling > 0:
        pct = (np.argsort(np.argsort(sizes, kind="stable"), kind="stable") + 0.5) / m
    else:
        pct = np.zeros(m)
    c = config.flag_size_coupling
    p_mis = np.clip((1 - c) * config.misinfo_prob + c * pct, 0, 1)
    p_gen = np.clip((1 - c) * config.genai_prob + c * pct, 0, 1)
    misinfo = rng.random(m) < p_mis
    genai = rng.random(m) < p_gen

    # evidence: a cascade either shares one image URL across members or
    # carries explicit crosspost parents; both when the draws overlap
    has_url = rng.random(m) < config.url_evidence_fraction
    crosspost_post = rng.random(n) < config.crosspost_evidence_fraction
    # cascades that lost the URL draw must stay connectable
    needs_crosspost = ~has_url[cascade_idx]
    crosspost_post = crosspost_post | needs_crosspost
    crosspost_post &= local_idx > 0

    # engagement, boosted for flagged cascades
    flagged = misinfo | genai
    lam = config.base_score_mean * np.where(flagged, max(config.flag_score_boost, 1e-9), 1.0)
    scores = rng.poisson(np.repeat(lam, sizes))
    comments = rng.poisson(config.comments_rate * (scores + 1.0))
    ratios = np.round(rng.uniform(0.5, 1.0, size=n), 3)
    ratio_missing = rng.random(n) < config.upvote_ratio_missing_fraction
    sub_idx = rng.integers(0, config.subreddit_pool, size=n)
    author_idx = rng.integers(0, max(10, 3 * m), size=n)
    clickbait = rng.random(m) < config.clickbait_prob

    if config.degrade:
        mutate_url = rng.random(n) < 0.05
        mutate_kind = rng.integers(0, 3, size=n)  # 0 query, 1 case, 2 path
        dangle = crosspost_post & (rng.random(n) < 0.05)
    else:
        mutate_url = np.zeros(n, dtype=bool)
        mutate_kind = np.zeros(n, dtype=np.int64)
        dangle = np.zeros(n, dtype=bool)

    ids = [f"p{i:08d}" for i in range(n)]
    urls = [f"https://img.example/c{ci:06d}.jpg" for ci in range(m)]
    subs = [f"sub{k:04d}" for k in range(config.subreddit_pool)]
    titles = [f"Cascade {ci} headline" + (" breaking news" if clickbait[ci] else "")
              for ci in range(m)]

    records: list[PostRecord] = []
    append = records.append
    starts_list = starts.tolist()
    for i in range(n):
        ci = int(cascade_idx[i])
        url = None
        if has_url[ci]:
            url = urls[ci]
            if mutate_url[i]:
                kind = mutate_kind[i]
                if kind == 0:
                    url = url + "?utm_source=share"  # canonicalization strips this
                elif kind == 1:
                    url = url.replace("https://", "HTTPS://")  # and lowers this
                else:
                    url = url[:-4] + "/alt.jpg"  # a genuinely different URL
        parent = None
        if crosspost_post[i]:
            if dangle[i]:
                parent = f"missing{i:08d}"
            else:
                parent = ids[starts_list[ci] + int(parent_local[i])]
        append(PostRecord(
            id=ids[i],
            created_utc=int(times[i]),
            subreddit=subs[int(sub_idx[i])],
            author=f"user{int(author_idx[i]):06d}",
            title=titles[ci],
            image_url=url,
            crosspost_parent_id=parent,
            score=int(scores[i]),
            total_comments=int(comments[i]),
            upvote_ratio=None if ratio_missing[i] else float(ratios[i]),
            is_original_content=bool(local_idx[i] == 0),
            misinfo_flag=bool(misinfo[ci]),
            genai_flag=bool(genai[ci]),
        ))

    members = [ids[starts_list[ci]:starts_list[ci] + int(sizes[ci])] for ci in range(m)]
    trees = []
    for ci in range(m):
        s = starts_list[ci]
        trees.append([(ids[s + int(parent_local[s + k])], ids[s + k])
                      for k in range(1, int(sizes[ci]))])
    truth = PlantedTruth(members=members, trees=trees,
                         flags=[(bool(misinfo[ci]), bool(genai[ci])) for ci in range(m)])
    return records, truth


def oracle_wiener(edges: Sequence[tuple[str, str]],
                  nodes: Iterable[str] | None = None) -> float:
    """Mean pairwise distance by all-pairs BFS; deliberately naive.

    Used as the independent check against the production structural
    virality. nodes may be passed explicitly for singleton trees; raises
    on disconnected input.
    """
    adj: dict[str, list[str]] = {}
    if nodes is not None:
        for v in nodes:
            adj.setdefault(v, [])
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if not adj:
        raise ValueError("empty tree")
    names = list(adj)
    n = len(names)
    if n == 1:
        return 0.0
    total = 0
    for s in names:
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    q.append(v)
        if len(dist) != n:
            raise ValueError("tree is disconnected")
        total += sum(dist.values())
    return total / (n * (n - 1))
