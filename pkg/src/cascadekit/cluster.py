"""Partition posts into diffusion cascades with a disjoint-set union.

Three merge rules connect posts into one cascade:

1. url: identical canonical image URL.
2. crosspost: explicit crosspost parent link, applied only when the
   parent id is present in the dataset (dangling parents are counted,
   never invented as phantom nodes).
3. same_author: same non-deleted author posting the same content, where
   the content key is the canonical URL when present, else a perceptual
   hash of the thumbnail matched within a Hamming-distance threshold,
   else exact case-folded title equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .imaging import ImageFeatureError, dhash64, hamming64
from .ingest import DELETED_AUTHOR, PostRecord

RULE_URL = "url"
RULE_CROSSPOST = "crosspost"
RULE_SAME_AUTHOR = "same_author"


@dataclass(slots=True)
class SimilarityConfig:
    """Knobs for the rule-3 content key."""

    hash_threshold: int = 4
    enable_title_fallback: bool = True

    def __post_init__(self):
        if not 0 <= self.hash_threshold <= 64:
            raise ValueError(f"hash_threshold must be in [0,64], got {self.hash_threshold}")


class DsuState:
    """Union-find over dense indices with an id lookup table."""

    __slots__ = ("parent", "rank", "index_of")

    def __init__(self, ids: Iterable[str]):
        self.index_of = {pid: i for i, pid in enumerate(ids)}
        n = len(self.index_of)
        self.parent = list(range(n))
        self.rank = [0] * n


def dsu_find(state: DsuState, i: int) -> int:
    """Representative of i's set, with path halving."""
    parent = state.parent
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def dsu_union(state: DsuState, i: int, j: int) -> bool:
    """Merge the sets of i and j (union by rank). Returns False if already joined."""
    ri, rj = dsu_find(state, i), dsu_find(state, j)
    if ri == rj:
        return False
    rank = state.rank
    if rank[ri] < rank[rj]:
        ri, rj = rj, ri
    state.parent[rj] = ri
    if rank[ri] == rank[rj]:
        rank[ri] += 1
    return True


@dataclass(slots=True)
class CascadeSet:
    """A partition of post ids into cascades plus the merge provenance.

    cascades are ordered by their earliest member's (created_utc, id); each
    cascade lists its member ids in the same (created_utc, id) order.
    merge_log holds one (post_a, post_b, rule) triple per successful union.
    dangling_parents counts crosspost references to ids absent from the
    dataset.
    """

    cascades: list[list[str]] = field(default_factory=list)
    merge_log: list[tuple[str, str, str]] = field(default_factory=list)
    dangling_parents: int = 0

    def assignments(self) -> dict[str, int]:
        """Map post id -> cascade index."""
        return {pid: ci for ci, members in enumerate(self.cascades) for pid in members}


def _hash_bands(value: int, num_bands: int) -> list[tuple[int, int]]:
    # split 64 bits into num_bands contiguous slices; equal hashes within
    # Hamming distance (num_bands - 1) must collide on at least one band
    cuts = [round(64 * k / num_bands) for k in range(num_bands + 1)]
    bands = []
    for k in range(num_bands):
        width = cuts[k + 1] - cuts[k]
        shift = 64 - cuts[k + 1]
        bands.append((k, (value >> shift) & ((1 << width) - 1)))
    return bands


def _union_pairs_by_hash(state: DsuState, members: list[tuple[int, int]],
                         threshold: int, log: list, ids: Sequence[str]) -> None:
    """Union posts whose hashes lie within the Hamming threshold.

    members is a list of (post_index, hash). Candidate pairs come from a
    band-bucketing pass (pigeonhole over threshold+1 bands), then each
    candidate is verified exactly.
    """
    if len(members) < 2:
        return
    num_bands = threshold + 1
    buckets: dict[tuple[int, int], list[int]] = {}
    for pos, (idx, h) in enumerate(members):
        for band in _hash_bands(h, num_bands):
            buckets.setdefault(band, []).append(pos)
    seen_pairs: set[tuple[int, int]] = set()
    for bucket in buckets.values():
        if len(bucket) < 2:
            continue
        for a in range(len(bucket) - 1):
            pa = bucket[a]
            for b in range(a + 1, len(bucket)):
                pb = bucket[b]
                pair = (pa, pb) if pa < pb else (pb, pa)
                if pair in seen_pairs:
                    continue
                seen_pairs.add(pair)
                ia, ha = members[pair[0]]
                ib, hb = members[pair[1]]
                if hamming64(ha, hb) <= threshold and dsu_union(state, ia, ib):
                    log.append((ids[ia], ids[ib], RULE_SAME_AUTHOR))


def build_cascades(records: Sequence[PostRecord],
                   config: SimilarityConfig | None = None) -> CascadeSet:
    """Cluster validated, deduplicated posts into cascades.

    The result does not depend on the order of ``records``: posts are
    re-sorted by (created_utc, id) internally, which also makes the merge
    log deterministic.
    """
    if config is None:
        config = SimilarityConfig()
    posts = sorted(records, key=lambda r: (r.created_utc, r.id))
    ids = [p.id for p in posts]
    state = DsuState(ids)
    index_of = state.index_of
    log: list[tuple[str, str, str]] = []
    out = CascadeSet(merge_log=log)

    # rule 1: identical canonical image URL
    first_with_url: dict[str, int] = {}
    for i, p in enumerate(posts):
        url = p.image_url
        if not url:
            continue
        j = first_with_url.setdefault(url, i)
        if j != i and dsu_union(state, j, i):
            log.append((ids[j], ids[i], RULE_URL))

    # rule 2: explicit crosspost parent present in the dataset
    for i, p in enumerate(posts):
        parent_id = p.crosspost_parent_id
        if parent_id is None or parent_id == p.id:
            continue
        j = index_of.get(parent_id)
        if j is None:
            out.dangling_parents += 1
        elif dsu_union(state, j, i):
            log.append((ids[j], ids[i], RULE_CROSSPOST))

    # rule 3: same non-deleted author with the same content key. URL-keyed
    # posts are already fully merged by rule 1, so only the hash and title
    # key spaces can contribute new unions.
    by_author: dict[str, list[int]] = {}
    for i, p in enumerate(posts):
        if p.author and p.author != DELETED_AUTHOR and not p.image_url:
            by_author.setdefault(p.author, []).append(i)
    hash_cache: dict[str, int | None] = {}
    for group in by_author.values():
        if len(group) < 2:
            continue
        hashed: list[tuple[int, int]] = []
        by_title: dict[str, int] = {}
        for i in group:
            p = posts[i]
            h = None
            if p.thumbnail_path is not None:
                if p.thumbnail_path not in hash_cache:
                    try:
                        hash_cache[p.thumbnail_path] = dhash64(p.thumbnail_path)
                    except ImageFeatureError:
                        hash_cache[p.thumbnail_path] = None  # undecodable: fall through
                h = hash_cache[p.thumbnail_path]
            if h is not None:
                hashed.append((i, h))
            elif config.enable_title_fallback and p.title:
                key = p.title.casefold()
                j = by_title.setdefault(key, i)
                if j != i and dsu_union(state, j, i):
                    log.append((ids[j], ids[i], RULE_SAME_AUTHOR))
        _union_pairs_by_hash(state, hashed, config.hash_threshold, log, ids)

    # collect cascades in first-member order; members stay time-sorted
    cascade_index: dict[int, int] = {}
    cascades: list[list[str]] = []
    for i, pid in enumerate(ids):
        root = dsu_find(state, i)
        ci = cascade_index.get(root)
        if ci is None:
            cascade_index[root] = len(cascades)
            cascades.append([pid])
        else:
            cascades[ci].append(pid)
    out.cascades = cascades
    return out
