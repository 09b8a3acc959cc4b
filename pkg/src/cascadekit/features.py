"""Feature registries and post/cascade feature assembly.

Feature vectors are name->value maps drawn from fixed registries so every
matrix is column-complete and deterministically ordered. Missing sources
(no sentiment, no thumbnail, no upvote ratio) are encoded as zeros paired
with an explicit *_missing indicator column, never as silent zeros.
"""

from __future__ import annotations

import csv
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .imaging import ImageFeatureError, ela_score, laplacian_variance, load_luma, noise_score
from .ingest import PostRecord
from .metrics import CascadeMetrics

DEFAULT_CLICKBAIT_KEYWORDS = ("breaking", "viral", "shocking")

POST_CONTENT_FEATURES = (
    "title_length",
    "clickbait_flag",
    "sentiment_compound",
    "sentiment_pos",
    "sentiment_neg",
    "sentiment_missing",
    "laplacian_variance",
    "noise_score",
    "ela_score",
    "image_missing",
    "thumb_width",
    "thumb_height",
    "thumb_dims_missing",
    "misinfo_flag",
    "genai_flag",
)

POST_METADATA_FEATURES = (
    "upvote_ratio",
    "upvote_ratio_missing",
    "num_crossposts",
    "is_crossposted",
    "is_original_content",
    "hour_of_day",
    "engagement_ratio",
    "vai",
)

POST_REGISTRY = POST_CONTENT_FEATURES + POST_METADATA_FEATURES

CASCADE_CONTENT_FEATURES = tuple(f"mean_{name}" for name in POST_CONTENT_FEATURES) + (
    "misinfo_count",
    "genai_count",
    "text_entropy_bits",
    "image_entropy_bits",
)

CASCADE_CONTEXT_FEATURES = (
    "time_to_first_repost_hr",
    "peak_repost_speed_hr",
    "avg_repost_delay_hr",
    "repost_timing_missing",
    "lifespan_hr",
    "mean_branch",
    "max_branch",
    "num_subreddits",
)

CASCADE_COMBINED_FEATURES = CASCADE_CONTENT_FEATURES + CASCADE_CONTEXT_FEATURES

CASCADE_REGISTRIES = {
    "content": CASCADE_CONTENT_FEATURES,
    "context": CASCADE_CONTEXT_FEATURES,
    "combined": CASCADE_COMBINED_FEATURES,
}


@dataclass(slots=True)
class FeatureVector:
    """Ordered name->value map with an optional boolean label."""

    values: dict[str, float]
    label: bool | None = None


def compile_keywords(keywords: Sequence[str]) -> re.Pattern:
    """Case-insensitive word-boundary pattern over the keyword list."""
    if not keywords:
        raise ValueError("keyword list must be non-empty")
    joined = "|".join(re.escape(k) for k in keywords)
    return re.compile(rf"\b(?:{joined})\b", re.IGNORECASE)


def text_features(title: str, keywords: Sequence[str] | re.Pattern =
                  DEFAULT_CLICKBAIT_KEYWORDS) -> tuple[int, int]:
    """(character count, 1 if any keyword matches on a word boundary)."""
    pattern = keywords if isinstance(keywords, re.Pattern) else compile_keywords(keywords)
    return len(title), int(pattern.search(title) is not None)


def image_features(thumbnail_path, ela_quality: int = 90) -> tuple[float, float, float] | None:
    """(laplacian_variance, noise_score, ela_score) or None when undecodable."""
    try:
        luma = load_luma(thumbnail_path)
        return (laplacian_variance(luma), noise_score(luma),
                ela_score(thumbnail_path, quality=ela_quality))
    except ImageFeatureError:
        return None


def extract_image_features(records: Iterable[PostRecord], ela_quality: int = 90,
                           max_workers: int = 1) -> dict[str, tuple[float, float, float]]:
    """Image features for every record with a thumbnail, keyed by post id.

    Undecodable or missing thumbnails are simply absent from the result.
    Decoding is farmed out to a bounded thread pool when max_workers > 1.
    """
    with_thumbs = [r for r in records if r.thumbnail_path is not None]
    out: dict[str, tuple[float, float, float]] = {}
    if not with_thumbs:
        return out
    if max_workers <= 1:
        computed = (image_features(r.thumbnail_path, ela_quality) for r in with_thumbs)
    else:
        pool = ThreadPoolExecutor(max_workers=max_workers)
        try:
            computed = list(pool.map(
                lambda r: image_features(r.thumbnail_path, ela_quality), with_thumbs))
        finally:
            pool.shutdown()
    for record, feats in zip(with_thumbs, computed):
        if feats is not None:
            out[record.id] = feats
    return out


def assemble_post_features(record: PostRecord,
                           image_feats: tuple[float, float, float] | None,
                           vai_value: float,
                           engagement_value: float,
                           keywords: Sequence[str] | re.Pattern =
                           DEFAULT_CLICKBAIT_KEYWORDS,
                           label: bool | None = None) -> FeatureVector:
    """One post's full feature vector in POST_REGISTRY order."""
    title_length, clickbait = text_features(record.title, keywords)
    sentiment_missing = record.sentiment_compound is None
    image_missing = image_feats is None
    lv, ns, ela = image_feats if image_feats is not None else (0.0, 0.0, 0.0)
    dims_missing = record.thumbnail_width is None or record.thumbnail_height is None
    ratio_missing = record.upvote_ratio is None
    values = {
        "title_length": float(title_length),
        "clickbait_flag": float(clickbait),
        "sentiment_compound": record.sentiment_compound or 0.0,
        "sentiment_pos": record.sentiment_pos or 0.0,
        "sentiment_neg": record.sentiment_neg or 0.0,
        "sentiment_missing": float(sentiment_missing),
        "laplacian_variance": lv,
        "noise_score": ns,
        "ela_score": ela,
        "image_missing": float(image_missing),
        "thumb_width": float(record.thumbnail_width or 0),
        "thumb_height": float(record.thumbnail_height or 0),
        "thumb_dims_missing": float(dims_missing),
        "misinfo_flag": float(record.misinfo_flag),
        "genai_flag": float(record.genai_flag),
        "upvote_ratio": record.upvote_ratio if record.upvote_ratio is not None else 0.0,
        "upvote_ratio_missing": float(ratio_missing),
        "num_crossposts": float(record.num_crossposts),
        "is_crossposted": float(record.crosspost_parent_id is not None
                                or record.num_crossposts > 0),
        "is_original_content": float(record.is_original_content),
        "hour_of_day": float((record.created_utc // 3600) % 24),
        "engagement_ratio": engagement_value,
        "vai": vai_value,
    }
    return FeatureVector(values=values, label=label)


def assemble_cascade_features(post_vectors: Sequence[FeatureVector],
                              metrics: CascadeMetrics,
                              mode: str,
                              label: bool | None = None) -> FeatureVector:
    """One cascade's feature vector for the given mode.

    content: per-feature means of the member posts' content features plus
    flag counts and the two entropy columns. context: diffusion timing and
    branching only, deliberately excluding size, depth, and structural
    virality. combined: content followed by context.
    """
    if mode not in CASCADE_REGISTRIES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(CASCADE_REGISTRIES)}")
    if not post_vectors:
        raise ValueError("cascade must contain at least one post vector")
    n = len(post_vectors)
    values: dict[str, float] = {}
    if mode in ("content", "combined"):
        for name in POST_CONTENT_FEATURES:
            values[f"mean_{name}"] = sum(v.values[name] for v in post_vectors) / n
        values["misinfo_count"] = sum(v.values["misinfo_flag"] for v in post_vectors)
        values["genai_count"] = sum(v.values["genai_flag"] for v in post_vectors)
        values["text_entropy_bits"] = metrics.text_entropy_bits
        values["image_entropy_bits"] = metrics.image_entropy_bits
    if mode in ("context", "combined"):
        timing_missing = metrics.time_to_first_repost_hr is None
        values["time_to_first_repost_hr"] = metrics.time_to_first_repost_hr or 0.0
        values["peak_repost_speed_hr"] = metrics.peak_repost_speed_hr or 0.0
        values["avg_repost_delay_hr"] = metrics.avg_repost_delay_hr or 0.0
        values["repost_timing_missing"] = float(timing_missing)
        values["lifespan_hr"] = metrics.lifespan_hr
        values["mean_branch"] = metrics.mean_branch
        values["max_branch"] = float(metrics.max_branch)
        values["num_subreddits"] = float(metrics.num_subreddits)
    assert tuple(values) == CASCADE_REGISTRIES[mode]
    return FeatureVector(values=values, label=label)


@dataclass
class FeatureMatrix:
    """Aligned feature rows with ids and optional labels.

    Column order is the registry order of the vectors that built it; the
    CSV form is `id,<features...>,label` with the label column last.
    """

    names: tuple[str, ...]
    ids: list[str]
    rows: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.names):
            raise ValueError("rows shape does not match feature names")
        if len(self.ids) != self.rows.shape[0]:
            raise ValueError("ids do not match row count")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=bool)
            if self.labels.shape[0] != self.rows.shape[0]:
                raise ValueError("labels do not match row count")

    @classmethod
    def from_vectors(cls, ids: Sequence[str],
                     vectors: Sequence[FeatureVector]) -> "FeatureMatrix":
        if not vectors:
            raise ValueError("no vectors")
        names = tuple(vectors[0].values)
        for v in vectors[1:]:
            if tuple(v.values) != names:
                raise ValueError("inconsistent feature names across vectors")
        rows = np.array([[v.values[n] for n in names] for v in vectors], dtype=np.float64)
        labels_present = [v.label is not None for v in vectors]
        if any(labels_present) and not all(labels_present):
            raise ValueError("either all vectors carry labels or none do")
        labels = np.array([bool(v.label) for v in vectors]) if all(labels_present) else None
        return cls(names=names, ids=list(ids), rows=rows, labels=labels)

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        """Project onto a subset of columns, keeping ids and labels."""
        idx = [self.names.index(n) for n in names]
        return FeatureMatrix(names=tuple(names), ids=list(self.ids),
                             rows=self.rows[:, idx], labels=self.labels)

    def write_csv(self, dest) -> None:
        own = isinstance(dest, (str, Path))
        stream = open(dest, "w", newline="", encoding="utf-8") if own else dest
        try:
            writer = csv.writer(stream)
            header = ["id", *self.names]
            if self.labels is not None:
                header.append("label")
            writer.writerow(header)
            for i, pid in enumerate(self.ids):
                row = [pid] + [repr(x) for x in self.rows[i].tolist()]
                if self.labels is not None:
                    row.append(str(int(self.labels[i])))
                writer.writerow(row)
        finally:
            if own:
                stream.close()

    @classmethod
    def read_csv(cls, source) -> "FeatureMatrix":
        own = isinstance(source, (str, Path))
        stream = open(source, "r", newline="", encoding="utf-8") if own else source
        try:
            reader = csv.reader(stream)
            header = next(reader)
            has_label = header[-1] == "label"
            names = tuple(header[1:-1] if has_label else header[1:])
            ids, rows, labels = [], [], []
            for row in reader:
                ids.append(row[0])
                end = -1 if has_label else len(row)
                rows.append([float(x) for x in row[1:end]])
                if has_label:
                    labels.append(bool(int(row[-1])))
            return cls(names=names, ids=ids,
                       rows=np.array(rows, dtype=np.float64).reshape(len(ids), len(names)),
                       labels=np.array(labels, dtype=bool) if has_label else None)
        finally:
            if own:
                stream.close()
