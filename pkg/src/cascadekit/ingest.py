"""Parse, validate, deduplicate, and filter raw social post dumps.

Input is either a line-delimited file (one JSON object per line) or a
delimited table with a header row. Both carry the same field names as
:class:`PostRecord`. Parsing is lenient by default: malformed lines are
reported with their line number and skipped. Validation drops records
that violate basic field constraints and collapses duplicate ids.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO, Iterable, Iterator
from urllib.parse import urlsplit, urlunsplit

DELETED_AUTHOR = "[deleted]"

_FORMAT_BY_SUFFIX = {
    ".jsonl": "jsonl",
    ".ndjson": "jsonl",
    ".json": "jsonl",
    ".csv": "csv",
    ".tsv": "tsv",
}


class IngestError(ValueError):
    """Unreadable source, unknown format, or (in strict mode) a bad record."""


@dataclass(slots=True)
class PostRecord:
    """One social post with identity, timing, engagement, and upstream flags.

    Optional fields are ``None`` when the source did not carry them; they are
    never folded into sentinel zeros so downstream feature assembly can tell
    "0" apart from "unknown". ``image_url`` is stored canonicalized.
    """

    id: str
    created_utc: int
    subreddit: str = ""
    author: str = ""
    title: str = ""
    image_url: str | None = None
    crosspost_parent_id: str | None = None
    score: int = 0
    total_comments: int = 0
    upvote_ratio: float | None = None
    num_crossposts: int = 0
    is_original_content: bool = False
    nsfw: bool = False
    misinfo_flag: bool = False
    genai_flag: bool = False
    sentiment_compound: float | None = None
    sentiment_pos: float | None = None
    sentiment_neg: float | None = None
    thumbnail_width: int | None = None
    thumbnail_height: int | None = None
    thumbnail_path: str | None = None


POST_FIELD_NAMES = tuple(f.name for f in fields(PostRecord))


@dataclass(slots=True)
class ParseIssue:
    """A skipped input line and why it was skipped."""

    line: int
    message: str


@dataclass(slots=True)
class ValidationReport:
    total: int = 0
    kept: int = 0
    duplicates: int = 0
    invalid: int = 0
    invalid_reasons: Counter = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.invalid_reasons is None:
            self.invalid_reasons = Counter()


def canonicalize_image_url(url: str) -> str:
    """Normalize an image URL so trivially different links compare equal.

    Lowercases scheme and host, strips the query string and fragment, and
    strips trailing slashes. Scheme-less strings are treated as opaque paths:
    only query/fragment/trailing-slash stripping applies.
    """
    url = url.strip()
    parts = urlsplit(url)
    if parts.scheme or parts.netloc:
        path = parts.path.rstrip("/")
        return urlunsplit((parts.scheme.lower(), parts.netloc.lower(), path, "", ""))
    bare = url.split("#", 1)[0].split("?", 1)[0]
    return bare.rstrip("/")


def _opt_str(value, name: str) -> str | None:
    if value is None:
        return None
    if not isinstance(value, str):
        raise ValueError(f"{name} must be a string")
    return value or None


def _opt_float(value, name: str) -> float | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} must be a number")
    return float(value)


def _opt_int(value, name: str) -> int | None:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer")
    return value


def _req_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ValueError(f"{name} must be an integer")
    return value


def _req_bool(value, name: str) -> bool:
    if isinstance(value, bool):
        return value
    if value in (0, 1):
        return bool(value)
    raise ValueError(f"{name} must be a boolean")


def record_from_obj(obj: dict) -> PostRecord:
    """Build a PostRecord from a decoded JSON object; raises ValueError on bad shape."""
    if not isinstance(obj, dict):
        raise ValueError("record must be an object")
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise ValueError("missing or invalid id")
    if "created_utc" not in obj:
        raise ValueError("missing created_utc")
    g = obj.get
    url = _opt_str(g("image_url"), "image_url")
    return PostRecord(
        id=rid,
        created_utc=_req_int(obj["created_utc"], "created_utc"),
        subreddit=str(g("subreddit", "") or ""),
        author=str(g("author", "") or ""),
        title=str(g("title", "") or ""),
        image_url=canonicalize_image_url(url) if url else None,
        crosspost_parent_id=_opt_str(g("crosspost_parent_id"), "crosspost_parent_id"),
        score=_req_int(g("score", 0), "score"),
        total_comments=_req_int(g("total_comments", 0), "total_comments"),
        upvote_ratio=_opt_float(g("upvote_ratio"), "upvote_ratio"),
        num_crossposts=_req_int(g("num_crossposts", 0), "num_crossposts"),
        is_original_content=_req_bool(g("is_original_content", False), "is_original_content"),
        nsfw=_req_bool(g("nsfw", False), "nsfw"),
        misinfo_flag=_req_bool(g("misinfo_flag", False), "misinfo_flag"),
        genai_flag=_req_bool(g("genai_flag", False), "genai_flag"),
        sentiment_compound=_opt_float(g("sentiment_compound"), "sentiment_compound"),
        sentiment_pos=_opt_float(g("sentiment_pos"), "sentiment_pos"),
        sentiment_neg=_opt_float(g("sentiment_neg"), "sentiment_neg"),
        thumbnail_width=_opt_int(g("thumbnail_width"), "thumbnail_width"),
        thumbnail_height=_opt_int(g("thumbnail_height"), "thumbnail_height"),
        thumbnail_path=_opt_str(g("thumbnail_path"), "thumbnail_path"),
    )


_TRUE_WORDS = frozenset({"true", "1", "t", "yes", "y"})
_FALSE_WORDS = frozenset({"false", "0", "f", "no", "n", ""})


def _cell_bool(text: str, name: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE_WORDS:
        return True
    if lowered in _FALSE_WORDS:
        return False
    raise ValueError(f"{name} must be a boolean")


def record_from_row(row: dict[str, str]) -> PostRecord:
    """Build a PostRecord from one delimited-table row (all cells strings)."""
    obj: dict = {}
    for name, text in row.items():
        if text is None or name is None:
            continue
        if name in ("id", "subreddit", "author", "title", "image_url",
                    "crosspost_parent_id", "thumbnail_path"):
            if text != "":
                obj[name] = text
        elif name in ("created_utc", "score", "total_comments", "num_crossposts",
                      "thumbnail_width", "thumbnail_height"):
            if text.strip() != "":
                try:
                    obj[name] = int(text)
                except ValueError:
                    raise ValueError(f"{name} must be an integer") from None
        elif name in ("upvote_ratio", "sentiment_compound", "sentiment_pos", "sentiment_neg"):
            if text.strip() != "":
                try:
                    obj[name] = float(text)
                except ValueError:
                    raise ValueError(f"{name} must be a number") from None
        elif name in ("is_original_content", "nsfw", "misinfo_flag", "genai_flag"):
            obj[name] = _cell_bool(text, name)
        # unknown columns are ignored
    return record_from_obj(obj)


def _infer_format(source) -> str | None:
    name = None
    if isinstance(source, (str, Path)):
        name = str(source)
    else:
        name = getattr(source, "name", None)
    if not isinstance(name, str):
        return None
    return _FORMAT_BY_SUFFIX.get(Path(name).suffix.lower())


def _iter_jsonl(stream: IO[bytes], strict: bool, issues: list[ParseIssue]) -> Iterator[PostRecord]:
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            yield record_from_obj(json.loads(line))
        except (ValueError, TypeError) as exc:
            if strict:
                raise IngestError(f"line {line_no}: {exc}") from exc
            issues.append(ParseIssue(line_no, str(exc)))


def _iter_table(stream: IO[str], delimiter: str, strict: bool,
                issues: list[ParseIssue]) -> Iterator[PostRecord]:
    reader = csv.DictReader(stream, delimiter=delimiter)
    if reader.fieldnames is None:
        return
    for row in reader:
        line_no = reader.line_num
        try:
            yield record_from_row(row)
        except (ValueError, TypeError) as exc:
            if strict:
                raise IngestError(f"line {line_no}: {exc}") from exc
            issues.append(ParseIssue(line_no, str(exc)))


def parse_posts(source, fmt: str | None = None,
                strict: bool = False) -> tuple[list[PostRecord], list[ParseIssue]]:
    """Parse a post dump into records plus a list of skipped-line issues.

    ``source`` is a path or an open stream; ``fmt`` is "jsonl", "csv", or
    "tsv" (inferred from the file extension when omitted). In strict mode
    the first malformed record raises :class:`IngestError` instead of
    being reported.
    """
    if fmt is None:
        fmt = _infer_format(source)
    if fmt not in ("jsonl", "csv", "tsv"):
        raise IngestError(f"unknown input format: {fmt!r}")

    issues: list[ParseIssue] = []
    close_me = None
    try:
        if isinstance(source, (str, Path)):
            try:
                stream: IO = open(source, "rb")
            except OSError as exc:
                raise IngestError(f"cannot read {source}: {exc}") from exc
            close_me = stream
        else:
            stream = source

        if fmt == "jsonl":
            if isinstance(stream, io.TextIOBase):
                stream = stream.buffer if hasattr(stream, "buffer") else \
                    io.BytesIO(stream.read().encode("utf-8"))
            records = list(_iter_jsonl(stream, strict, issues))
        else:
            if not isinstance(stream, io.TextIOBase):
                stream = io.TextIOWrapper(stream, encoding="utf-8")
            delimiter = "\t" if fmt == "tsv" else ","
            try:
                records = list(_iter_table(stream, delimiter, strict, issues))
            except UnicodeDecodeError as exc:
                raise IngestError(f"source is not valid UTF-8: {exc}") from exc
        return records, issues
    finally:
        if close_me is not None:
            close_me.close()


def _invalid_reason(r: PostRecord) -> str | None:
    if not r.id:
        return "empty_id"
    if r.created_utc <= 0:
        return "nonpositive_created_utc"
    if r.score < 0:
        return "negative_score"
    if r.total_comments < 0:
        return "negative_total_comments"
    if r.num_crossposts < 0:
        return "negative_num_crossposts"
    if r.upvote_ratio is not None and not 0.0 <= r.upvote_ratio <= 1.0:
        return "upvote_ratio_out_of_range"
    if r.sentiment_compound is not None and not -1.0 <= r.sentiment_compound <= 1.0:
        return "sentiment_compound_out_of_range"
    if r.sentiment_pos is not None and not 0.0 <= r.sentiment_pos <= 1.0:
        return "sentiment_pos_out_of_range"
    if r.sentiment_neg is not None and not 0.0 <= r.sentiment_neg <= 1.0:
        return "sentiment_neg_out_of_range"
    if r.thumbnail_width is not None and r.thumbnail_width <= 0:
        return "nonpositive_thumbnail_width"
    if r.thumbnail_height is not None and r.thumbnail_height <= 0:
        return "nonpositive_thumbnail_height"
    if r.crosspost_parent_id is not None and r.crosspost_parent_id == r.id:
        return "self_crosspost"
    return None


def validate_and_dedupe(records: Iterable[PostRecord]) -> tuple[list[PostRecord], ValidationReport]:
    """Drop invalid records, collapse duplicate ids (first wins), sort by time.

    Output is sorted ascending by ``(created_utc, id)``. All problems are
    counted in the report; nothing raises.
    """
    report = ValidationReport()
    seen: set[str] = set()
    kept: list[PostRecord] = []
    for r in records:
        report.total += 1
        reason = _invalid_reason(r)
        if reason is not None:
            report.invalid += 1
            report.invalid_reasons[reason] += 1
            continue
        if r.id in seen:
            report.duplicates += 1
            continue
        seen.add(r.id)
        kept.append(r)
    kept.sort(key=lambda r: (r.created_utc, r.id))
    report.kept = len(kept)
    return kept, report


def filter_nsfw(records: Iterable[PostRecord]) -> list[PostRecord]:
    """Remove records flagged nsfw, preserving relative order."""
    return [r for r in records if not r.nsfw]


def record_to_obj(r: PostRecord) -> dict:
    """Record as a plain dict, omitting absent optionals."""
    obj = {
        "id": r.id,
        "created_utc": r.created_utc,
        "subreddit": r.subreddit,
        "author": r.author,
        "title": r.title,
        "score": r.score,
        "total_comments": r.total_comments,
        "num_crossposts": r.num_crossposts,
        "is_original_content": r.is_original_content,
        "nsfw": r.nsfw,
        "misinfo_flag": r.misinfo_flag,
        "genai_flag": r.genai_flag,
    }
    for name in ("image_url", "crosspost_parent_id", "upvote_ratio",
                 "sentiment_compound", "sentiment_pos", "sentiment_neg",
                 "thumbnail_width", "thumbnail_height", "thumbnail_path"):
        value = getattr(r, name)
        if value is not None:
            obj[name] = value
    return obj


def write_posts_jsonl(records: Iterable[PostRecord], dest) -> None:
    """Serialize records one JSON object per line (UTF-8)."""
    own = isinstance(dest, (str, Path))
    stream = open(dest, "w", encoding="utf-8") if own else dest
    try:
        dumps = json.dumps
        for r in records:
            stream.write(dumps(record_to_obj(r), separators=(",", ":"), ensure_ascii=False))
            stream.write("\n")
    finally:
        if own:
            stream.close()
