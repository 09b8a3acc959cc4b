"""Flat key=value pipeline configuration.

One option per line, `key = value`, with # comments and blank lines
ignored. Types come from the PipelineConfig field defaults; unknown keys
are errors so typos never silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .features import DEFAULT_CLICKBAIT_KEYWORDS

LABEL_SCOPES = ("global", "per_subreddit")


class ConfigError(ValueError):
    """Unreadable config file, unknown key, or invalid value."""


@dataclass
class PipelineConfig:
    input: str | None = None
    format: str | None = None        # jsonl | csv | tsv, inferred when absent
    strict: bool = False
    drop_nsfw: bool = False
    output_dir: str = "out"
    seed: int = 0
    threads: int = 1
    hash_threshold: int = 4
    enable_title_fallback: bool = True
    vai_alpha: float = 1.0
    vai_beta: float = 1.0
    vai_tau: float = 1.0
    window_hr: float = 24.0
    label_fraction: float = 0.2
    label_scope: str = "global"
    test_fraction: float = 0.2
    epochs: int = 500
    learning_rate: float = 0.1
    l2: float = 0.01
    ela_quality: int = 90
    keywords: tuple = DEFAULT_CLICKBAIT_KEYWORDS
    keywords_file: str | None = None

    def validate(self) -> None:
        if not 0 < self.label_fraction < 1:
            raise ConfigError(f"label_fraction must be in (0,1), got {self.label_fraction}")
        if not 0 < self.test_fraction < 1:
            raise ConfigError(f"test_fraction must be in (0,1), got {self.test_fraction}")
        if self.window_hr <= 0:
            raise ConfigError(f"window_hr must be positive, got {self.window_hr}")
        if self.vai_tau <= 0:
            raise ConfigError(f"vai_tau must be positive, got {self.vai_tau}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if not 1 <= self.ela_quality <= 100:
            raise ConfigError(f"ela_quality must be in [1,100], got {self.ela_quality}")
        if not 0 <= self.hash_threshold <= 64:
            raise ConfigError(f"hash_threshold must be in [0,64], got {self.hash_threshold}")
        if self.label_scope not in LABEL_SCOPES:
            raise ConfigError(f"label_scope must be one of {LABEL_SCOPES}")
        if self.format is not None and self.format not in ("jsonl", "csv", "tsv"):
            raise ConfigError(f"format must be jsonl, csv, or tsv, got {self.format!r}")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")
        if not self.keywords:
            raise ConfigError("keyword list must be non-empty")

    def resolved_keywords(self) -> tuple[str, ...]:
        """Keywords from keywords_file (one per line) when set, else inline."""
        if self.keywords_file is None:
            return tuple(self.keywords)
        try:
            lines = Path(self.keywords_file).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read keywords_file: {exc}") from exc
        words = tuple(w.strip() for w in lines if w.strip())
        if not words:
            raise ConfigError(f"keywords_file {self.keywords_file} is empty")
        return words


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    ftype = _FIELD_TYPES[key]
    if "None" in ftype and raw.lower() in ("none", ""):
        return None
    if ftype == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {raw!r}")
    if ftype == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}") from None
    if ftype == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {raw!r}") from None
    if ftype == "tuple":
        return tuple(w.strip() for w in raw.split(",") if w.strip())
    return raw


def load_config(path) -> PipelineConfig:
    """Parse a key=value file into a validated PipelineConfig."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = PipelineConfig()
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected key = value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {line_no}: unknown option {key!r}")
        setattr(cfg, key, _parse_value(key, raw))
    cfg.validate()
    return cfg
