"""Grouped summary tables and markdown rendering.

Two fixed layouts: a post-level table (age, score, comments, VAI by
misinfo/genai group) and a cascade-level table (structure and timing by
group). Age is reported as mean days but std hours, matching the
reference presentation.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .metrics import group_stats

HOURS_PER_DAY = 24.0
NULL_MD = "n/a"

TABLE1_COLUMNS = (
    "Misinformation",
    "GenAI",
    "Mean Age Days",
    "Std Age Hours",
    "Mean Score",
    "Std Score",
    "Mean Total Comments",
    "Std Total Comments",
    "Mean VAI",
    "Std VAI",
)

TABLE2_COLUMNS = (
    "Misinformation",
    "GenAI",
    "Mean Branch",
    "Max Branch",
    "Cascade Size",
    "Cascade Depth",
    "Structural Virality",
    "Time to First Repost (hr)",
    "Peak Repost Speed (hr)",
    "Lifespan (hr)",
    "# Subreddits",
)


def _stat(stats, column, which):
    pair = stats[column]
    if pair is None:
        return None
    return pair[0] if which == "mean" else pair[1]


def table1_rows(post_rows) -> list[list]:
    """Group post rows into the 4-row engagement table.

    Rows need age_hours, score, total_comments, vai and the two flag
    keys; missing (None) cells are skipped per column.
    """
    columns = ("age_hours", "score", "total_comments", "vai")
    rows = []
    for group in group_stats(post_rows, columns):
        mean_age = _stat(group.stats, "age_hours", "mean")
        rows.append([
            group.misinfo,
            group.genai,
            None if mean_age is None else mean_age / HOURS_PER_DAY,
            _stat(group.stats, "age_hours", "std"),
            _stat(group.stats, "score", "mean"),
            _stat(group.stats, "score", "std"),
            _stat(group.stats, "total_comments", "mean"),
            _stat(group.stats, "total_comments", "std"),
            _stat(group.stats, "vai", "mean"),
            _stat(group.stats, "vai", "std"),
        ])
    return rows


def table2_rows(cascade_rows) -> list[list]:
    """Group cascade rows into the 4-row structure table (means only)."""
    columns = (
        "mean_branch",
        "max_branch",
        "size",
        "depth",
        "structural_virality",
        "time_to_first_repost_hr",
        "peak_repost_speed_hr",
        "lifespan_hr",
        "num_subreddits",
    )
    rows = []
    for group in group_stats(
        cascade_rows,
        columns,
        misinfo_key="misinfo_cascade_flag",
        genai_key="genai_cascade_flag",
    ):
        rows.append(
            [group.misinfo, group.genai]
            + [_stat(group.stats, col, "mean") for col in columns]
        )
    return rows


def _md_cell(value) -> str:
    if value is None:
        return NULL_MD
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))    # plain float repr even for numpy scalars
    return str(value)


def render_markdown_table(headers, rows, title: str | None = None) -> str:
    """Pipe-table markdown; None cells become n/a."""
    lines = []
    if title:
        lines.append(f"## {title}")
        lines.append("")
    lines.append("| " + " | ".join(headers) + " |")
    lines.append("|" + "|".join(" --- " for _ in headers) + "|")
    for row in rows:
        lines.append("| " + " | ".join(_md_cell(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


def write_table_csv(dest, headers, rows) -> None:
    """Machine-readable companion: full-precision repr floats, empty for None."""
    with Path(dest).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(headers)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def attribution_plot_rows(top_attributions, k: int = 5) -> list[list]:
    """Top-k (feature, value) pairs for plotting, highest first."""
    return [[name, float(value)] for name, value in list(top_attributions)[:k]]


def render_experiment_report(results) -> str:
    """Markdown summary of an experiment grid with top-5 attributions."""
    headers = (
        "Level", "Mode", "Train", "Test",
        "Accuracy", "Macro F1", "ROC-AUC", "Attribution",
    )
    rows = [
        [r.level, r.mode, r.n_train, r.n_test,
         r.accuracy, r.macro_f1, r.auc, r.attribution_method]
        for r in results
    ]
    parts = [render_markdown_table(headers, rows, title="Prediction baselines")]
    for r in results:
        parts.append(f"### Top attributions: {r.level} / {r.mode}\n")
        for rank, (name, value) in enumerate(r.top_attributions, start=1):
            parts.append(f"{rank}. {name}: {value:.4f}")
        parts.append("")
    return "\n".join(parts)
