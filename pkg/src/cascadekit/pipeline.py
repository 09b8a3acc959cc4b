"""File-mediated pipeline stages.

Each stage reads artifacts written by earlier stages and writes its own,
so any contiguous suffix can be rerun without recomputing the prefix.
Every float lands on disk via repr() and round-trips exactly, which is
what makes rerunning a stage byte-stable.

Artifacts (all under the configured output directory):

    ingest   posts.jsonl, ingest_report.json
    cluster  cascade_assignments.csv, merge_log.csv, cluster_report.json
    graph    edges.csv
    metrics  cascade_metrics.csv, post_metrics.csv, table1.{md,csv}, table2.{md,csv}
    features post_features.csv, cascade_features_{content,context,combined}.csv
    predict  experiments.csv, experiment_report.md, attributions_<level>_<mode>.csv
    report   report.md, attribution_plot_<level>_<mode>.csv

run_pipeline finishes by writing manifest.json: a sha256 per artifact,
the determinism contract for the whole run.
"""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from pathlib import Path

from . import report as report_mod
from .cluster import CascadeSet, SimilarityConfig, build_cascades
from .config import PipelineConfig
from .features import (
    CASCADE_REGISTRIES,
    POST_CONTENT_FEATURES,
    FeatureMatrix,
    assemble_cascade_features,
    assemble_post_features,
    compile_keywords,
    extract_image_features,
)
from .graph import build_repost_graph
from .ingest import (
    IngestError,
    filter_nsfw,
    parse_posts,
    validate_and_dedupe,
    write_posts_jsonl,
)
from .metrics import (
    CascadeMetrics,
    SECONDS_PER_HOUR,
    VaiParams,
    cascade_summary,
    engagement_ratio,
    label_top_quantile,
    vai,
)
from .predict import ExperimentResult, run_experiment_grid

STAGES = ("ingest", "cluster", "graph", "metrics", "features", "predict", "report")

POSTS_FILE = "posts.jsonl"
INGEST_REPORT_FILE = "ingest_report.json"
ASSIGNMENTS_FILE = "cascade_assignments.csv"
MERGE_LOG_FILE = "merge_log.csv"
CLUSTER_REPORT_FILE = "cluster_report.json"
EDGES_FILE = "edges.csv"
CASCADE_METRICS_FILE = "cascade_metrics.csv"
POST_METRICS_FILE = "post_metrics.csv"
EXPERIMENTS_FILE = "experiments.csv"
EXPERIMENT_REPORT_FILE = "experiment_report.md"
REPORT_FILE = "report.md"
MANIFEST_FILE = "manifest.json"

# the four experiment cells; post-level metadata features are excluded
# because vai/engagement directly encode the post label
EXPERIMENT_CELLS = (
    ("post", "content"),
    ("cascade", "content"),
    ("cascade", "context"),
    ("cascade", "combined"),
)

_METRIC_INT_FIELDS = {"cascade_id", "size", "depth", "max_branch",
                      "num_subreddits", "total_upvotes"}
_METRIC_BOOL_FIELDS = {"misinfo_cascade_flag", "genai_cascade_flag"}
_METRIC_OPTIONAL_FIELDS = {"time_to_first_repost_hr", "peak_repost_speed_hr",
                           "avg_repost_delay_hr"}
_METRIC_FIELDS = (
    "cascade_id", "size", "depth", "mean_branch", "max_branch",
    "structural_virality", "time_to_first_repost_hr", "peak_repost_speed_hr",
    "lifespan_hr", "avg_repost_delay_hr", "num_subreddits", "total_upvotes",
    "text_entropy_bits", "image_entropy_bits",
    "misinfo_cascade_flag", "genai_cascade_flag",
)


class StageError(RuntimeError):
    """A stage failed; carries the stage name for diagnostics and exit codes."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _require(out: Path, name: str, stage: str) -> Path:
    path = out / name
    if not path.is_file():
        raise StageError(stage, f"missing {path} (run the earlier stages first)")
    return path


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))    # plain float repr even for numpy scalars
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _read_rows(path: Path) -> list[dict]:
    with path.open("r", encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def load_posts(out: Path, stage: str):
    path = _require(out, POSTS_FILE, stage)
    records, issues = parse_posts(path, fmt="jsonl")
    if issues:
        first = issues[0]
        raise StageError(stage, f"{path} is corrupt at line {first.line}: {first.message}")
    return records


def load_assignments(out: Path, stage: str) -> dict[str, int]:
    path = _require(out, ASSIGNMENTS_FILE, stage)
    return {row["post_id"]: int(row["cascade_id"]) for row in _read_rows(path)}


def _grouped_posts(posts, assignments, stage: str) -> dict[int, list]:
    groups: dict[int, list] = {}
    for post in posts:
        cid = assignments.get(post.id)
        if cid is None:
            raise StageError(stage, f"post {post.id} has no cascade assignment")
        groups.setdefault(cid, []).append(post)
    return dict(sorted(groups.items()))


def stage_ingest(cfg: PipelineConfig, out: Path) -> None:
    if cfg.input is None:
        raise StageError("ingest", "no input file configured (set input= or --input)")
    try:
        records, issues = parse_posts(cfg.input, fmt=cfg.format, strict=cfg.strict)
    except (IngestError, OSError) as exc:
        raise StageError("ingest", f"cannot ingest {cfg.input}: {exc}") from exc
    kept, rep = validate_and_dedupe(records)
    nsfw_dropped = 0
    if cfg.drop_nsfw:
        before = len(kept)
        kept = filter_nsfw(kept)
        nsfw_dropped = before - len(kept)
    write_posts_jsonl(kept, out / POSTS_FILE)
    _write_json(out / INGEST_REPORT_FILE, {
        "input": str(cfg.input),
        "total": rep.total,
        "kept": rep.kept,
        "duplicates": rep.duplicates,
        "invalid": rep.invalid,
        "invalid_reasons": dict(sorted(rep.invalid_reasons.items())),
        "parse_issues": len(issues),
        "parse_issue_samples": [
            {"line": i.line, "message": i.message} for i in issues[:20]
        ],
        "nsfw_dropped": nsfw_dropped,
        "written": len(kept),
    })


def stage_cluster(cfg: PipelineConfig, out: Path) -> None:
    posts = load_posts(out, "cluster")
    sim = SimilarityConfig(hash_threshold=cfg.hash_threshold,
                           enable_title_fallback=cfg.enable_title_fallback)
    cascades: CascadeSet = build_cascades(posts, sim)
    assignments = cascades.assignments()
    _write_csv(out / ASSIGNMENTS_FILE, ("post_id", "cascade_id"),
               [(p.id, assignments[p.id]) for p in posts])
    _write_csv(out / MERGE_LOG_FILE, ("post_a", "post_b", "rule"),
               cascades.merge_log)
    rule_counts = Counter(rule for _, _, rule in cascades.merge_log)
    sizes = [len(members) for members in cascades.cascades]
    _write_json(out / CLUSTER_REPORT_FILE, {
        "num_posts": len(posts),
        "num_cascades": len(cascades.cascades),
        "largest_cascade": max(sizes, default=0),
        "singletons": sum(1 for s in sizes if s == 1),
        "dangling_parents": cascades.dangling_parents,
        "merges_by_rule": dict(sorted(rule_counts.items())),
    })


def stage_graph(cfg: PipelineConfig, out: Path) -> None:
    posts = load_posts(out, "graph")
    groups = _grouped_posts(posts, load_assignments(out, "graph"), "graph")
    rows = []
    for cid, cascade_posts in groups.items():
        g = build_repost_graph(cascade_posts)
        for parent_id, child_id in g.edges():
            rows.append((cid, parent_id, child_id))
    _write_csv(out / EDGES_FILE, ("cascade_id", "parent_id", "child_id"), rows)


def _post_labels(posts, values, cfg: PipelineConfig) -> list[bool]:
    if cfg.label_scope == "global":
        return label_top_quantile(values, cfg.label_fraction)
    by_sub: dict[str, list[int]] = {}
    for i, post in enumerate(posts):
        by_sub.setdefault(post.subreddit, []).append(i)
    labels = [False] * len(posts)
    for indices in by_sub.values():
        local = label_top_quantile([values[i] for i in indices], cfg.label_fraction)
        for idx, flag in zip(indices, local):
            labels[idx] = flag
    return labels


def stage_metrics(cfg: PipelineConfig, out: Path) -> None:
    posts = load_posts(out, "metrics")
    if not posts:
        raise StageError("metrics", "no posts to summarize")
    assignments = load_assignments(out, "metrics")
    groups = _grouped_posts(posts, assignments, "metrics")

    summaries = [cascade_summary(cid, cascade_posts, window_hr=cfg.window_hr)
                 for cid, cascade_posts in groups.items()]
    sv_values = [m.structural_virality for m in summaries]
    cascade_labels = label_top_quantile(sv_values, cfg.label_fraction)
    _write_csv(out / CASCADE_METRICS_FILE, _METRIC_FIELDS + ("label",),
               [[getattr(m, f) for f in _METRIC_FIELDS] + [label]
                for m, label in zip(summaries, cascade_labels)])

    params = VaiParams(alpha=cfg.vai_alpha, beta=cfg.vai_beta, tau=cfg.vai_tau)
    reference_ts = max(p.created_utc for p in posts)
    ages = [(reference_ts - p.created_utc) / SECONDS_PER_HOUR for p in posts]
    vai_values = [vai(p.score, p.total_comments, age, params)
                  for p, age in zip(posts, ages)]
    post_labels = _post_labels(posts, vai_values, cfg)
    _write_csv(
        out / POST_METRICS_FILE,
        ("post_id", "cascade_id", "subreddit", "age_hours", "vai",
         "engagement_ratio", "score", "total_comments",
         "misinfo_flag", "genai_flag", "label"),
        [(p.id, assignments[p.id], p.subreddit, age, v,
          engagement_ratio(p.total_comments, p.score), p.score, p.total_comments,
          p.misinfo_flag, p.genai_flag, label)
         for p, age, v, label in zip(posts, ages, vai_values, post_labels)],
    )

    _emit_tables(out, posts, ages, vai_values, summaries)


def _emit_tables(out: Path, posts, ages, vai_values, summaries) -> None:
    post_rows = [{
        "age_hours": age, "score": float(p.score),
        "total_comments": float(p.total_comments), "vai": v,
        "misinfo_flag": p.misinfo_flag, "genai_flag": p.genai_flag,
    } for p, age, v in zip(posts, ages, vai_values)]
    t1 = report_mod.table1_rows(post_rows)

    cascade_rows = [{
        "mean_branch": m.mean_branch, "max_branch": float(m.max_branch),
        "size": float(m.size), "depth": float(m.depth),
        "structural_virality": m.structural_virality,
        "time_to_first_repost_hr": m.time_to_first_repost_hr,
        "peak_repost_speed_hr": m.peak_repost_speed_hr,
        "lifespan_hr": m.lifespan_hr,
        "num_subreddits": float(m.num_subreddits),
        "misinfo_cascade_flag": m.misinfo_cascade_flag,
        "genai_cascade_flag": m.genai_cascade_flag,
    } for m in summaries]
    t2 = report_mod.table2_rows(cascade_rows)

    (out / "table1.md").write_text(
        report_mod.render_markdown_table(report_mod.TABLE1_COLUMNS, t1,
                                         title="Post engagement by flag group"),
        encoding="utf-8")
    report_mod.write_table_csv(out / "table1.csv", report_mod.TABLE1_COLUMNS, t1)
    (out / "table2.md").write_text(
        report_mod.render_markdown_table(report_mod.TABLE2_COLUMNS, t2,
                                         title="Cascade structure by flag group"),
        encoding="utf-8")
    report_mod.write_table_csv(out / "table2.csv", report_mod.TABLE2_COLUMNS, t2)


def _read_cascade_metrics(out: Path, stage: str):
    """cascade_metrics.csv -> ({cascade_id: CascadeMetrics}, {cascade_id: label})."""
    rows = _read_rows(_require(out, CASCADE_METRICS_FILE, stage))
    metrics_by_id: dict[int, CascadeMetrics] = {}
    labels: dict[int, bool] = {}
    for row in rows:
        kwargs = {}
        for name in _METRIC_FIELDS:
            raw = row[name]
            if name in _METRIC_OPTIONAL_FIELDS and raw == "":
                kwargs[name] = None
            elif name in _METRIC_BOOL_FIELDS:
                kwargs[name] = raw == "True"
            elif name in _METRIC_INT_FIELDS:
                kwargs[name] = int(raw)
            else:
                kwargs[name] = float(raw)
        m = CascadeMetrics(**kwargs)
        metrics_by_id[m.cascade_id] = m
        labels[m.cascade_id] = row["label"] == "True"
    return metrics_by_id, labels


def _read_post_metrics(out: Path, stage: str) -> dict[str, dict]:
    rows = _read_rows(_require(out, POST_METRICS_FILE, stage))
    return {row["post_id"]: {
        "vai": float(row["vai"]),
        "engagement_ratio": float(row["engagement_ratio"]),
        "label": row["label"] == "True",
    } for row in rows}


def stage_features(cfg: PipelineConfig, out: Path, modes=None) -> None:
    """Write post and cascade feature matrices; modes filters the cascade set."""
    posts = load_posts(out, "features")
    groups = _grouped_posts(posts, load_assignments(out, "features"), "features")
    metrics_by_id, cascade_labels = _read_cascade_metrics(out, "features")
    per_post = _read_post_metrics(out, "features")

    pattern = compile_keywords(cfg.resolved_keywords())
    image_feats = extract_image_features(posts, ela_quality=cfg.ela_quality,
                                         max_workers=cfg.threads)

    vectors_by_post = {}
    for post in posts:
        stats = per_post.get(post.id)
        if stats is None:
            raise StageError("features", f"post {post.id} missing from {POST_METRICS_FILE}")
        vectors_by_post[post.id] = assemble_post_features(
            post, image_feats.get(post.id), stats["vai"], stats["engagement_ratio"],
            keywords=pattern, label=stats["label"])

    post_matrix = FeatureMatrix.from_vectors(
        [p.id for p in posts], [vectors_by_post[p.id] for p in posts])
    post_matrix.write_csv(out / "post_features.csv")

    for mode in (modes if modes is not None else CASCADE_REGISTRIES):
        if mode not in CASCADE_REGISTRIES:
            raise StageError("features", f"unknown feature mode {mode!r}")
        ids, vectors = [], []
        for cid, cascade_posts in groups.items():
            m = metrics_by_id.get(cid)
            if m is None:
                raise StageError("features",
                                 f"cascade {cid} missing from {CASCADE_METRICS_FILE}")
            vectors.append(assemble_cascade_features(
                [vectors_by_post[p.id] for p in cascade_posts], m, mode,
                label=cascade_labels[cid]))
            ids.append(str(cid))
        FeatureMatrix.from_vectors(ids, vectors).write_csv(
            out / f"cascade_features_{mode}.csv")


def _experiment_matrices(out: Path, stage: str) -> dict[tuple[str, str], FeatureMatrix]:
    post_matrix = FeatureMatrix.read_csv(_require(out, "post_features.csv", stage))
    cells = {("post", "content"): post_matrix.select(POST_CONTENT_FEATURES)}
    for mode in ("content", "context", "combined"):
        path = _require(out, f"cascade_features_{mode}.csv", stage)
        cells[("cascade", mode)] = FeatureMatrix.read_csv(path)
    return {key: cells[key] for key in EXPERIMENT_CELLS}


def _write_experiment_outputs(out: Path, results: list[ExperimentResult]) -> None:
    _write_csv(
        out / EXPERIMENTS_FILE,
        ("level", "mode", "n_train", "n_test", "accuracy", "macro_f1", "auc",
         "attribution_method"),
        [(r.level, r.mode, r.n_train, r.n_test, r.accuracy, r.macro_f1, r.auc,
          r.attribution_method) for r in results],
    )
    for r in results:
        _write_csv(out / f"attributions_{r.level}_{r.mode}.csv",
                   ("feature", "value"), r.top_attributions)
    (out / EXPERIMENT_REPORT_FILE).write_text(
        report_mod.render_experiment_report(results), encoding="utf-8")


def stage_predict(cfg: PipelineConfig, out: Path) -> None:
    cells = _experiment_matrices(out, "predict")
    try:
        results = run_experiment_grid(cells, test_fraction=cfg.test_fraction,
                                      seed=cfg.seed, epochs=cfg.epochs,
                                      learning_rate=cfg.learning_rate, l2=cfg.l2)
    except ValueError as exc:
        raise StageError("predict", str(exc)) from exc
    _write_experiment_outputs(out, results)


def stage_report(cfg: PipelineConfig, out: Path) -> None:
    post_rows = [{
        "age_hours": float(r["age_hours"]), "score": float(r["score"]),
        "total_comments": float(r["total_comments"]), "vai": float(r["vai"]),
        "misinfo_flag": r["misinfo_flag"] == "True",
        "genai_flag": r["genai_flag"] == "True",
    } for r in _read_rows(_require(out, POST_METRICS_FILE, "report"))]
    metrics_by_id, _ = _read_cascade_metrics(out, "report")
    cascade_rows = [{
        "mean_branch": m.mean_branch, "max_branch": float(m.max_branch),
        "size": float(m.size), "depth": float(m.depth),
        "structural_virality": m.structural_virality,
        "time_to_first_repost_hr": m.time_to_first_repost_hr,
        "peak_repost_speed_hr": m.peak_repost_speed_hr,
        "lifespan_hr": m.lifespan_hr,
        "num_subreddits": float(m.num_subreddits),
        "misinfo_cascade_flag": m.misinfo_cascade_flag,
        "genai_cascade_flag": m.genai_cascade_flag,
    } for m in metrics_by_id.values()]

    parts = [
        report_mod.render_markdown_table(
            report_mod.TABLE1_COLUMNS, report_mod.table1_rows(post_rows),
            title="Post engagement by flag group"),
        report_mod.render_markdown_table(
            report_mod.TABLE2_COLUMNS, report_mod.table2_rows(cascade_rows),
            title="Cascade structure by flag group"),
    ]

    experiments = out / EXPERIMENTS_FILE
    if experiments.is_file():
        rows = _read_rows(experiments)
        headers = ("Level", "Mode", "Train", "Test", "Accuracy", "Macro F1",
                   "ROC-AUC", "Attribution")
        body = [[r["level"], r["mode"], int(r["n_train"]), int(r["n_test"]),
                 float(r["accuracy"]), float(r["macro_f1"]), float(r["auc"]),
                 r["attribution_method"]] for r in rows]
        parts.append(report_mod.render_markdown_table(
            headers, body, title="Prediction baselines"))
        for r in rows:
            attr_path = out / f"attributions_{r['level']}_{r['mode']}.csv"
            if not attr_path.is_file():
                continue
            ranked = [(a["feature"], float(a["value"]))
                      for a in _read_rows(attr_path)]
            plot = report_mod.attribution_plot_rows(ranked, k=5)
            report_mod.write_table_csv(
                out / f"attribution_plot_{r['level']}_{r['mode']}.csv",
                ("feature", "value"), plot)

    (out / REPORT_FILE).write_text("\n".join(parts), encoding="utf-8")


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "cluster": stage_cluster,
    "graph": stage_graph,
    "metrics": stage_metrics,
    "features": stage_features,
    "predict": stage_predict,
    "report": stage_report,
}


def write_manifest(out: Path) -> dict[str, str]:
    """Hash every artifact in the output directory into manifest.json."""
    manifest = {}
    for path in sorted(out.rglob("*")):
        if not path.is_file() or path.name == MANIFEST_FILE:
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        manifest[path.relative_to(out).as_posix()] = digest
    _write_json(out / MANIFEST_FILE, manifest)
    return manifest


def run_pipeline(cfg: PipelineConfig, stages=None) -> dict[str, str]:
    """Run the requested stages in canonical order; returns the manifest."""
    if stages is None:
        selected = list(STAGES)
    else:
        unknown = sorted(set(stages) - set(STAGES))
        if unknown:
            raise ValueError(f"unknown stages: {', '.join(unknown)}")
        selected = [s for s in STAGES if s in set(stages)]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for stage in selected:
        STAGE_FUNCS[stage](cfg, out)
    return write_manifest(out)
