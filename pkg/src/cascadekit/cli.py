"""Command-line entry point.

One subcommand per pipeline stage plus `synth` (dataset generator) and
`run` (the whole pipeline). Options resolve in three layers: dataclass
defaults, then the --config file, then explicit flags.

Exit codes: 0 success, 2 usage or config problems, and a fixed code per
failed stage (ingest 10, cluster 11, graph 12, metrics 13, features 14,
predict 15, synth 16, report 17).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, PipelineConfig, load_config
from .ingest import write_posts_jsonl
from .pipeline import (
    EXPERIMENT_CELLS,
    STAGES,
    StageError,
    _experiment_matrices,
    _write_experiment_outputs,
    run_pipeline,
    stage_features,
    write_manifest,
)
from .predict import run_experiment_grid
from .synth import SHAPES, SIZE_DISTS, SynthConfig, generate

STAGE_EXIT = {
    "ingest": 10, "cluster": 11, "graph": 12, "metrics": 13,
    "features": 14, "predict": 15, "synth": 16, "report": 17,
}

# (args attribute, config field); flags default to None so only explicit
# values override the config file
_OVERRIDES = (
    ("seed", "seed"),
    ("output_dir", "output_dir"),
    ("threads", "threads"),
    ("input", "input"),
    ("format", "format"),
    ("ela_quality", "ela_quality"),
    ("keywords_file", "keywords_file"),
    ("test_fraction", "test_fraction"),
)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="key=value config file")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--output-dir", dest="output_dir", default=None, metavar="DIR")
    sub.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadekit",
        description="Reconstruct repost cascades and measure their virality.")
    subs = parser.add_subparsers(dest="command", required=True)

    def add_ingest_flags(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--input", metavar="PATH")
        sub.add_argument("--format", choices=("jsonl", "csv", "tsv"), default=None)
        sub.add_argument("--strict", action="store_true", default=None)
        sub.add_argument("--drop-nsfw", dest="drop_nsfw", action="store_true",
                         default=None)

    p = subs.add_parser("ingest", help="parse, validate, and dedupe raw posts")
    add_ingest_flags(p)

    subs.add_parser("cluster", help="group posts into cascades")
    subs.add_parser("graph", help="build repost trees and emit edges")
    subs.add_parser("metrics", help="per-cascade metrics and grouped tables")

    p = subs.add_parser("features", help="assemble feature matrices")
    p.add_argument("--mode", choices=("content", "context", "combined", "all"),
                   default="all")
    p.add_argument("--ela-quality", dest="ela_quality", type=int, default=None)
    p.add_argument("--keywords-file", dest="keywords_file", default=None)

    p = subs.add_parser("predict", help="train baselines and attribute features")
    p.add_argument("--level", choices=("post", "cascade"), default=None)
    p.add_argument("--mode", choices=("content", "context", "combined"), default=None)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    p.add_argument("--export-matrix", dest="export_matrix", metavar="PATH")

    p = subs.add_parser("synth", help="generate a synthetic dataset with truth")
    p.add_argument("--out", metavar="PATH", help="dataset file (jsonl)")
    p.add_argument("--truth", metavar="PATH", help="planted-truth file (json)")
    p.add_argument("--num-cascades", dest="num_cascades", type=int, default=100)
    p.add_argument("--shape", choices=SHAPES, default="mixed")
    p.add_argument("--size-dist", dest="size_dist", choices=SIZE_DISTS,
                   default="geometric")
    p.add_argument("--geometric-p", dest="geometric_p", type=float, default=0.35)
    p.add_argument("--fixed-size", dest="fixed_size", type=int, default=3)
    p.add_argument("--max-size", dest="max_size", type=int, default=200)
    p.add_argument("--url-fraction", dest="url_fraction", type=float, default=1.0)
    p.add_argument("--crosspost-fraction", dest="crosspost_fraction", type=float,
                   default=1.0)
    p.add_argument("--misinfo-prob", dest="misinfo_prob", type=float, default=0.15)
    p.add_argument("--genai-prob", dest="genai_prob", type=float, default=0.15)
    p.add_argument("--flag-size-coupling", dest="flag_size_coupling", type=float,
                   default=0.0)
    p.add_argument("--clickbait-prob", dest="clickbait_prob", type=float, default=0.0)
    p.add_argument("--degrade", action="store_true")

    subs.add_parser("report", help="render tables and attribution plot data")

    p = subs.add_parser("run", help="run the full pipeline")
    add_ingest_flags(p)
    p.add_argument("--stages", metavar="A,B,...",
                   help=f"comma-separated subset of: {','.join(STAGES)}")

    for sub in subs.choices.values():
        _add_common(sub)
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    for attr, field in _OVERRIDES:
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, field, value)
    if getattr(args, "strict", None):
        cfg.strict = True
    if getattr(args, "drop_nsfw", None):
        cfg.drop_nsfw = True
    cfg.validate()
    return cfg


def _cmd_stage(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    manifest = run_pipeline(cfg, [args.command])
    print(f"{args.command}: {len(manifest)} artifacts in {cfg.output_dir}")
    return 0


def _cmd_features(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    if args.mode == "all":
        return _cmd_stage(cfg, args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage_features(cfg, out, modes=[args.mode])
    manifest = write_manifest(out)
    print(f"features[{args.mode}]: {len(manifest)} artifacts in {cfg.output_dir}")
    return 0


def _cmd_predict(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    if args.level is None and args.mode is None and args.export_matrix is None:
        return _cmd_stage(cfg, args)
    if args.level is None or args.mode is None:
        print("cascadekit: predict needs both --level and --mode "
              "(or neither for the full grid)", file=sys.stderr)
        return 2
    cell = (args.level, args.mode)
    if cell not in EXPERIMENT_CELLS:
        print(f"cascadekit: no experiment cell {args.level}/{args.mode}",
              file=sys.stderr)
        return 2
    out = Path(cfg.output_dir)
    matrix = _experiment_matrices(out, "predict")[cell]
    if args.export_matrix:
        matrix.write_csv(args.export_matrix)
        print(f"wrote {args.export_matrix}")
    try:
        results = run_experiment_grid({cell: matrix}, test_fraction=cfg.test_fraction,
                                      seed=cfg.seed, epochs=cfg.epochs,
                                      learning_rate=cfg.learning_rate, l2=cfg.l2)
    except ValueError as exc:
        raise StageError("predict", str(exc)) from exc
    _write_experiment_outputs(out, results)
    write_manifest(out)
    r = results[0]
    print(f"{r.level}/{r.mode}: auc={r.auc:.4f} acc={r.accuracy:.4f} "
          f"macro_f1={r.macro_f1:.4f}")
    return 0


def _cmd_synth(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    out_dir = Path(cfg.output_dir)
    dataset = Path(args.out) if args.out else out_dir / "synthetic_posts.jsonl"
    truth_path = Path(args.truth) if args.truth else out_dir / "synthetic_truth.json"
    synth_cfg = SynthConfig(
        seed=cfg.seed,
        num_cascades=args.num_cascades,
        size_dist=args.size_dist,
        geometric_p=args.geometric_p,
        fixed_size=args.fixed_size,
        max_size=args.max_size,
        shape=args.shape,
        url_evidence_fraction=args.url_fraction,
        crosspost_evidence_fraction=args.crosspost_fraction,
        misinfo_prob=args.misinfo_prob,
        genai_prob=args.genai_prob,
        flag_size_coupling=args.flag_size_coupling,
        clickbait_prob=args.clickbait_prob,
        degrade=args.degrade,
    )
    try:
        records, truth = generate(synth_cfg)
    except ValueError as exc:
        raise StageError("synth", str(exc)) from exc
    dataset.parent.mkdir(parents=True, exist_ok=True)
    truth_path.parent.mkdir(parents=True, exist_ok=True)
    write_posts_jsonl(records, dataset)
    truth_path.write_text(json.dumps({
        "members": truth.members,
        "trees": truth.trees,
        "flags": [list(pair) for pair in truth.flags],
    }, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(records)} posts in {len(truth.members)} cascades "
          f"to {dataset} (truth: {truth_path})")
    return 0


def _cmd_run(cfg: PipelineConfig, args: argparse.Namespace) -> int:
    stages = None
    if args.stages:
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    manifest = run_pipeline(cfg, stages)
    print(f"run: {len(manifest)} artifacts in {cfg.output_dir}")
    return 0


_HANDLERS = {
    "ingest": _cmd_stage,
    "cluster": _cmd_stage,
    "graph": _cmd_stage,
    "metrics": _cmd_stage,
    "features": _cmd_features,
    "predict": _cmd_predict,
    "synth": _cmd_synth,
    "report": _cmd_stage,
    "run": _cmd_run,
}


def entrypoint(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"cascadekit: [config] {exc}", file=sys.stderr)
        return 2
    try:
        return _HANDLERS[args.command](cfg, args)
    except StageError as exc:
        print(f"cascadekit: [{exc.stage}] {exc}", file=sys.stderr)
        return STAGE_EXIT.get(exc.stage, 1)
    except ValueError as exc:
        print(f"cascadekit: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(entrypoint())
