"""Command-line experiment runner.

Subcommands:
    generate-data   render the synthetic dataset to a directory
    run             execute one (pipeline, seed) and persist the run dir
    benchmark       pipelines x seeds, plus aggregate stage-curve tables
    inspect-scores  print the stability table and bucket summary of a run

Exit codes: 0 ok, 2 configuration, 3 missing file, 4 numeric abort,
5 malformed artifact.  SELFSEG_OUTPUT_ROOT overrides the configured
output directory (the only environment variable honored).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

from .config import PIPELINES, ExperimentConfig, _to_plain, load_config
from .data import load_dataset, save_dataset, validate_dataset
from .datagen import generate
from .errors import ConfigError
from .model import CheckpointError, NumericError
from .pipeline import run_pipeline
from .raster import RasterError
from .report import run_label, stage_curves_csv, summary_csv, write_run
from .select import read_score_table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4
EXIT_FORMAT = 5


def _output_root(cfg: ExperimentConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    env = os.environ.get("SELFSEG_OUTPUT_ROOT")
    if env:
        return Path(env)
    return Path(cfg.output_dir)


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(tok) for tok in text.split(",") if tok != "")
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def _parse_pipeline_spec(spec: str) -> tuple[str, str | None]:
    """'suponly' | 'st' | 'stpp' | 'ablation:<mode>' -> (pipeline, ablation)."""
    if spec.startswith("ablation:"):
        return "st", spec.removeprefix("ablation:")
    if spec not in PIPELINES:
        raise ConfigError(
            f"unknown pipeline spec {spec!r} (want one of {PIPELINES} or ablation:<mode>)"
        )
    return spec, None


def _load_or_generate(cfg: ExperimentConfig, data_dir: str | None):
    if data_dir:
        dataset, validation = load_dataset(Path(data_dir))
    else:
        dataset, validation = generate(cfg.data)
    validate_dataset(dataset)
    return dataset, validation


def _cmd_generate_data(args) -> int:
    cfg = load_config(Path(args.config))
    out = Path(args.out) if args.out else _output_root(cfg, None) / "dataset"
    dataset, validation = generate(cfg.data)
    save_dataset(out, dataset, validation)
    print(
        f"wrote {out}: {len(dataset.labeled)} labeled / "
        f"{len(dataset.unlabeled)} unlabeled / {len(validation)} validation, "
        f"{dataset.num_classes} classes"
    )
    return EXIT_OK


def _execute(cfg: ExperimentConfig, dataset, validation, pipeline, ablation, seed, cache=None):
    t0 = time.perf_counter()
    result = run_pipeline(
        dataset, validation, cfg.pipeline_config(), seed, pipeline, ablation, cache
    )
    return result, time.perf_counter() - t0


def _cmd_run(args) -> int:
    cfg = load_config(Path(args.config))
    if args.pipeline:
        cfg = dataclasses.replace(cfg, pipeline=args.pipeline)
    if args.ablation:
        cfg = dataclasses.replace(cfg, ablation=args.ablation)
    cfg.validate()
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    dataset, validation = _load_or_generate(cfg, args.data)
    result, wall = _execute(cfg, dataset, validation, cfg.pipeline, cfg.ablation, seed)
    root = _output_root(cfg, args.out)
    run_dir = root / f"{run_label(result.pipeline, result.ablation)}_seed{seed}"
    write_run(run_dir, result, _to_plain(cfg), dataset, wall)
    for rep in result.stages:
        print(f"{rep.spec.name}: val mIoU {rep.val.miou:.4f}")
    print(f"wrote {run_dir} ({wall:.1f}s)")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    cfg = load_config(Path(args.config))
    seeds = _parse_seeds(args.seeds) if args.seeds else cfg.seeds
    specs = [s for s in (args.pipelines or "suponly,st,stpp").split(",") if s]
    parsed = [_parse_pipeline_spec(s) for s in specs]
    for _, ablation in parsed:
        if ablation is not None:
            cfg_probe = dataclasses.replace(cfg, ablation=ablation)
            cfg_probe.validate()
    cfg.validate()
    dataset, validation = _load_or_generate(cfg, args.data)
    root = _output_root(cfg, args.out)
    results = []
    teacher_cache: dict = {}
    for pipeline, ablation in parsed:
        for seed in seeds:
            result, wall = _execute(
                cfg, dataset, validation, pipeline, ablation, seed, teacher_cache
            )
            run_dir = root / f"{run_label(result.pipeline, result.ablation)}_seed{seed}"
            write_run(run_dir, result, _to_plain(cfg), dataset, wall)
            results.append(result)
            print(
                f"{run_label(result.pipeline, result.ablation)} seed {seed}: "
                f"final val mIoU {result.stages[-1].val.miou:.4f} ({wall:.1f}s)"
            )
    root.mkdir(parents=True, exist_ok=True)
    (root / "stage_curves.csv").write_text(stage_curves_csv(results))
    (root / "summary.csv").write_text(summary_csv(results))
    print(summary_csv(results), end="")
    print(f"wrote {root}/stage_curves.csv and {root}/summary.csv")
    return EXIT_OK


def _cmd_inspect_scores(args) -> int:
    run_dir = Path(args.run_dir)
    scores_path = run_dir / "scores.csv"
    report_path = run_dir / "report.csv"
    if not scores_path.exists():
        raise FileNotFoundError(f"{scores_path} (not a selective two-stage run?)")
    rows = read_score_table(scores_path)
    print("id,score,bucket")
    for sid, score, bucket in rows:
        print(f"{sid},{score:.10g},{bucket}")
    if report_path.exists():
        for line in report_path.read_text().splitlines():
            if line.startswith("selection,"):
                _, key, value = line.split(",", 2)
                print(f"# {key} = {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selfseg",
        description="Self-training pipelines for semantic segmentation at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="render the synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="dataset directory (default: <output root>/dataset)")
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("run", help="execute one (pipeline, seed)")
    p.add_argument("--config", required=True)
    p.add_argument("--pipeline", choices=PIPELINES)
    p.add_argument("--ablation")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", help="load dataset from directory instead of generating")
    p.add_argument("--out", help="output root override")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("benchmark", help="pipelines x seeds with aggregate tables")
    p.add_argument("--config", required=True)
    p.add_argument("--pipelines", help="comma list: suponly,st,stpp,ablation:<mode>")
    p.add_argument("--seeds", help="comma list of integer seeds")
    p.add_argument("--data", help="load dataset from directory instead of generating")
    p.add_argument("--out", help="output root override")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("inspect-scores", help="stability table of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_inspect_scores)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error [config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error [missing file]: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except NumericError as exc:
        print(f"error [numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RasterError, CheckpointError, json.JSONDecodeError) as exc:
        print(f"error [format]: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
