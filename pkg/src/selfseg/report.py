"""Run-directory persistence and CSV report emission.

Layout per run (one directory per (pipeline, seed)):

    config.json               hashed projection of the experiment config
    report.csv                run header + concatenated stage fragments
    manifest.csv              path,kind,stage,config_hash,seed for every file
    scores.csv                stability table (two-stage selective runs only)
    meta.json                 wall clock + timestamps (excluded from diffs)
    stages/<name>/report.csv  the stage fragment on its own
    stages/<name>/model.ckpt  parameters at the end of the stage
    stages/teacher/checkpoint_<j>_of_3.ckpt
    stages/<name>/pseudo_masks/<id>.msk

Everything except meta.json is a pure function of (config, seed), so
re-running into a fresh directory reproduces every byte.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .data import Dataset
from .model import save_checkpoint
from .pipeline import RunResult, StageReport
from .raster import save_mask_bytes
from .select import write_score_table


def _fmt(x: float | None) -> str:
    return "" if x is None else format(float(x), ".10g")


def _ids(ids: tuple[int, ...]) -> str:
    return " ".join(str(i) for i in ids)


def stage_fragment(report: StageReport) -> str:
    s = report.spec
    name = s.name
    lines = [
        f"{name},val_miou,{_fmt(report.val.miou)}",
    ]
    for cls, iou in report.val.per_class:
        lines.append(f"{name},iou_class_{cls},{'absent' if iou is None else _fmt(iou)}")
    lines.append(f"{name},n_labeled,{len(set(s.labeled_ids))}")
    lines.append(f"{name},n_labeled_multiset,{len(s.labeled_ids)}")
    lines.append(f"{name},n_pseudo,{len(s.pseudo_ids)}")
    lines.append(f"{name},sda_labeled,{'on' if s.strong_labeled is not None else 'off'}")
    lines.append(f"{name},sda_unlabeled,{'on' if s.strong_unlabeled is not None else 'off'}")
    lines.append(f"{name},fresh_init,{'yes' if s.fresh_init else 'no'}")
    lines.append(f"{name},labeled_ids,{_ids(s.labeled_ids)}")
    lines.append(f"{name},pseudo_ids,{_ids(s.pseudo_ids)}")
    return "\n".join(lines) + "\n"


def render_report(result: RunResult) -> str:
    """Full report body: deterministic given (config, seed)."""
    lines = [
        "section,key,value",
        f"run,pipeline,{result.pipeline}",
        f"run,ablation,{result.ablation or ''}",
        f"run,seed,{result.seed}",
        f"run,config_hash,{result.config_hash}",
        f"run,num_stages,{len(result.stages)}",
    ]
    body = "\n".join(lines) + "\n"
    for rep in result.stages:
        body += stage_fragment(rep)
    sel = result.selection
    if sel is not None:
        body += "\n".join(
            [
                f"selection,n_reliable,{len(sel.plan.reliable)}",
                f"selection,n_unreliable,{len(sel.plan.unreliable)}",
                f"selection,reliable_miou,{_fmt(sel.reliable_miou)}",
                f"selection,unreliable_miou,{_fmt(sel.unreliable_miou)}",
                f"selection,unreliable_miou_relabeled,{_fmt(sel.unreliable_miou_relabeled)}",
                f"selection,boosted,{_fmt(sel.boosted)}",
                f"selection,spearman,{_fmt(sel.spearman)}",
            ]
        ) + "\n"
    return body


def write_run(
    run_dir: Path,
    result: RunResult,
    config_doc: dict,
    dataset: Dataset,
    wall_clock: float,
) -> None:
    """Persist a finished run; see module docstring for the layout."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest: list[tuple[str, str, str]] = []  # (path, kind, stage)

    doc = dict(config_doc)
    doc.pop("output_dir", None)
    (run_dir / "config.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n"
    )
    manifest.append(("config.json", "config", ""))

    (run_dir / "report.csv").write_text(render_report(result))
    manifest.append(("report.csv", "report", ""))

    for rep in result.stages:
        name = rep.spec.name
        stage_dir = run_dir / "stages" / name
        stage_dir.mkdir(parents=True, exist_ok=True)
        (stage_dir / "report.csv").write_text(stage_fragment(rep))
        manifest.append((f"stages/{name}/report.csv", "report", name))
        params = result.stage_params.get(name)
        if params is not None:
            (stage_dir / "model.ckpt").write_bytes(
                save_checkpoint(params, "3/3", result.config_hash)
            )
            manifest.append((f"stages/{name}/model.ckpt", "model", name))

    for j, ckpt in enumerate(result.teacher_checkpoints, start=1):
        path = run_dir / "stages" / "teacher" / f"checkpoint_{j}_of_3.ckpt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(save_checkpoint(ckpt.params, ckpt.tag, ckpt.config_hash))
        manifest.append((f"stages/teacher/checkpoint_{j}_of_3.ckpt", "checkpoint", "teacher"))

    for name in sorted(result.pseudo_masks):
        mask_dir = run_dir / "stages" / name / "pseudo_masks"
        mask_dir.mkdir(parents=True, exist_ok=True)
        for sid in sorted(result.pseudo_masks[name]):
            (mask_dir / f"{sid}.msk").write_bytes(
                save_mask_bytes(result.pseudo_masks[name][sid], dataset.num_classes)
            )
            manifest.append((f"stages/{name}/pseudo_masks/{sid}.msk", "pseudo_mask", name))

    if result.selection is not None and result.selection.records:
        write_score_table(run_dir / "scores.csv", result.selection.records, result.selection.plan)
        manifest.append(("scores.csv", "scores", ""))

    (run_dir / "meta.json").write_text(
        json.dumps(
            {
                "wall_clock_seconds": round(wall_clock, 3),
                "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            },
            indent=2,
        )
        + "\n"
    )
    manifest.append(("meta.json", "meta", ""))

    rows = ["path,kind,stage,config_hash,seed"]
    for path, kind, stage in sorted(manifest):
        rows.append(f"{path},{kind},{stage},{result.config_hash},{result.seed}")
    (run_dir / "manifest.csv").write_text("\n".join(rows) + "\n")


def run_label(pipeline: str, ablation: str | None) -> str:
    """Directory-safe label for a (pipeline, ablation) pair."""
    if ablation is None:
        return pipeline
    return ablation.replace(":", "-").replace("+", "")


def stage_curves_csv(runs: list[RunResult]) -> str:
    lines = ["pipeline,seed,stage,val_miou"]
    for r in runs:
        label = run_label(r.pipeline, r.ablation)
        for rep in r.stages:
            lines.append(f"{label},{r.seed},{rep.spec.name},{_fmt(rep.val.miou)}")
    return "\n".join(lines) + "\n"


def summary_csv(runs: list[RunResult]) -> str:
    """Per (pipeline, stage): mean/std/min/max of validation mIoU across seeds."""
    groups: dict[tuple[str, str], list[float]] = {}
    order: list[tuple[str, str]] = []
    for r in runs:
        label = run_label(r.pipeline, r.ablation)
        for rep in r.stages:
            key = (label, rep.spec.name)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(rep.val.miou)
    lines = ["pipeline,stage,n_seeds,mean_miou,std_miou,min_miou,max_miou"]
    for key in order:
        vals = np.asarray(groups[key], dtype=np.float64)
        lines.append(
            f"{key[0]},{key[1]},{vals.size},{_fmt(vals.mean())},"
            f"{_fmt(vals.std())},{_fmt(vals.min())},{_fmt(vals.max())}"
        )
    return "\n".join(lines) + "\n"
