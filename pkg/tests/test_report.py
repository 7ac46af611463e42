"""Report rendering and run-directory persistence."""

import csv
import json

import numpy as np
import pytest

from selfseg.model import init_params, load_checkpoint
from selfseg.pipeline import (
    EvalResult,
    RunResult,
    StageReport,
    StageSpec,
    run_st,
    run_stpp,
    run_suponly,
)
from selfseg.raster import load_mask_bytes
from selfseg.report import (
    render_report,
    run_label,
    stage_curves_csv,
    stage_fragment,
    summary_csv,
    write_run,
)
from selfseg.select import read_score_table

from conftest import TINY_PIPE


@pytest.fixture(scope="module")
def cache():
    return {}


@pytest.fixture(scope="module")
def stpp_result(tiny_world, cache):
    dataset, validation = tiny_world
    return run_stpp(dataset, validation, TINY_PIPE, 0, cache)


def toy_report():
    spec = StageSpec(
        name="retrain1",
        labeled_ids=(3, 3, 7, 7),
        pseudo_ids=(1, 2),
        strong_unlabeled=None,
        strong_labeled=None,
        fresh_init=True,
    )
    val = EvalResult(miou=0.625, per_class=[(0, 0.75), (1, 0.5), (2, None)])
    return StageReport(spec, val)


def test_stage_fragment_fields():
    text = stage_fragment(toy_report())
    rows = dict()
    for line in text.strip().splitlines():
        stage, key, value = line.split(",", 2)
        assert stage == "retrain1"
        rows[key] = value
    assert rows["val_miou"] == "0.625"
    assert rows["iou_class_0"] == "0.75"
    assert rows["iou_class_2"] == "absent"
    assert rows["n_labeled"] == "2"
    assert rows["n_labeled_multiset"] == "4"
    assert rows["n_pseudo"] == "2"
    assert rows["sda_labeled"] == "off"
    assert rows["sda_unlabeled"] == "off"
    assert rows["fresh_init"] == "yes"
    assert rows["labeled_ids"] == "3 3 7 7"
    assert rows["pseudo_ids"] == "1 2"


def test_render_report_header_and_sections(stpp_result):
    body = render_report(stpp_result)
    lines = body.strip().splitlines()
    assert lines[0] == "section,key,value"
    assert "run,pipeline,stpp" in lines
    assert "run,seed,0" in lines
    assert f"run,num_stages,{len(stpp_result.stages)}" in lines
    sections = {line.split(",")[0] for line in lines[1:]}
    assert {"run", "teacher", "retrain1", "retrain2", "selection"} <= sections
    n_rel = len(stpp_result.selection.plan.reliable)
    assert f"selection,n_reliable,{n_rel}" in lines


def test_render_report_is_deterministic(stpp_result):
    assert render_report(stpp_result) == render_report(stpp_result)


@pytest.mark.parametrize(
    "pipeline,ablation,expect",
    [
        ("st", None, "st"),
        ("stpp", None, "stpp"),
        ("st", "no-sda", "no-sda"),
        ("st", "single-aug:blur", "single-aug-blur"),
        ("stpp", "iterative:+2", "iterative-2"),
    ],
)
def test_run_label(pipeline, ablation, expect):
    assert run_label(pipeline, ablation) == expect


def test_write_run_inventory_matches_manifest(tmp_path, tiny_world, stpp_result):
    dataset, _ = tiny_world
    run_dir = tmp_path / "run"
    write_run(run_dir, stpp_result, {"output_dir": "x", "pipeline": "stpp"}, dataset, 1.25)

    with open(run_dir / "manifest.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    listed = {r["path"] for r in rows}
    on_disk = {
        str(p.relative_to(run_dir))
        for p in run_dir.rglob("*")
        if p.is_file() and p.name != "manifest.csv"
    }
    assert listed == on_disk
    for r in rows:
        assert r["config_hash"] == stpp_result.config_hash
        assert r["seed"] == "0"

    # config.json drops output_dir
    doc = json.loads((run_dir / "config.json").read_text())
    assert "output_dir" not in doc and doc["pipeline"] == "stpp"

    # stage models reload to the params the run reported
    ck = load_checkpoint((run_dir / "stages" / "retrain2" / "model.ckpt").read_bytes())
    assert np.array_equal(ck.params.weights, stpp_result.final_params.weights)
    assert [p.name for p in sorted((run_dir / "stages" / "teacher").glob("checkpoint_*"))] == [
        "checkpoint_1_of_3.ckpt",
        "checkpoint_2_of_3.ckpt",
        "checkpoint_3_of_3.ckpt",
    ]


def test_write_run_pseudo_masks_roundtrip(tmp_path, tiny_world, stpp_result):
    dataset, _ = tiny_world
    run_dir = tmp_path / "run"
    write_run(run_dir, stpp_result, {}, dataset, 0.0)
    for name, masks in stpp_result.pseudo_masks.items():
        for sid, mask in masks.items():
            blob = (run_dir / "stages" / name / "pseudo_masks" / f"{sid}.msk").read_bytes()
            loaded, _ = load_mask_bytes(blob)
            assert np.array_equal(loaded, mask)


def test_write_run_scores_table(tmp_path, tiny_world, stpp_result):
    dataset, _ = tiny_world
    run_dir = tmp_path / "run"
    write_run(run_dir, stpp_result, {}, dataset, 0.0)
    rows = read_score_table(run_dir / "scores.csv")
    sel = stpp_result.selection
    assert len(rows) == len(sel.records)
    assert {r[0] for r in rows} == {rec.sample_id for rec in sel.records}
    n_rel = sum(1 for r in rows if r[2] == "reliable")
    assert n_rel == len(sel.plan.reliable)


def test_write_run_twice_is_byte_identical_except_meta(tmp_path, tiny_world, stpp_result):
    dataset, _ = tiny_world
    a = tmp_path / "a"
    b = tmp_path / "b"
    write_run(a, stpp_result, {"seeds": [0]}, dataset, 1.0)
    write_run(b, stpp_result, {"seeds": [0]}, dataset, 99.0)
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        if rel.name == "meta.json":
            continue
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_suponly_run_has_no_scores_file(tmp_path, tiny_world, cache):
    dataset, validation = tiny_world
    result = run_suponly(dataset, validation, TINY_PIPE, 0, cache)
    run_dir = tmp_path / "run"
    write_run(run_dir, result, {}, dataset, 0.0)
    assert not (run_dir / "scores.csv").exists()
    assert (run_dir / "stages" / "teacher" / "model.ckpt").exists()


def test_stage_curves_csv(tiny_world, cache, stpp_result):
    dataset, validation = tiny_world
    st = run_st(dataset, validation, TINY_PIPE, 1, teacher_cache=cache)
    text = stage_curves_csv([stpp_result, st])
    lines = text.strip().splitlines()
    assert lines[0] == "pipeline,seed,stage,val_miou"
    assert len(lines) == 1 + len(stpp_result.stages) + len(st.stages)
    assert lines[1].startswith("stpp,0,teacher,")
    assert any(line.startswith("st,1,retrain1,") for line in lines)


def test_summary_csv_statistics():
    def fake(seed, miou):
        spec = StageSpec("teacher", (0,), ())
        return RunResult(
            pipeline="suponly",
            ablation=None,
            seed=seed,
            config_hash="h",
            stages=[StageReport(spec, EvalResult(miou, []))],
            teacher_checkpoints=[],
            pseudo_masks={},
            selection=None,
            final_params=init_params(2, 0),
        )

    text = summary_csv([fake(0, 0.4), fake(1, 0.6)])
    lines = text.strip().splitlines()
    assert lines[0] == "pipeline,stage,n_seeds,mean_miou,std_miou,min_miou,max_miou"
    fields = lines[1].split(",")
    assert fields[:3] == ["suponly", "teacher", "2"]
    assert float(fields[3]) == pytest.approx(0.5)
    assert float(fields[4]) == pytest.approx(0.1)
    assert float(fields[5]) == pytest.approx(0.4)
    assert float(fields[6]) == pytest.approx(0.6)
