"""Pipeline orchestration: supervised baseline, one-pass re-training with
strong augmentation, selective two-stage re-training, and the ablation
variants used to probe them.

A pipeline run is a sequence of stages.  Every stage is described by a
StageSpec (which samples it trains on, how often labeled ids repeat, and
which augmentation policy applies to each subset) so that two runs can be
compared by composition, not just by outcome.  All randomness flows
through RngStream keyed by (seed, stage, sample, epoch), which makes
whole runs bit-reproducible.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .augment import StrongAugConfig, WeakAugConfig, strong_augment, weak_augment
from .data import Dataset, Sample, with_pseudo_masks
from .errors import ConfigError
from .metrics import _joint_counts, iou_from_joint, mean_iou, mean_of_ious
from .model import (
    Checkpoint,
    ModelParams,
    SgdState,
    TrainConfig,
    forward,
    forward_features,
    init_params,
    pixel_features_batch,
    train_step,
)
from .pseudolabel import TtaConfig, predict_proba_tta_batch, pseudo_label_many
from .raster import IGNORE
from .rng import RngStream
from .select import (
    SplitPlan,
    StabilityRecord,
    pixel_confidence_filter,
    random_split,
    rank_and_split,
    score_unlabeled,
)

ABLATION_MODES = (
    "no-sda",
    "sda-labeled-too",
    "single-aug:colorjitter",
    "single-aug:grayscale",
    "single-aug:blur",
    "single-aug:cutout",
    "cutout-on-labeled",
    "random-two-stage",
    "pixel-two-stage",
)  # plus "iterative:+k" for k >= 1

PIXEL_CONFIDENCE_THRESHOLD = 0.5


class StageError(RuntimeError):
    """A stage was asked to train on samples without pseudo masks."""


@dataclass(frozen=True)
class PipelineConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    weak: WeakAugConfig = field(default_factory=WeakAugConfig)
    strong: StrongAugConfig = field(default_factory=StrongAugConfig)
    tta: TtaConfig = field(default_factory=TtaConfig)
    reliable_fraction: float = 0.5
    config_hash: str = ""


@dataclass(frozen=True)
class StageSpec:
    name: str
    labeled_ids: tuple[int, ...]  # multiset after oversampling, ascending
    pseudo_ids: tuple[int, ...]  # ascending
    strong_labeled: StrongAugConfig | None = None
    strong_unlabeled: StrongAugConfig | None = None
    fresh_init: bool = True


@dataclass
class EvalResult:
    miou: float
    per_class: list[tuple[int, float | None]]


@dataclass
class StageReport:
    spec: StageSpec
    val: EvalResult


@dataclass
class SelectionReport:
    records: list[StabilityRecord]
    plan: SplitPlan
    reliable_miou: float
    unreliable_miou: float
    unreliable_miou_relabeled: float | None
    boosted: float | None
    spearman: float | None
    per_image_quality: dict[int, float]


@dataclass
class RunResult:
    pipeline: str
    ablation: str | None
    seed: int
    config_hash: str
    stages: list[StageReport]
    teacher_checkpoints: list[Checkpoint]
    pseudo_masks: dict[str, dict[int, np.ndarray]]  # stage name -> id -> mask
    selection: SelectionReport | None
    final_params: ModelParams
    stage_params: dict[str, ModelParams] = field(default_factory=dict)

    def best_stage(self) -> str:
        """Stage name with the highest validation mIoU; ties go to the
        later stage so a re-trained student outranks its teacher."""
        best = self.stages[0].spec.name
        best_miou = self.stages[0].val.miou
        for rep in self.stages[1:]:
            if rep.val.miou >= best_miou:
                best = rep.spec.name
                best_miou = rep.val.miou
        return best


def oversample_labeled(labeled_ids: list[int], target_count: int) -> tuple[int, ...]:
    """Repeat every labeled id ceil(target/M) times (never down-samples)."""
    m = len(labeled_ids)
    if m == 0:
        raise ValueError("labeled set is empty")
    reps = max(1, math.ceil(target_count / m))
    out = []
    for sid in sorted(labeled_ids):
        out.extend([sid] * reps)
    return tuple(out)


def derive_init_seed(stream: RngStream, stage_name: str) -> int:
    return int(stream.derive(f"init/{stage_name}").integers(0, 2**62))


def run_training_stage(
    params0: ModelParams,
    spec: StageSpec,
    dataset: Dataset,
    cfg: PipelineConfig,
    stream: RngStream,
    collect_checkpoints: bool = False,
) -> tuple[ModelParams, list[Checkpoint]]:
    """SGD over the stage roster; optionally snapshots at 1/3, 2/3, 3/3.

    The roster is the oversampled labeled multiset plus the pseudo-labeled
    ids, shuffled uniformly every epoch.  Weak augmentation applies to
    every sample; strong augmentation additionally applies where the
    stage's policy says so.
    """
    tc = cfg.train
    labeled_by_id = {s.id: s for s in dataset.labeled}
    pseudo_by_id = dataset.unlabeled_by_id()
    entries: list[tuple[Sample, bool, int]] = []  # (sample, is_labeled, replica)
    seen: dict[int, int] = {}
    for sid in spec.labeled_ids:
        replica = seen.get(sid, 0)
        seen[sid] = replica + 1
        entries.append((labeled_by_id[sid], True, replica))
    for sid in spec.pseudo_ids:
        sample = pseudo_by_id[sid]
        if sample.pseudo_mask is None:
            raise StageError(f"stage {spec.name}: sample {sid} has no pseudo mask")
        entries.append((sample, False, 0))
    if not entries:
        raise ValueError(f"stage {spec.name} has an empty roster")

    epochs = tc.epochs
    if spec.pseudo_ids and tc.retrain_epochs is not None:
        epochs = tc.retrain_epochs
    steps_per_epoch = math.ceil(len(entries) / tc.batch_size)
    total_iter = epochs * steps_per_epoch
    targets = [(max(1, round(total_iter * j / 3)), tag) for j, tag in ((1, "1/3"), (2, "2/3"), (3, "3/3"))]

    params = params0.copy()
    state = SgdState.zeros(params)
    checkpoints: list[Checkpoint] = []
    lam = tc.unlabeled_loss_weight
    iteration = 0
    for epoch in range(epochs):
        order = stream.derive(f"order/{spec.name}", epoch).permutation(len(entries))
        for start in range(0, len(entries), tc.batch_size):
            chunk = order[start : start + tc.batch_size]
            batch = []
            weights = []
            for idx in chunk:
                sample, is_labeled, replica = entries[idx]
                gen = stream.derive(f"aug/{spec.name}", sample.id, epoch, replica)
                base_mask = sample.mask if is_labeled else sample.pseudo_mask
                img, msk, _ = weak_augment(sample.image, base_mask, cfg.weak, gen)
                strong_cfg = spec.strong_labeled if is_labeled else spec.strong_unlabeled
                if strong_cfg is not None:
                    img, msk = strong_augment(img, msk, strong_cfg, gen)
                batch.append((img, msk))
                weights.append(1.0 if is_labeled else lam)
            sample_weights = weights if any(w != 1.0 for w in weights) else None
            params, _loss = train_step(
                params, batch, tc, iteration, total_iter, state, sample_weights
            )
            iteration += 1
            if collect_checkpoints:
                for step_target, tag in targets:
                    if step_target == iteration:
                        checkpoints.append(
                            Checkpoint(params.copy(), tag, cfg.config_hash)
                        )
    return params, checkpoints


TeacherCache = dict  # (config_hash, seed) -> (params, checkpoints, spec)


def train_supervised(
    dataset: Dataset,
    cfg: PipelineConfig,
    stream: RngStream,
    cache: TeacherCache | None = None,
) -> tuple[ModelParams, list[Checkpoint], StageSpec]:
    """Weak-augmentation-only training on the labeled set, with snapshots.

    The teacher depends only on (config, seed), never on which pipeline
    asked for it, so an optional cache lets a benchmark share one teacher
    across pipelines without changing any numbers.
    """
    if not dataset.labeled:
        raise ValueError("no labeled samples")
    key = (cfg.config_hash, stream.seed)
    if cache is not None and key in cache:
        params, checkpoints, spec = cache[key]
        return (
            params.copy(),
            [Checkpoint(c.params.copy(), c.tag, c.config_hash) for c in checkpoints],
            spec,
        )
    spec = StageSpec(
        name="teacher",
        labeled_ids=tuple(sorted(s.id for s in dataset.labeled)),
        pseudo_ids=(),
    )
    params0 = init_params(dataset.num_classes, derive_init_seed(stream, spec.name))
    params, checkpoints = run_training_stage(
        params0, spec, dataset, cfg, stream, collect_checkpoints=True
    )
    if cache is not None:
        cache[key] = (params, checkpoints, spec)
    return params, checkpoints, spec


def teacher_pseudo_masks(
    teacher: ModelParams,
    dataset: Dataset,
    cfg: PipelineConfig,
    seed: int,
    cache: TeacherCache | None = None,
) -> dict[int, np.ndarray]:
    """Teacher TTA labels for every unlabeled image, shareable like the teacher.

    The masks are a pure function of (config, seed), so pipelines running on
    the same cache reuse one labeling pass.  Mask arrays are treated as
    read-only everywhere downstream.
    """
    key = (cfg.config_hash, seed, "teacher-masks")
    if cache is not None and key in cache:
        return dict(cache[key])
    masks = pseudo_label_many(
        teacher, {s.id: s.image for s in dataset.unlabeled}, cfg.tta
    )
    if cache is not None:
        cache[key] = dict(masks)
    return masks


def evaluate(params: ModelParams, validation: list[Sample], num_classes: int) -> EvalResult:
    """Single-scale inference, one confusion matrix over the whole set."""
    if not validation:
        raise ValueError("validation set is empty")
    joint = np.zeros((num_classes, num_classes + 1), dtype=np.int64)
    shapes = {s.image.shape for s in validation}
    if len(shapes) == 1:
        for start in range(0, len(validation), 32):
            block = validation[start : start + 32]
            feats = pixel_features_batch(np.stack([s.image for s in block]))
            preds = np.argmax(forward_features(params, feats), axis=-1).astype(np.uint8)
            for pred, sample in zip(preds, block):
                joint += _joint_counts(pred, sample.mask, num_classes)
    else:
        for sample in validation:
            pred = np.argmax(forward(params, sample.image), axis=-1).astype(np.uint8)
            joint += _joint_counts(pred, sample.mask, num_classes)
    ious = iou_from_joint(joint)
    return EvalResult(miou=mean_of_ious(ious), per_class=ious)


def _bucket_miou(
    masks: dict[int, np.ndarray], dataset: Dataset, ids: tuple[int, ...]
) -> float:
    by_id = dataset.unlabeled_by_id()
    joint = np.zeros((dataset.num_classes, dataset.num_classes + 1), dtype=np.int64)
    for sid in ids:
        joint += _joint_counts(masks[sid], by_id[sid].mask, dataset.num_classes)
    return mean_of_ious(iou_from_joint(joint))


def _per_image_quality(masks: dict[int, np.ndarray], dataset: Dataset) -> dict[int, float]:
    by_id = dataset.unlabeled_by_id()
    return {
        sid: mean_iou(mask, by_id[sid].mask, dataset.num_classes)
        for sid, mask in masks.items()
    }


def _selection_report(
    records: list[StabilityRecord],
    plan: SplitPlan,
    teacher_masks: dict[int, np.ndarray],
    dataset: Dataset,
) -> SelectionReport:
    quality = _per_image_quality(teacher_masks, dataset)
    spearman = None
    if records:
        scores = [r.score for r in records]
        quals = [quality[r.sample_id] for r in records]
        with warnings.catch_warnings():
            # constant scores (e.g. every image perfectly stable) are a
            # legitimate degenerate case reported as spearman = None
            warnings.simplefilter("ignore", stats.ConstantInputWarning)
            rho = stats.spearmanr(scores, quals).statistic
        spearman = float(rho) if np.isfinite(rho) else None
    return SelectionReport(
        records=records,
        plan=plan,
        reliable_miou=_bucket_miou(teacher_masks, dataset, plan.reliable),
        unreliable_miou=_bucket_miou(teacher_masks, dataset, plan.unreliable),
        unreliable_miou_relabeled=None,
        boosted=None,
        spearman=spearman,
        per_image_quality=quality,
    )


def run_suponly(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    stream = RngStream(seed)
    params, checkpoints, spec = train_supervised(dataset, cfg, stream, teacher_cache)
    stages = [StageReport(spec, evaluate(params, validation, dataset.num_classes))]
    return RunResult(
        pipeline="suponly",
        ablation=None,
        seed=seed,
        config_hash=cfg.config_hash,
        stages=stages,
        teacher_checkpoints=checkpoints,
        pseudo_masks={},
        selection=None,
        final_params=params,
        stage_params={"teacher": params},
    )


def run_st(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    strong_unlabeled: StrongAugConfig | None = "default",  # type: ignore[assignment]
    strong_labeled: StrongAugConfig | None = None,
    ablation: str | None = None,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    """Teacher -> pseudo-label everything -> one re-training pass."""
    if strong_unlabeled == "default":
        strong_unlabeled = cfg.strong
    stream = RngStream(seed)
    teacher, checkpoints, teacher_spec = train_supervised(dataset, cfg, stream, teacher_cache)
    stages = [StageReport(teacher_spec, evaluate(teacher, validation, dataset.num_classes))]
    result = RunResult(
        pipeline="st",
        ablation=ablation,
        seed=seed,
        config_hash=cfg.config_hash,
        stages=stages,
        teacher_checkpoints=checkpoints,
        pseudo_masks={},
        selection=None,
        final_params=teacher,
        stage_params={"teacher": teacher},
    )
    unlabeled_ids = dataset.unlabeled_ids()
    if not unlabeled_ids:
        return result
    masks = teacher_pseudo_masks(teacher, dataset, cfg, seed, teacher_cache)
    labeled_ds = with_pseudo_masks(dataset, masks)
    spec = StageSpec(
        name="retrain1",
        labeled_ids=oversample_labeled([s.id for s in dataset.labeled], len(unlabeled_ids)),
        pseudo_ids=tuple(sorted(unlabeled_ids)),
        strong_labeled=strong_labeled,
        strong_unlabeled=strong_unlabeled,
        fresh_init=True,
    )
    student0 = init_params(dataset.num_classes, derive_init_seed(stream, spec.name))
    student, _ = run_training_stage(student0, spec, labeled_ds, cfg, stream)
    result.stages.append(StageReport(spec, evaluate(student, validation, dataset.num_classes)))
    result.pseudo_masks["retrain1"] = masks
    result.final_params = student
    result.stage_params["retrain1"] = student
    return result


def _two_stage(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    plan_from: str,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    """Shared machinery of selective and random two-stage re-training."""
    stream = RngStream(seed)
    teacher, checkpoints, teacher_spec = train_supervised(dataset, cfg, stream, teacher_cache)
    stages = [StageReport(teacher_spec, evaluate(teacher, validation, dataset.num_classes))]
    unlabeled_ids = dataset.unlabeled_ids()
    if not unlabeled_ids:
        return RunResult(
            pipeline="stpp" if plan_from == "score" else "st",
            ablation="random-two-stage" if plan_from == "random" else None,
            seed=seed,
            config_hash=cfg.config_hash,
            stages=stages,
            teacher_checkpoints=checkpoints,
            pseudo_masks={},
            selection=None,
            final_params=teacher,
            stage_params={"teacher": teacher},
        )

    if plan_from == "score":
        records = score_unlabeled(checkpoints, dataset)
        plan = rank_and_split(records, cfg.reliable_fraction)
    else:
        records = []
        plan = random_split(
            unlabeled_ids, cfg.reliable_fraction, stream.derive("random-split")
        )

    # Teacher labels everything once: reliable ids feed phase 1, and the
    # full map backs the bucket-quality report.
    teacher_masks = teacher_pseudo_masks(teacher, dataset, cfg, seed, teacher_cache)
    selection = _selection_report(records, plan, teacher_masks, dataset)

    ds_phase1 = with_pseudo_masks(dataset, {sid: teacher_masks[sid] for sid in plan.reliable})
    spec1 = StageSpec(
        name="retrain1",
        labeled_ids=oversample_labeled([s.id for s in dataset.labeled], len(plan.reliable)),
        pseudo_ids=tuple(sorted(plan.reliable)),
        strong_unlabeled=cfg.strong,
        fresh_init=True,
    )
    student0 = init_params(dataset.num_classes, derive_init_seed(stream, spec1.name))
    student1, _ = run_training_stage(student0, spec1, ds_phase1, cfg, stream)
    stages.append(StageReport(spec1, evaluate(student1, validation, dataset.num_classes)))

    by_id = dataset.unlabeled_by_id()
    relabeled = pseudo_label_many(
        student1, {sid: by_id[sid].image for sid in plan.unreliable}, cfg.tta
    )
    if relabeled:
        selection.unreliable_miou_relabeled = _bucket_miou(relabeled, dataset, plan.unreliable)
        selection.boosted = selection.unreliable_miou_relabeled - selection.unreliable_miou

    phase2_masks = dict(teacher_masks)
    phase2_masks.update(relabeled)
    ds_phase2 = with_pseudo_masks(dataset, phase2_masks)
    spec2 = StageSpec(
        name="retrain2",
        labeled_ids=oversample_labeled([s.id for s in dataset.labeled], len(unlabeled_ids)),
        pseudo_ids=tuple(sorted(unlabeled_ids)),
        strong_unlabeled=cfg.strong,
        fresh_init=True,
    )
    student0b = init_params(dataset.num_classes, derive_init_seed(stream, spec2.name))
    student2, _ = run_training_stage(student0b, spec2, ds_phase2, cfg, stream)
    stages.append(StageReport(spec2, evaluate(student2, validation, dataset.num_classes)))

    return RunResult(
        pipeline="stpp" if plan_from == "score" else "st",
        ablation="random-two-stage" if plan_from == "random" else None,
        seed=seed,
        config_hash=cfg.config_hash,
        stages=stages,
        teacher_checkpoints=checkpoints,
        pseudo_masks={
            "retrain1": {sid: teacher_masks[sid] for sid in plan.reliable},
            "retrain2": phase2_masks,
        },
        selection=selection,
        final_params=student2,
        stage_params={"teacher": teacher, "retrain1": student1, "retrain2": student2},
    )


def run_stpp(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    """Stability-ranked two-stage re-training with a fresh phase-2 student."""
    return _two_stage(dataset, validation, cfg, seed, plan_from="score", teacher_cache=teacher_cache)


def _run_pixel_two_stage(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    """Confidence-threshold baseline: filter pixels, then fill them in."""
    stream = RngStream(seed)
    teacher, checkpoints, teacher_spec = train_supervised(dataset, cfg, stream, teacher_cache)
    stages = [StageReport(teacher_spec, evaluate(teacher, validation, dataset.num_classes))]
    unlabeled_ids = sorted(dataset.unlabeled_ids())
    by_id = dataset.unlabeled_by_id()

    teacher_probs = predict_proba_tta_batch(
        teacher, np.stack([by_id[sid].image for sid in unlabeled_ids]), cfg.tta
    )
    phase1_masks = {
        sid: pixel_confidence_filter(teacher_probs[k], PIXEL_CONFIDENCE_THRESHOLD)
        for k, sid in enumerate(unlabeled_ids)
    }
    ds1 = with_pseudo_masks(dataset, phase1_masks)
    spec1 = StageSpec(
        name="retrain1",
        labeled_ids=oversample_labeled([s.id for s in dataset.labeled], len(unlabeled_ids)),
        pseudo_ids=tuple(unlabeled_ids),
        strong_unlabeled=cfg.strong,
        fresh_init=True,
    )
    student0 = init_params(dataset.num_classes, derive_init_seed(stream, spec1.name))
    student1, _ = run_training_stage(student0, spec1, ds1, cfg, stream)
    stages.append(StageReport(spec1, evaluate(student1, validation, dataset.num_classes)))

    student_labels = pseudo_label_many(
        student1, {sid: by_id[sid].image for sid in unlabeled_ids}, cfg.tta
    )
    phase2_masks = {}
    for sid in unlabeled_ids:
        filled = phase1_masks[sid].copy()
        hole = filled == IGNORE
        filled[hole] = student_labels[sid][hole]
        phase2_masks[sid] = filled
    ds2 = with_pseudo_masks(dataset, phase2_masks)
    spec2 = StageSpec(
        name="retrain2",
        labeled_ids=oversample_labeled([s.id for s in dataset.labeled], len(unlabeled_ids)),
        pseudo_ids=tuple(unlabeled_ids),
        strong_unlabeled=cfg.strong,
        fresh_init=True,
    )
    student0b = init_params(dataset.num_classes, derive_init_seed(stream, spec2.name))
    student2, _ = run_training_stage(student0b, spec2, ds2, cfg, stream)
    stages.append(StageReport(spec2, evaluate(student2, validation, dataset.num_classes)))

    return RunResult(
        pipeline="stpp",
        ablation="pixel-two-stage",
        seed=seed,
        config_hash=cfg.config_hash,
        stages=stages,
        teacher_checkpoints=checkpoints,
        pseudo_masks={"retrain1": phase1_masks, "retrain2": phase2_masks},
        selection=None,
        final_params=student2,
        stage_params={"teacher": teacher, "retrain1": student1, "retrain2": student2},
    )


def _run_iterative(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    extra_rounds: int,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    """Extra rounds that re-label all unlabeled images with the best model
    so far and re-train a fresh student (teacher/student role swapping)."""
    result = run_stpp(dataset, validation, cfg, seed, teacher_cache)
    result.ablation = f"iterative:+{extra_rounds}"
    stream = RngStream(seed)
    unlabeled_ids = sorted(dataset.unlabeled_ids())
    if not unlabeled_ids:
        return result
    by_id = dataset.unlabeled_by_id()
    for round_idx in range(extra_rounds):
        name = f"retrain{3 + round_idx}"
        best_params = result.stage_params[result.best_stage()]
        masks = pseudo_label_many(
            best_params, {sid: by_id[sid].image for sid in unlabeled_ids}, cfg.tta
        )
        ds = with_pseudo_masks(dataset, masks)
        spec = StageSpec(
            name=name,
            labeled_ids=oversample_labeled([s.id for s in dataset.labeled], len(unlabeled_ids)),
            pseudo_ids=tuple(unlabeled_ids),
            strong_unlabeled=cfg.strong,
            fresh_init=True,
        )
        params0 = init_params(dataset.num_classes, derive_init_seed(stream, name))
        params, _ = run_training_stage(params0, spec, ds, cfg, stream)
        result.stages.append(StageReport(spec, evaluate(params, validation, dataset.num_classes)))
        result.pseudo_masks[name] = masks
        result.final_params = params
        result.stage_params[name] = params
    return result


def parse_ablation(mode: str) -> None:
    """Raises ConfigError for unknown ablation modes."""
    if mode in ABLATION_MODES:
        return
    if mode.startswith("iterative:+"):
        try:
            k = int(mode.removeprefix("iterative:+"))
        except ValueError:
            raise ConfigError(f"bad iterative round count in {mode!r}") from None
        if k >= 1:
            return
        raise ConfigError(f"iterative rounds must be >= 1, got {k}")
    raise ConfigError(f"unknown ablation mode {mode!r}")


def run_ablation(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    mode: str,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    parse_ablation(mode)
    if mode == "no-sda":
        result = run_st(
            dataset, validation, cfg, seed, strong_unlabeled=None, ablation=mode,
            teacher_cache=teacher_cache,
        )
    elif mode == "sda-labeled-too":
        result = run_st(
            dataset, validation, cfg, seed, strong_labeled=cfg.strong, ablation=mode,
            teacher_cache=teacher_cache,
        )
    elif mode.startswith("single-aug:"):
        op = mode.removeprefix("single-aug:")
        result = run_st(
            dataset, validation, cfg, seed, strong_unlabeled=cfg.strong.only(op),
            ablation=mode, teacher_cache=teacher_cache,
        )
    elif mode == "cutout-on-labeled":
        result = run_st(
            dataset,
            validation,
            cfg,
            seed,
            strong_labeled=cfg.strong.only("cutout"),
            ablation=mode,
            teacher_cache=teacher_cache,
        )
    elif mode == "random-two-stage":
        result = _two_stage(
            dataset, validation, cfg, seed, plan_from="random", teacher_cache=teacher_cache
        )
    elif mode == "pixel-two-stage":
        result = _run_pixel_two_stage(dataset, validation, cfg, seed, teacher_cache)
    else:
        k = int(mode.removeprefix("iterative:+"))
        result = _run_iterative(dataset, validation, cfg, seed, k, teacher_cache)
    return result


def run_pipeline(
    dataset: Dataset,
    validation: list[Sample],
    cfg: PipelineConfig,
    seed: int,
    pipeline: str,
    ablation: str | None = None,
    teacher_cache: TeacherCache | None = None,
) -> RunResult:
    if ablation is not None:
        return run_ablation(dataset, validation, cfg, seed, ablation, teacher_cache)
    if pipeline == "suponly":
        return run_suponly(dataset, validation, cfg, seed, teacher_cache)
    if pipeline == "st":
        return run_st(dataset, validation, cfg, seed, teacher_cache=teacher_cache)
    if pipeline == "stpp":
        return run_stpp(dataset, validation, cfg, seed, teacher_cache)
    raise ConfigError(f"unknown pipeline {pipeline!r}")
