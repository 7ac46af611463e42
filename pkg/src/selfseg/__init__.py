"""Self-training for semantic segmentation at desk scale: plain pseudo-label
re-training with strong data augmentation, plus selective two-stage
re-training driven by checkpoint-stability scores."""

from .augment import (
    StrongAugConfig,
    WeakAugConfig,
    strong_augment,
    weak_augment,
)
from .config import ExperimentConfig, benchmark_preset, load_config
from .data import Dataset, Sample, load_dataset, save_dataset, validate_dataset
from .datagen import GenConfig, generate
from .errors import ConfigError
from .metrics import confusion_matrix, mean_iou, mean_of_ious, per_class_iou
from .model import (
    Checkpoint,
    ModelParams,
    TrainConfig,
    cross_entropy_ignore,
    forward,
    init_params,
    load_checkpoint,
    pixel_features,
    poly_lr,
    save_checkpoint,
    train_step,
)
from .pipeline import (
    PipelineConfig,
    RunResult,
    StageSpec,
    evaluate,
    oversample_labeled,
    run_ablation,
    run_pipeline,
    run_st,
    run_stpp,
    run_suponly,
)
from .pseudolabel import SINGLE_SCALE, TtaConfig, predict_proba_tta, pseudo_label
from .raster import IGNORE
from .rng import RngStream
from .select import (
    SplitPlan,
    StabilityRecord,
    pixel_confidence_filter,
    random_split,
    rank_and_split,
    score_unlabeled,
    stability_score,
)

__all__ = [
    "IGNORE",
    "SINGLE_SCALE",
    "Checkpoint",
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "GenConfig",
    "ModelParams",
    "PipelineConfig",
    "RngStream",
    "RunResult",
    "Sample",
    "SplitPlan",
    "StabilityRecord",
    "StageSpec",
    "StrongAugConfig",
    "TrainConfig",
    "TtaConfig",
    "WeakAugConfig",
    "benchmark_preset",
    "confusion_matrix",
    "cross_entropy_ignore",
    "evaluate",
    "forward",
    "generate",
    "init_params",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "mean_iou",
    "mean_of_ious",
    "oversample_labeled",
    "per_class_iou",
    "pixel_confidence_filter",
    "pixel_features",
    "poly_lr",
    "predict_proba_tta",
    "pseudo_label",
    "random_split",
    "rank_and_split",
    "run_ablation",
    "run_pipeline",
    "run_st",
    "run_stpp",
    "run_suponly",
    "save_checkpoint",
    "save_dataset",
    "score_unlabeled",
    "stability_score",
    "strong_augment",
    "train_step",
    "validate_dataset",
    "weak_augment",
]
