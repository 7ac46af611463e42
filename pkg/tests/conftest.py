import time

import pytest
from hypothesis import settings

from selfseg.config import benchmark_preset
from selfseg.datagen import GenConfig, generate
from selfseg.model import TrainConfig
from selfseg.pipeline import PipelineConfig, run_pipeline
from selfseg.pseudolabel import TtaConfig
from selfseg.augment import WeakAugConfig

# Single-core CI boxes miss the default 200 ms deadline on image-sized
# examples; correctness is unaffected.
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


TINY_GEN = GenConfig(
    image_size=32,
    pool_size=24,
    val_size=6,
    labeled_fraction=1 / 8,
    noise_sigma=0.06,
    seed=5,
)

TINY_PIPE = PipelineConfig(
    train=TrainConfig(epochs=6, base_lr=1.0, retrain_epochs=4),
    weak=WeakAugConfig(crop_size=32),
    tta=TtaConfig(scales=(0.5, 1.0), use_flip=True),
)


@pytest.fixture(scope="session")
def tiny_world():
    """A 24-image pool that trains in about a second per stage."""
    dataset, validation = generate(TINY_GEN)
    return dataset, validation


@pytest.fixture(scope="session")
def bench():
    """The full acceptance benchmark: preset config, 5 seeds, four pipelines
    sharing one teacher per seed.  Session-scoped because it dominates the
    suite's runtime; every consumer treats the results as read-only."""
    cfg = benchmark_preset()
    cfg.validate()
    pcfg = cfg.pipeline_config()
    dataset, validation = generate(cfg.data)
    cache: dict = {}
    results = {}
    t0 = time.perf_counter()
    for pipeline, ablation in [
        ("suponly", None),
        ("st", None),
        ("stpp", None),
        ("st", "random-two-stage"),
    ]:
        for seed in cfg.seeds:
            key = (ablation or pipeline, seed)
            results[key] = run_pipeline(
                dataset, validation, pcfg, seed, pipeline, ablation, cache
            )
    wall = time.perf_counter() - t0
    return {
        "config": cfg,
        "pipeline_config": pcfg,
        "dataset": dataset,
        "validation": validation,
        "results": results,
        "wall_seconds": wall,
    }


ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def record_acceptance(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((criterion, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE_LINES:
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {criterion}: {verdict} — {detail}")
