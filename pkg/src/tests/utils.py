from dataclasses import replace
from pathlib import Path

import numpy as np

from lcpformer.geometry.cloud import PointCloud
from lcpformer.network.config import TASK_CLASSIFICATION, TASK_SEGMENTATION, BlockConfig, ModelConfig
from lcpformer.tests.tester import LcpBaseTester


class LcpTester(LcpBaseTester):
    @property
    def templates_root(self) -> Path:
        return Path(__file__).parent / "templates"


def random_cloud(n: int, seed: int = 0, features: int = 0, labels: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    return PointCloud(
        rng.uniform(-1.0, 1.0, size=(n, 3)),
        rng.normal(size=(n, features)) if features else None,
        rng.integers(labels, size=n) if labels else None,
    )


def tiny_config(task: str = TASK_CLASSIFICATION, points: int = 32, classes: int = 2, **kwargs) -> ModelConfig:
    """
    Two blocks (widths 8 -> 8 -> 16, two heads): small enough for exhaustive checks and overfit runs.
    """
    first = points if task == TASK_SEGMENTATION else points // 2
    config = ModelConfig(
        task=task,
        input_points=points,
        embed_width=8,
        blocks=[BlockConfig(first, 4, 8, 8), BlockConfig(first // 2, 4, 8, 16)],
        classes=classes,
        upsample_widths=[8, 8] if task == TASK_SEGMENTATION else [],
        heads=2,
    )
    return replace(config, **kwargs).validate()
