from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from lcpformer.errors import LcpConfigError, LcpFormatError
from lcpformer.geometry.cloud import PointCloud

# Dataset tasks
TASK_SHAPES = "classification"
TASK_SCENES = "segmentation"

# Manifest name written beside generated clouds
MANIFEST_NAME = "manifest.txt"


@dataclass
class Sample:
    cloud: PointCloud
    # Cloud level label (classification); segmentation labels live in cloud.labels
    label: Optional[int] = None

    def targets(self) -> np.ndarray:
        return np.array([self.label]) if self.label is not None else self.cloud.labels


@dataclass
class DatasetSpec:
    task: str = TASK_SHAPES
    classes: int = 4
    # Clouds per class (shapes), or scene count (scenes)
    samples: int = 125
    points: int = 512
    noise: float = 0.0
    seed: int = 0
    min_objects: int = 2
    max_objects: int = 4

    def validate(self) -> "DatasetSpec":
        if self.task not in [TASK_SHAPES, TASK_SCENES]:
            raise LcpConfigError(f"Unknown dataset task: {self.task}")
        if self.samples < 1 or self.points < 1 or self.classes < 1:
            raise LcpConfigError("Dataset samples, points and classes must be >= 1")
        if self.noise < 0:
            raise LcpConfigError(f"Noise sigma must be >= 0 (got {self.noise})")
        if not 0 <= self.min_objects <= self.max_objects:
            raise LcpConfigError(f"Invalid object count range: [{self.min_objects}, {self.max_objects}]")
        return self


def split(samples: List[Sample], val_fraction: float, seed: int) -> Tuple[List[Sample], List[Sample]]:
    """
    Seed-fixed train/validation split; both parts keep the generation order.
    """
    if not 0 <= val_fraction < 1:
        raise LcpConfigError(f"Validation fraction must be in [0, 1) (got {val_fraction})")
    order = np.random.default_rng(seed).permutation(len(samples))
    n_val = int(round(val_fraction * len(samples)))
    val = set(order[:n_val].tolist())
    return [s for i, s in enumerate(samples) if i not in val], [s for i, s in enumerate(samples) if i in val]


def write_manifest(folder: Path, entries: List[Tuple[str, Optional[int]]]) -> Path:
    # One "path label" line per cloud ("-" when labels are per point)
    path = folder / MANIFEST_NAME
    with path.open("w") as f:
        for name, label in entries:
            f.write(f"{name} {'-' if label is None else label}\n")
    return path


def read_manifest(path: Path) -> List[Tuple[Path, Optional[int]]]:
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise LcpFormatError(path, "manifest file not found")
    out = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2 or not (fields[1] == "-" or fields[1].isdigit()):
            raise LcpFormatError(path, f"line {number}: expected '<path> <label|->'")
        out.append((path.parent / fields[0], None if fields[1] == "-" else int(fields[1])))
    return out
