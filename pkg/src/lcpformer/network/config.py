from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from lcpformer.errors import LcpConfigError
from lcpformer.network.lcp import WEIGHTINGS

# Tasks
TASK_CLASSIFICATION = "classification"
TASK_SEGMENTATION = "segmentation"
TASK_DETECTION = "detection"
TASKS = [TASK_CLASSIFICATION, TASK_SEGMENTATION, TASK_DETECTION]

# Groupings
GROUPING_KNN = "knn"
GROUPING_BALL = "ball"

# Layer norm placement
NORM_POST = "post"
NORM_NONE = "none"

PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass
class BlockConfig:
    out_points: int
    neighbors: int
    in_width: int
    out_width: int
    layers_before: int = 1
    layers_after: int = 1
    grouping: str = GROUPING_KNN
    radius: Optional[float] = None


@dataclass
class ModelConfig:
    task: str
    input_points: int
    embed_width: int
    blocks: List[BlockConfig]
    classes: int
    # Extra per-point input features beyond xyz
    input_feature_width: int = 0
    # Output width of each upsampling stage (coarsest first)
    upsample_widths: List[int] = field(default_factory=list)
    # Hidden widths of the head MLP
    head_widths: List[int] = field(default_factory=list)
    norm: str = NORM_POST
    heads: int = 4
    lcp: bool = True
    lcp_weighting: str = "channel"
    precision: str = "float64"
    seed: int = 0

    @property
    def dtype(self) -> np.dtype:
        return PRECISIONS[self.precision]

    @property
    def level_widths(self) -> List[int]:
        # Width of the embedded input, then of every block output
        return [self.embed_width] + [b.out_width for b in self.blocks]

    @property
    def level_points(self) -> List[int]:
        return [self.input_points] + [b.out_points for b in self.blocks]

    def validate(self) -> "ModelConfig":
        def check(condition: bool, message: str):
            if not condition:
                raise LcpConfigError(f"Invalid model config: {message}")

        check(self.task in TASKS, f"unknown task '{self.task}'")
        check(self.norm in [NORM_POST, NORM_NONE], f"unknown norm '{self.norm}'")
        check(self.lcp_weighting in WEIGHTINGS, f"unknown LCP weighting '{self.lcp_weighting}'")
        check(self.precision in PRECISIONS, f"unknown precision '{self.precision}'")
        check(len(self.blocks) >= 1, "at least one block is required")
        check(self.input_points >= 1 and self.embed_width >= 1, "input points and embedding width must be positive")
        incoming, width = self.input_points, self.embed_width
        for i, b in enumerate(self.blocks):
            check(1 <= b.out_points <= incoming, f"block {i} selects {b.out_points} of {incoming} points")
            check(1 <= b.neighbors <= incoming, f"block {i} groups {b.neighbors} of {incoming} points")
            check(b.in_width == width, f"block {i} input width {b.in_width} does not chain with {width}")
            check(b.out_width >= 1, f"block {i} output width must be positive")
            check(b.in_width % self.heads == 0, f"{self.heads} heads do not divide block {i} width {b.in_width}")
            check(b.layers_before >= 0 and b.layers_after >= 0, f"block {i} attention layer counts must be >= 0")
            check(b.grouping in [GROUPING_KNN, GROUPING_BALL], f"block {i} has unknown grouping '{b.grouping}'")
            check(b.grouping != GROUPING_BALL or (b.radius is not None and b.radius > 0), f"block {i} ball query needs a positive radius")
            incoming, width = b.out_points, b.out_width
        if self.task == TASK_CLASSIFICATION:
            check(len(self.upsample_widths) == 0, "classification has no upsampling stage")
        elif self.task == TASK_SEGMENTATION:
            check(len(self.upsample_widths) == len(self.blocks), "segmentation upsampling must mirror every block")
        else:
            check(len(self.upsample_widths) <= len(self.blocks), "more upsampling stages than blocks")
        check(self.task == TASK_DETECTION or self.classes >= 1, "class count must be positive")
        return self

    def with_neighbors(self, k: List[int]) -> "ModelConfig":
        # One value for all blocks, or one per block
        values = k * len(self.blocks) if len(k) == 1 else k
        if len(values) != len(self.blocks):
            raise LcpConfigError(f"Invalid model config: {len(k)} neighbor counts for {len(self.blocks)} blocks")
        return replace(self, blocks=[replace(b, neighbors=v) for b, v in zip(self.blocks, values)])

    def with_block_count(self, count: int) -> "ModelConfig":
        """
        Truncate (or extend by repeating the last block) to the given depth; segmentation
        upsampling keeps mirroring the blocks.
        """
        if count < 1:
            raise LcpConfigError(f"Invalid model config: block count must be >= 1 (got {count})")
        blocks = list(self.blocks[:count])
        while len(blocks) < count:
            last = blocks[-1]
            blocks.append(replace(last, in_width=last.out_width))
        upsample = list(self.upsample_widths)
        if self.task == TASK_SEGMENTATION:
            # Stages run coarsest first: keep the finest ones
            upsample = upsample[-count:] if count <= len(upsample) else [upsample[0]] * (count - len(upsample)) + upsample
        else:
            upsample = upsample[: min(len(upsample), count)]
        return replace(self, blocks=blocks, upsample_widths=upsample)

    def with_attention_layers(self, layers: int) -> "ModelConfig":
        if layers < 1:
            raise LcpConfigError(f"Invalid model config: attention layer count must be >= 1 (got {layers})")
        return replace(self, blocks=[replace(b, layers_before=(layers + 1) // 2, layers_after=layers // 2) for b in self.blocks])


def _blocks(points: List[int], neighbors: List[int], widths: List[int], **kwargs) -> List[BlockConfig]:
    return [BlockConfig(m, k, w_in, w_out, **kwargs) for m, k, w_in, w_out in zip(points, neighbors, widths[:-1], widths[1:])]


def _classification() -> ModelConfig:
    return ModelConfig(
        task=TASK_CLASSIFICATION,
        input_points=1024,
        embed_width=64,
        blocks=_blocks([256] * 4, [16, 12, 8, 8], [64, 128, 256, 512, 512]),
        classes=40,
        head_widths=[256],
    )


def _segmentation() -> ModelConfig:
    return ModelConfig(
        task=TASK_SEGMENTATION,
        input_points=4096,
        embed_width=32,
        blocks=_blocks([4096, 1024, 512, 256], [16] * 4, [32, 64, 128, 256, 512]),
        classes=13,
        upsample_widths=[256, 128, 64, 64],
    )


def _detection() -> ModelConfig:
    # Trained with AdamW, lr 3e-4, 600 epochs, 10x step decays at 420/480/540 (not implemented)
    blocks = _blocks([2048, 1024, 512, 256], [16] * 4, [32, 64, 128, 256, 256], grouping=GROUPING_BALL)
    for block, radius in zip(blocks, [0.2, 0.4, 0.8, 1.2]):
        block.radius = radius
    return ModelConfig(task=TASK_DETECTION, input_points=4096, embed_width=32, blocks=blocks, classes=0, upsample_widths=[256, 256])


def _desk_classification() -> ModelConfig:
    return ModelConfig(
        task=TASK_CLASSIFICATION,
        input_points=512,
        embed_width=32,
        blocks=_blocks([256] * 4, [16, 12, 8, 8], [32, 32, 64, 64, 128]),
        classes=4,
        head_widths=[64],
        precision="float32",
    )


def _desk_segmentation() -> ModelConfig:
    return ModelConfig(
        task=TASK_SEGMENTATION,
        input_points=4096,
        embed_width=16,
        blocks=_blocks([1024, 512, 256, 128], [16] * 4, [16, 32, 64, 64, 128]),
        classes=4,
        upsample_widths=[64, 64, 32, 32],
        precision="float32",
    )


def _miniature_classification() -> ModelConfig:
    return ModelConfig(
        task=TASK_CLASSIFICATION,
        input_points=128,
        embed_width=8,
        blocks=_blocks([64, 32, 32, 32], [8, 6, 4, 4], [8, 8, 16, 16, 16]),
        classes=4,
        head_widths=[16],
    )


def _miniature_segmentation() -> ModelConfig:
    return ModelConfig(
        task=TASK_SEGMENTATION,
        input_points=128,
        embed_width=8,
        blocks=_blocks([128, 64, 32, 16], [8] * 4, [8, 8, 16, 16, 16]),
        classes=4,
        upsample_widths=[16, 16, 8, 8],
    )


PRESETS: Dict[str, Callable[[], ModelConfig]] = {
    "classification": _classification,
    "segmentation": _segmentation,
    "detection": _detection,
    "desk-cls": _desk_classification,
    "desk-seg": _desk_segmentation,
    "miniature-cls": _miniature_classification,
    "miniature-seg": _miniature_segmentation,
}


def preset(name: str) -> ModelConfig:
    if name not in PRESETS:
        raise LcpConfigError(f"Unknown model preset: {name} (known: {', '.join(PRESETS)})")
    return PRESETS[name]()
