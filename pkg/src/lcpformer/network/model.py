from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from lcpformer.autodiff import Tensor
from lcpformer.autodiff.ops import concat, gather_rows, linear, reduce, relu, reshape
from lcpformer.errors import LcpShapeError
from lcpformer.geometry.cloud import PointCloud, RegionGrouping
from lcpformer.geometry.grouping import ball_query, knn, relative_coords
from lcpformer.geometry.interpolation import interpolate_features
from lcpformer.geometry.sampling import farthest_point_sampling
from lcpformer.network.attention import transformer_layer
from lcpformer.network.config import GROUPING_BALL, NORM_POST, TASK_CLASSIFICATION, TASK_DETECTION, TASK_SEGMENTATION, BlockConfig, ModelConfig
from lcpformer.network.lcp import WEIGHTING_CHANNEL, LCPState, lcp_forward
from lcpformer.network.params import BlockParams, LCPFormerParams, LinearParams, ParamInit, init_lcp, init_transformer_layer


@dataclass
class BlockTrace:
    grouping: RegionGrouping
    lcp: Optional[LCPState]


def region_grouping(coords: np.ndarray, cfg: BlockConfig, start: int = 0) -> RegionGrouping:
    centers = farthest_point_sampling(coords, cfg.out_points, start)
    if cfg.grouping == GROUPING_BALL:
        return ball_query(coords, centers, cfg.radius, cfg.neighbors)
    return knn(coords, centers, cfg.neighbors)


def block_forward(
    coords: np.ndarray,
    features: Tensor,
    cfg: BlockConfig,
    params: BlockParams,
    start: int = 0,
    weighting: str = WEIGHTING_CHANNEL,
    trace: List[BlockTrace] = None,
) -> Tuple[np.ndarray, Tensor]:
    """
    One block: sample and group, attention, local context propagation, attention,
    then per-slot projection to the output width and max-pooling over each region.

    Blocks without LCP parameters skip propagation (identity).
    """
    if features.ndim != 2 or features.shape != (coords.shape[0], cfg.in_width):
        raise LcpShapeError("block_forward", coords.shape, features.shape, (cfg.in_width,))
    grouping = region_grouping(coords, cfg, start)
    offsets = relative_coords(coords, grouping)
    x = gather_rows(features, grouping.neighbor_indices)

    for layer in params.before:
        x = transformer_layer(offsets, x, layer)
    state = None
    if params.lcp is not None:
        x, state = lcp_forward(x, grouping, params.lcp, weighting)
    for layer in params.after:
        x = transformer_layer(offsets, x, layer)

    pooled = reduce(linear(x, params.proj.weight, params.proj.bias), axis=1, kind="max")
    if trace is not None:
        trace.append(BlockTrace(grouping, state))
    return coords[grouping.center_indices], pooled


def embed(cloud: PointCloud, config: ModelConfig, params: LCPFormerParams) -> Tensor:
    if cloud.feature_width != config.input_feature_width:
        raise LcpShapeError("embed (input feature width)", (cloud.feature_width,), (config.input_feature_width,))
    values = cloud.coords if cloud.features is None else np.concatenate([cloud.coords, cloud.features], axis=1)
    return relu(linear(Tensor(values, dtype=config.dtype), params.embed.weight, params.embed.bias))


def _mlp_head(x: Tensor, layers: List[LinearParams]) -> Tensor:
    for i, layer in enumerate(layers):
        x = linear(x, layer.weight, layer.bias)
        if i < len(layers) - 1:
            x = relu(x)
    return x


def _encode(cloud: PointCloud, config: ModelConfig, params: LCPFormerParams, start: int, trace: List[BlockTrace]):
    # Every level as (coords, features): embedded input first, then each block output
    levels = [(cloud.coords, embed(cloud, config, params))]
    for i, (cfg, block) in enumerate(zip(config.blocks, params.blocks)):
        coords, features = levels[-1]
        levels.append(block_forward(coords, features, cfg, block, start if i == 0 else 0, config.lcp_weighting, trace))
    return levels


def _decode(levels: List[Tuple[np.ndarray, Tensor]], stages: List[LinearParams]) -> Tuple[np.ndarray, Tensor]:
    coords, features = levels[-1]
    for u, stage in enumerate(stages):
        skip_coords, skip_features = levels[-2 - u]
        upsampled = interpolate_features(coords, features, skip_coords)
        coords, features = skip_coords, relu(linear(concat([upsampled, skip_features], axis=-1), stage.weight, stage.bias))
    return coords, features


def classification_forward(
    cloud: PointCloud, config: ModelConfig, params: LCPFormerParams, start: int = 0, trace: List[BlockTrace] = None
) -> Tensor:
    levels = _encode(cloud, config, params, start, trace)
    _, features = levels[-1]
    readout = concat([reduce(features, axis=0, kind="max"), reduce(features, axis=0, kind="mean")], axis=-1)
    logits = _mlp_head(reshape(readout, (1, readout.shape[0])), params.head)
    return reshape(logits, (config.classes,))


def segmentation_forward(
    cloud: PointCloud, config: ModelConfig, params: LCPFormerParams, start: int = 0, trace: List[BlockTrace] = None
) -> Tensor:
    levels = _encode(cloud, config, params, start, trace)
    _, features = _decode(levels, params.upsample)
    return _mlp_head(features, params.head)


def detection_backbone_forward(
    cloud: PointCloud, config: ModelConfig, params: LCPFormerParams, start: int = 0, trace: List[BlockTrace] = None
) -> Tuple[np.ndarray, Tensor]:
    """
    Backbone features after the configured upsampling stages (seed points for a detection head).
    """
    return _decode(_encode(cloud, config, params, start, trace), params.upsample)


def forward(cloud: PointCloud, config: ModelConfig, params: LCPFormerParams, start: int = 0, trace: List[BlockTrace] = None):
    if config.task == TASK_CLASSIFICATION:
        return classification_forward(cloud, config, params, start, trace)
    if config.task == TASK_SEGMENTATION:
        return segmentation_forward(cloud, config, params, start, trace)
    return detection_backbone_forward(cloud, config, params, start, trace)


def param_init(config: ModelConfig, seed: int = None) -> LCPFormerParams:
    """
    Deterministic parameters for a validated config.

    LCP parameters are always drawn so that networks with and without propagation share
    every other tensor for the same seed.
    """
    config.validate()
    init = ParamInit(config.seed if seed is None else seed, config.dtype)
    norm = config.norm == NORM_POST

    embed_params = init.linear(3 + config.input_feature_width, config.embed_width)
    blocks = []
    for cfg in config.blocks:
        before = [init_transformer_layer(init, cfg.in_width, config.heads, norm) for _ in range(cfg.layers_before)]
        lcp = init_lcp(init, cfg.in_width)
        after = [init_transformer_layer(init, cfg.in_width, config.heads, norm) for _ in range(cfg.layers_after)]
        blocks.append(BlockParams(before, lcp if config.lcp else None, after, init.linear(cfg.in_width, cfg.out_width)))

    widths = config.level_widths
    upsample = []
    current = widths[-1]
    for u, out_width in enumerate(config.upsample_widths):
        upsample.append(init.linear(current + widths[-2 - u], out_width))
        current = out_width

    head = []
    if config.task != TASK_DETECTION:
        head_in = 2 * widths[-1] if config.task == TASK_CLASSIFICATION else current
        chain = [head_in] + list(config.head_widths) + [config.classes]
        head = [init.linear(n_in, n_out) for n_in, n_out in zip(chain[:-1], chain[1:])]
    return LCPFormerParams(embed_params, blocks, upsample, head)


@dataclass
class LCPFormer:
    """
    A config with its parameters; the unit trained, checkpointed and evaluated.
    """

    config: ModelConfig
    params: LCPFormerParams

    @staticmethod
    def create(config: ModelConfig, seed: int = None) -> "LCPFormer":
        return LCPFormer(config, param_init(config, seed))

    def __call__(self, cloud: PointCloud, start: int = 0) -> Tensor:
        return forward(cloud, self.config, self.params, start)

    def without_lcp(self) -> "LCPFormer":
        blocks = [replace(b, lcp=None) for b in self.params.blocks]
        return LCPFormer(replace(self.config, lcp=False), replace(self.params, blocks=blocks))
