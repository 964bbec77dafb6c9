from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from lcpformer.autodiff import Tensor
from lcpformer.autodiff.ops import add, concat, gather_rows, linear, mul, reduce, reshape, scatter_add_rows, segment_softmax
from lcpformer.errors import LcpIndexError, LcpShapeError
from lcpformer.geometry.cloud import RegionGrouping
from lcpformer.network.params import LCPParams

# Weighting variants: one weight per channel, or one scalar per region (channel-averaged logits)
WEIGHTING_CHANNEL = "channel"
WEIGHTING_SCALAR = "scalar"
WEIGHTINGS = [WEIGHTING_CHANNEL, WEIGHTING_SCALAR]


@dataclass
class LCPState:
    descriptors: np.ndarray
    logits: np.ndarray
    # Normalized weights of every slot, in inverse-index order (see RegionGrouping)
    slot_weights: np.ndarray
    grouping: RegionGrouping

    def point_weights(self, point: int) -> np.ndarray:
        offsets = self.grouping.inverse_offsets
        return self.slot_weights[offsets[point] : offsets[point + 1]]


def region_descriptor(region_features: Tensor) -> Tensor:
    if region_features.ndim != 3 or region_features.shape[1] < 1:
        raise LcpShapeError("region_descriptor (expected M x K x C, K >= 1)", region_features.shape)
    return concat([reduce(region_features, axis=1, kind="max"), reduce(region_features, axis=1, kind="mean")], axis=-1)


def region_weights(descriptors: Tensor, params: LCPParams) -> Tensor:
    if descriptors.ndim != 2 or descriptors.shape[1] != params.conv.weight.shape[0]:
        raise LcpShapeError("region_weights", descriptors.shape, params.conv.weight.shape)
    return linear(descriptors, params.conv.weight, params.conv.bias)


def _propagate(region_features: Tensor, logits: Tensor, grouping: RegionGrouping, weighting: str) -> Tuple[Tensor, Tensor]:
    m, k, c = region_features.shape
    if grouping.n_regions != m or grouping.n_slots != k:
        raise LcpIndexError(f"lcp_propagate: grouping has {grouping.n_regions} x {grouping.n_slots} slots, features have {m} x {k}")
    if logits.shape != (m, c):
        raise LcpShapeError("lcp_propagate", region_features.shape, logits.shape)
    if weighting == WEIGHTING_SCALAR:
        logits = reduce(logits, axis=1, kind="mean", keepdims=True)

    # Every slot, grouped by the point it holds; softmax over a point's regions
    slots = grouping.inverse_slots
    points = grouping.slot_points
    weights = segment_softmax(gather_rows(logits, slots // k), points, grouping.n_points)
    copies = gather_rows(reshape(region_features, (m * k, c)), slots)
    zeros = Tensor(np.zeros((grouping.n_points, c), dtype=region_features.dtype))
    return scatter_add_rows(zeros, points, mul(copies, weights)), weights


def lcp_propagate(
    region_features: Tensor, logits: Tensor, grouping: RegionGrouping, fallback: Optional[Tensor] = None, weighting: str = WEIGHTING_CHANNEL
) -> Tensor:
    """
    Rewrite each point's feature as the softmax-weighted sum of its copies across the regions
    containing it, normalizing per channel over exactly those regions.

    Points in no region get the fallback feature (or zeros).
    """
    out, _ = _propagate(region_features, logits, grouping, weighting)
    if fallback is not None:
        uncovered = (grouping.multiplicity == 0).astype(region_features.dtype)[:, None]
        out = add(out, mul(fallback, Tensor(uncovered)))
    return out


def lcp_forward(
    region_features: Tensor, grouping: RegionGrouping, params: LCPParams, weighting: str = WEIGHTING_CHANNEL
) -> Tuple[Tensor, LCPState]:
    descriptors = region_descriptor(region_features)
    logits = region_weights(descriptors, params)
    points, weights = _propagate(region_features, logits, grouping, weighting)

    # Scatter the updated point features back into every slot they occupy
    updated = gather_rows(points, grouping.neighbor_indices)
    slot_weights = np.broadcast_to(weights.data, (weights.shape[0], region_features.shape[2])).copy()
    return updated, LCPState(descriptors.data, logits.data, slot_weights, grouping)
