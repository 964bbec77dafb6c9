from dataclasses import dataclass
from typing import Optional

import numpy as np

from lcpformer.autodiff import Tensor
from lcpformer.autodiff.ops import concat, gather_rows
from lcpformer.errors import LcpError, LcpIndexError
from lcpformer.geometry.cloud import CloudLike, PointCloud, RegionGrouping, as_coords

# Centers processed per distance block (bounds the M x N x 3 temporary)
DISTANCE_CHUNK = 256


def squared_distances(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    out = np.empty((queries.shape[0], points.shape[0]))
    for begin in range(0, queries.shape[0], DISTANCE_CHUNK):
        diff = queries[begin : begin + DISTANCE_CHUNK, None, :] - points[None, :, :]
        out[begin : begin + DISTANCE_CHUNK] = np.einsum("mnd,mnd->mn", diff, diff)
    return out


def smallest(d2: np.ndarray, k: int) -> np.ndarray:
    """
    Column indices of the k smallest values of every row, ascending, ties by lowest index
    (the first k columns of a stable argsort, without sorting whole rows).
    """
    if k >= d2.shape[1]:
        return np.argsort(d2, axis=1, kind="stable")[:, :k]
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1 : k]
    below = d2 < kth
    ties = d2 == kth
    # Lowest indexed ties fill the slots left after the strictly smaller values
    keep = below | (ties & (np.cumsum(ties, axis=1) <= k - below.sum(axis=1, keepdims=True)))
    chosen = np.nonzero(keep)[1].reshape(d2.shape[0], k)
    order = np.argsort(np.take_along_axis(d2, chosen, axis=1), axis=1, kind="stable")
    return np.take_along_axis(chosen, order, axis=1)


def _sorted_neighbors(coords: np.ndarray, centers: np.ndarray, k: int):
    if centers.size and (centers.min() < 0 or centers.max() >= coords.shape[0]):
        raise LcpIndexError(f"grouping: center index out of range [0, {coords.shape[0]})")
    d2 = squared_distances(coords[centers], coords)
    # Each center always sorts first among its zero-distance duplicates
    d2[np.arange(centers.size), centers] = -1.0
    order = smallest(d2, k)
    return order, np.take_along_axis(d2, order, axis=1)


def knn(cloud: CloudLike, center_indices: np.ndarray, k: int) -> RegionGrouping:
    """
    K nearest points of every center (center included, slot 0), ascending distance,
    ties broken by lowest index.
    """
    coords = as_coords(cloud)
    n = coords.shape[0]
    if not 1 <= k <= n:
        raise LcpIndexError(f"knn: cannot group {k} neighbors out of {n} points")
    centers = np.asarray(center_indices, dtype=np.int64)
    order, _ = _sorted_neighbors(coords, centers, k)
    return RegionGrouping(centers, order, n)


def ball_query(cloud: CloudLike, center_indices: np.ndarray, radius: float, k: int) -> RegionGrouping:
    """
    Up to K points within radius of every center (ascending distance, ties by index);
    missing slots repeat the center.
    """
    coords = as_coords(cloud)
    n = coords.shape[0]
    if not radius > 0:
        raise LcpError(f"ball_query: radius must be positive (got {radius})")
    if not 1 <= k <= n:
        raise LcpIndexError(f"ball_query: cannot group {k} neighbors out of {n} points")
    centers = np.asarray(center_indices, dtype=np.int64)
    order, d2 = _sorted_neighbors(coords, centers, k)
    neighbors = np.where(d2 <= radius * radius, order, order[:, :1])
    return RegionGrouping(centers, neighbors, n, radius=radius)


def relative_coords(cloud: CloudLike, grouping: RegionGrouping) -> np.ndarray:
    coords = as_coords(cloud)
    return coords[grouping.neighbor_indices] - coords[grouping.center_indices][:, None, :]


def group(cloud: PointCloud, grouping: RegionGrouping, features: Optional[Tensor] = None) -> Tensor:
    """
    Build the M x K x (3 + C) region tensor: relative coordinates then neighbor features.

    Features default to the cloud's own (constant) features; networks pass their
    learned per-point features instead.
    """
    if features is None:
        if cloud.features is None:
            raise LcpError("group: point cloud has no features")
        features = Tensor(cloud.features)
    offsets = Tensor(relative_coords(cloud, grouping), dtype=features.dtype)
    return concat([offsets, gather_rows(features, grouping.neighbor_indices)], axis=-1)


@dataclass
class SharedPointStats:
    n_points: int
    slots_total: int
    points_covered: int
    histogram: np.ndarray
    fraction_shared: float


def shared_point_stats(grouping: RegionGrouping) -> SharedPointStats:
    multiplicity = grouping.multiplicity
    return SharedPointStats(
        n_points=grouping.n_points,
        slots_total=int(grouping.neighbor_indices.size),
        points_covered=int(np.count_nonzero(multiplicity)),
        histogram=np.bincount(multiplicity),
        fraction_shared=float(np.count_nonzero(multiplicity >= 2) / grouping.n_points),
    )
