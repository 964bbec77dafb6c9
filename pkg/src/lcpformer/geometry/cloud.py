from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple, Union

import numpy as np

from lcpformer.errors import LcpIndexError, LcpNonFiniteError, LcpShapeError


@dataclass
class PointCloud:
    coords: np.ndarray
    features: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 3 or self.coords.shape[0] < 1:
            raise LcpShapeError("point cloud coordinates (expected N x 3, N >= 1)", self.coords.shape)
        if not np.all(np.isfinite(self.coords)):
            raise LcpNonFiniteError("point cloud coordinates must be finite")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != self.n_points:
                raise LcpShapeError("point cloud features", self.coords.shape, self.features.shape)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n_points,):
                raise LcpShapeError("point cloud labels", self.coords.shape, self.labels.shape)

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    @property
    def feature_width(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    def with_coords(self, coords: np.ndarray) -> "PointCloud":
        return replace(self, coords=coords)

    def permuted(self, order: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.coords[order],
            None if self.features is None else self.features[order],
            None if self.labels is None else self.labels[order],
        )


@dataclass
class RegionGrouping:
    """
    M local regions of K slots each, plus the shared-point inverse index.

    The inverse index is stored compactly: slots (flat j*K+s numbers) sorted by the point
    they hold, with per-point offsets into that order.
    """

    center_indices: np.ndarray
    neighbor_indices: np.ndarray
    n_points: int
    radius: Optional[float] = None
    inverse_slots: np.ndarray = field(init=False, repr=False)
    inverse_offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.center_indices = np.asarray(self.center_indices, dtype=np.int64)
        self.neighbor_indices = np.asarray(self.neighbor_indices, dtype=np.int64)
        if self.neighbor_indices.ndim != 2 or self.neighbor_indices.shape[0] != self.center_indices.shape[0]:
            raise LcpShapeError("region grouping", self.center_indices.shape, self.neighbor_indices.shape)
        for name, idx in (("center", self.center_indices), ("neighbor", self.neighbor_indices)):
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_points):
                raise LcpIndexError(f"region grouping: {name} index out of range [0, {self.n_points})")

        # Transpose relation: slots ordered by owning point (stable, so (j, s) ascending)
        flat = self.neighbor_indices.reshape(-1)
        self.inverse_slots = np.argsort(flat, kind="stable")
        self.inverse_offsets = np.concatenate([[0], np.cumsum(self.multiplicity)])

    @property
    def n_regions(self) -> int:
        return self.neighbor_indices.shape[0]

    @property
    def n_slots(self) -> int:
        return self.neighbor_indices.shape[1]

    @property
    def multiplicity(self) -> np.ndarray:
        return np.bincount(self.neighbor_indices.reshape(-1), minlength=self.n_points)

    def memberships(self, point: int) -> List[Tuple[int, int]]:
        slots = self.inverse_slots[self.inverse_offsets[point] : self.inverse_offsets[point + 1]]
        return [(int(s) // self.n_slots, int(s) % self.n_slots) for s in slots]

    @property
    def slot_points(self) -> np.ndarray:
        # Point held by each flat slot, in inverse-index order
        return self.neighbor_indices.reshape(-1)[self.inverse_slots]


CloudLike = Union[PointCloud, np.ndarray]


def as_coords(cloud: CloudLike) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.coords
    coords = np.asarray(cloud, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise LcpShapeError("coordinates (expected N x 3)", coords.shape)
    return coords
