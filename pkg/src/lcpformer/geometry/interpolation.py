import numpy as np

from lcpformer.autodiff import Tensor
from lcpformer.autodiff.ops import gather_rows, mul, reduce
from lcpformer.errors import LcpShapeError
from lcpformer.geometry.cloud import CloudLike, as_coords
from lcpformer.geometry.grouping import smallest, squared_distances

# Interpolation neighbors and weight regularizer
INTERPOLATION_NEIGHBORS = 3
INTERPOLATION_EPS = 1e-8


def interpolate_features(src_cloud: CloudLike, src_features: Tensor, dst_coords: CloudLike) -> Tensor:
    """
    Inverse squared distance weighted average of the 3 nearest source features
    (fewer when the source has less than 3 points).
    """
    src = as_coords(src_cloud)
    dst = as_coords(dst_coords)
    if src_features.ndim != 2 or src_features.shape[0] != src.shape[0]:
        raise LcpShapeError("interpolate_features", src.shape, src_features.shape)

    k = min(INTERPOLATION_NEIGHBORS, src.shape[0])
    d2 = squared_distances(dst, src)
    nearest = smallest(d2, k)
    weights = 1.0 / (np.take_along_axis(d2, nearest, axis=1) + INTERPOLATION_EPS)
    weights /= weights.sum(axis=1, keepdims=True)

    gathered = gather_rows(src_features, nearest)
    return reduce(mul(gathered, Tensor(weights[:, :, None], dtype=src_features.dtype)), axis=1, kind="sum")
