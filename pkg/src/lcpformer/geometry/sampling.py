import numpy as np

from lcpformer.errors import LcpIndexError
from lcpformer.geometry.cloud import CloudLike, as_coords


def farthest_point_sampling(cloud: CloudLike, m: int, start: int = 0) -> np.ndarray:
    """
    Greedy max-min selection of m distinct indices, first one being start.

    Ties (equal min distances) go to the lowest index. Squared distances only.
    """
    coords = as_coords(cloud)
    n = coords.shape[0]
    if not 1 <= m <= n:
        raise LcpIndexError(f"farthest_point_sampling: cannot select {m} of {n} points")
    if not 0 <= start < n:
        raise LcpIndexError(f"farthest_point_sampling: start index {start} out of range [0, {n})")

    selected = np.empty(m, dtype=np.int64)
    nearest = np.full(n, np.inf)
    current = start
    for i in range(m):
        selected[i] = current
        diff = coords - coords[current]
        nearest = np.minimum(nearest, np.einsum("ij,ij->i", diff, diff))
        # Already selected points never win again, even on duplicated coordinates
        nearest[current] = -np.inf
        current = int(np.argmax(nearest))
    return selected
