import re
from pathlib import Path
from typing import List, Optional

import numpy as np

from lcpformer.errors import LcpFormatError
from lcpformer.geometry.cloud import PointCloud

# Binary cloud layout
CLOUD_MAGIC = b"LCPC"
CLOUD_VERSION = 1
CLOUD_HEADER = np.dtype([("version", "<u4"), ("points", "<u4"), ("features", "<u4"), ("labels", "<u4")])

# Text cloud header comment
XYZ_HEADER_PATTERN = re.compile(r"^#\s*features=(\d+)\s+labels=([01])\s*$")


def write_xyz(path: Path, cloud: PointCloud):
    with path.open("w") as f:
        f.write(f"# features={cloud.feature_width} labels={int(cloud.labels is not None)}\n")
        for i in range(cloud.n_points):
            values = list(cloud.coords[i]) + ([] if cloud.features is None else list(cloud.features[i]))
            line = " ".join(f"{v:.9g}" for v in values)
            if cloud.labels is not None:
                line += f" {cloud.labels[i]}"
            f.write(line + "\n")


def read_xyz(path: Path) -> PointCloud:
    """
    Read a text cloud: x y z, then features, then an optional integer label per line.

    Without the header comment, every column after xyz is a feature.
    """
    if not path.is_file():
        raise LcpFormatError(path, "file not found")
    features: Optional[int] = None
    labelled = False
    rows: List[List[str]] = []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        if line.startswith("#"):
            m = XYZ_HEADER_PATTERN.match(line)
            if m is not None:
                features, labelled = int(m.group(1)), m.group(2) == "1"
            continue
        if not line.strip():
            continue
        fields = line.split()
        expected = None if features is None else 3 + features + int(labelled)
        if expected is not None and len(fields) != expected:
            raise LcpFormatError(path, f"line {number}: expected {expected} values, found {len(fields)}")
        if rows and len(fields) != len(rows[0]):
            raise LcpFormatError(path, f"line {number}: inconsistent column count")
        rows.append(fields)
    if not rows:
        raise LcpFormatError(path, "no points")
    if len(rows[0]) < 3:
        raise LcpFormatError(path, "at least 3 coordinates are expected per point")

    try:
        if labelled:
            labels = np.array([int(r[-1]) for r in rows], dtype=np.int64)
            values = np.array([r[:-1] for r in rows], dtype=np.float64)
        else:
            labels = None
            values = np.array(rows, dtype=np.float64)
    except ValueError as e:
        raise LcpFormatError(path, f"malformed value ({e})")
    return PointCloud(values[:, :3], values[:, 3:] if values.shape[1] > 3 else None, labels)


def write_bin(path: Path, cloud: PointCloud):
    header = np.array([(CLOUD_VERSION, cloud.n_points, cloud.feature_width, int(cloud.labels is not None))], dtype=CLOUD_HEADER)
    with path.open("wb") as f:
        f.write(CLOUD_MAGIC)
        f.write(header.tobytes())
        f.write(cloud.coords.astype("<f4").tobytes())
        if cloud.features is not None:
            f.write(cloud.features.astype("<f4").tobytes())
        if cloud.labels is not None:
            f.write(cloud.labels.astype("<u4").tobytes())


def read_bin(path: Path) -> PointCloud:
    if not path.is_file():
        raise LcpFormatError(path, "file not found")
    raw = path.read_bytes()
    offset = len(CLOUD_MAGIC) + CLOUD_HEADER.itemsize
    if len(raw) < offset or raw[: len(CLOUD_MAGIC)] != CLOUD_MAGIC:
        raise LcpFormatError(path, "not a binary point cloud (bad magic)")
    header = np.frombuffer(raw, dtype=CLOUD_HEADER, count=1, offset=len(CLOUD_MAGIC))[0]
    if header["version"] != CLOUD_VERSION:
        raise LcpFormatError(path, f"unsupported version {header['version']}")
    n, width, labelled = int(header["points"]), int(header["features"]), int(header["labels"])
    if labelled not in (0, 1):
        raise LcpFormatError(path, f"invalid label flag {labelled}")
    expected = offset + 4 * n * (3 + width + labelled)
    if len(raw) != expected:
        raise LcpFormatError(path, f"payload size mismatch (expected {expected} bytes, found {len(raw)})")

    def block(count: int, dtype: str) -> np.ndarray:
        nonlocal offset
        out = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
        offset += 4 * count
        return out

    coords = block(3 * n, "<f4").reshape(n, 3)
    features = block(n * width, "<f4").reshape(n, width) if width else None
    labels = block(n, "<u4") if labelled else None
    return PointCloud(coords, features, labels)


def read_cloud(path: Path) -> PointCloud:
    return read_xyz(path) if path.suffix == ".xyz" else read_bin(path)


def write_cloud(path: Path, cloud: PointCloud):
    if path.suffix == ".xyz":
        write_xyz(path, cloud)
    else:
        write_bin(path, cloud)
