import struct
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from lcpformer.errors import LcpFormatError
from lcpformer.network.params import ParamSet
from lcpformer.training.optim import OptimizerState

# Checkpoint layout
CHECKPOINT_MAGIC = b"LCPW"
CHECKPOINT_VERSION = 1


def write_tensors(path: Path, tensors: List[Tuple[str, np.ndarray]]):
    with path.open("wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(tensors)))
        for name, value in tensors:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
            f.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def read_tensors(path: Path) -> Dict[str, np.ndarray]:
    """
    Named float32 tensors of a checkpoint, in file order.
    """
    if not path.is_file():
        raise LcpFormatError(path, "checkpoint not found")
    raw = path.read_bytes()
    offset = 0

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(raw):
            raise LcpFormatError(path, "truncated checkpoint")
        out = raw[offset : offset + size]
        offset += size
        return out

    if take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise LcpFormatError(path, "not a checkpoint (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise LcpFormatError(path, f"unsupported checkpoint version {version}")
    out: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (length,) = struct.unpack("<I", take(4))
        name = take(length).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(shape)
    if offset != len(raw):
        raise LcpFormatError(path, f"{len(raw) - offset} trailing bytes")
    return out


def save_checkpoint(path: Path, params: ParamSet, optimizer: OptimizerState = None):
    named = [(name, t.data) for name, t in params.named_tensors()]
    if optimizer is not None:
        named += optimizer.named_slots([name for name, _ in named])
    write_tensors(path, named)


def load_checkpoint(path: Path, params: ParamSet, optimizer: OptimizerState = None):
    """
    Copy checkpoint values into live parameters (widened to their dtype).

    Every parameter must be present with the same shape; optimizer slots are optional.
    """
    stored = read_tensors(path)
    named = params.named_tensors()
    for name, t in named:
        if name not in stored:
            raise LcpFormatError(path, f"missing tensor {name}")
        if stored[name].shape != t.shape:
            raise LcpFormatError(path, f"tensor {name} has shape {stored[name].shape}, model expects {t.shape}")
    unknown = [n for n in stored if not n.startswith("optim/") and n not in dict(named)]
    if unknown:
        raise LcpFormatError(path, f"unexpected tensors: {', '.join(unknown)}")

    for name, t in named:
        t.data = stored[name].astype(t.dtype)
    if optimizer is not None:
        optimizer.load_slots([name for name, _ in named], stored)
