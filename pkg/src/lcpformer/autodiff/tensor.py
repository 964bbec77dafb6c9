import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from lcpformer.errors import LcpError, LcpShapeError

# Active tapes, one stack per thread
_local = threading.local()


def _tape_stack() -> List["Tape"]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if len(stack) else None


class Tensor:
    """
    Dense real array, optionally tracked by the active tape.

    Leaves are created by user code (parameters have requires_grad set); every other
    tracked tensor is the output of a recorded operation and carries its tape node id.
    """

    def __init__(self, data, requires_grad: bool = False, dtype: np.dtype = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else np.float64
        self.data: np.ndarray = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # Operators map to recorded ops
    def __add__(self, other):
        from lcpformer.autodiff.ops import add

        return add(self, other)

    def __radd__(self, other):
        from lcpformer.autodiff.ops import add

        return add(other, self)

    def __sub__(self, other):
        from lcpformer.autodiff.ops import sub

        return sub(self, other)

    def __mul__(self, other):
        from lcpformer.autodiff.ops import mul

        return mul(self, other)

    def __rmul__(self, other):
        from lcpformer.autodiff.ops import mul

        return mul(other, self)

    def __matmul__(self, other):
        from lcpformer.autodiff.ops import matmul

        return matmul(self, other)


@dataclass
class TapeRecord:
    inputs: Tuple[Optional[int], ...]
    output: int
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """
    Define-by-run operation log.

    Use as a context manager: operations executed inside the block are recorded, then
    backward() replays their rules in reverse order. A tape only ever runs on the thread
    that entered it; independent tapes may share read-only leaf tensors.
    """

    def __init__(self):
        self.records: List[TapeRecord] = []
        self.leaves: Dict[int, Tensor] = {}
        self._leaf_ids: Dict[int, int] = {}
        self._leaf_grads: Dict[int, np.ndarray] = {}
        self._next_id = 0

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_value, tb):
        _tape_stack().pop()

    def _new_id(self) -> int:
        out = self._next_id
        self._next_id += 1
        return out

    def node_of(self, t: Tensor) -> Optional[int]:
        # Output of one of our ops
        if t.node_id is not None:
            return t.node_id if t.tape is self else None

        # Leaf: registered on first use
        if t.requires_grad:
            key = id(t)
            if key not in self._leaf_ids:
                node = self._new_id()
                self._leaf_ids[key] = node
                self.leaves[node] = t
            return self._leaf_ids[key]
        return None

    def record(self, inputs: Sequence[Tensor], out: np.ndarray, backward: Callable) -> Tensor:
        ids = tuple(self.node_of(t) for t in inputs)
        if all(i is None for i in ids):
            # Nothing to differentiate
            return Tensor(out)
        node = self._new_id()
        self.records.append(TapeRecord(ids, node, backward))
        result = Tensor(out, requires_grad=True)
        result.node_id = node
        result.tape = self
        return result

    def backward(self, root: Tensor, populate: bool = True) -> Dict[int, np.ndarray]:
        """
        Reverse pass from a scalar root.

        Gradients of every leaf seen by this tape are kept (see grad()); when populate is
        set they are also stored on the leaves themselves (sequential mode).
        """
        if root.size != 1:
            raise LcpShapeError("backward (root must be scalar)", root.shape, ())
        if root.tape is not self or root.node_id is None:
            raise LcpError("backward: root tensor is not recorded on this tape")

        grads: Dict[int, np.ndarray] = {root.node_id: np.ones_like(root.data)}
        for rec in reversed(self.records):
            if rec.output > root.node_id:
                continue
            g = grads.pop(rec.output, None)
            if g is None:
                continue
            for node, gi in zip(rec.inputs, rec.backward(g)):
                if node is None or gi is None:
                    continue
                grads[node] = grads[node] + gi if node in grads else gi

        # Leaves reachable or not: all get a gradient
        self._leaf_grads = {}
        for node, leaf in self.leaves.items():
            g = grads.get(node)
            g = np.zeros_like(leaf.data) if g is None else np.asarray(g, dtype=leaf.dtype).reshape(leaf.shape)
            self._leaf_grads[id(leaf)] = g
            if populate:
                leaf.grad = g
        return self._leaf_grads

    def grad(self, t: Tensor) -> Optional[np.ndarray]:
        return self._leaf_grads.get(id(t))


def backward(root: Tensor) -> Dict[int, np.ndarray]:
    if root.tape is None:
        raise LcpError("backward: root tensor is not recorded on any tape")
    return root.tape.backward(root)
