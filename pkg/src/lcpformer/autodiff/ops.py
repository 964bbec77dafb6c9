from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from lcpformer.autodiff.tensor import Tensor, active_tape
from lcpformer.errors import LcpIndexError, LcpNonFiniteError, LcpShapeError

Operand = Union[Tensor, np.ndarray, float, int]

# Probability floor of cross_entropy
LOG_CLAMP = 1e-12


def as_tensor(x: Operand, like: Tensor = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=like.dtype if like is not None else None)


def _emit(inputs: Sequence[Tensor], out: np.ndarray, backward: Callable) -> Tensor:
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return Tensor(out)
    return tape.record(inputs, out, backward)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # Sum over axes that were added or stretched by broadcasting
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(name: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise LcpShapeError(name, a.shape, b.shape)


def _check_finite(name: str, x: np.ndarray):
    if not np.all(np.isfinite(x)):
        raise LcpNonFiniteError(f"{name}: non-finite input values")


def _axis(name: str, x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise LcpShapeError(f"{name} (axis {axis})", x.shape)
    return axis % x.ndim


def matmul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise LcpShapeError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise LcpShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    if b.ndim == 2:
        # Stacked rows against one matrix: a single 2-D product each way
        rows = ad.reshape(-1, ad.shape[-1])
        n = bd.shape[1]

        def backward_rows(g):
            g2 = g.reshape(-1, n)
            return (g2 @ bd.T).reshape(ad.shape), rows.T @ g2

        return _emit([a, b], (rows @ bd).reshape(ad.shape[:-1] + (n,)), backward_rows)

    def backward(g):
        return _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape), _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)

    return _emit([a, b], np.matmul(ad, bd), backward)


def add(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit([a, b], a.data + b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit([a, b], a.data - b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Operand, b: Operand) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _emit([a, b], ad * bd, lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit([x], x.data * c, lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _emit([x], x.data * mask, lambda g: (g * mask,))


def reduce(x: Tensor, axis: Optional[int], kind: str, keepdims: bool = False) -> Tensor:
    """
    Max/mean/sum reduction (all axes when axis is None); max routes its gradient to the
    first maximal slot.
    """
    if axis is not None:
        axis = _axis(f"reduce({kind})", x, axis)
        extent = x.shape[axis]
    else:
        extent = x.size
    if extent == 0:
        raise LcpShapeError(f"reduce({kind}) over an empty axis", x.shape)
    xd = x.data
    shape = xd.shape

    def expand(g):
        if axis is None:
            return np.broadcast_to(np.reshape(g, (1,) * len(shape)), shape)
        return g if keepdims else np.expand_dims(g, axis)

    if kind == "sum":
        out = xd.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            return (np.broadcast_to(expand(g), shape).copy(),)

    elif kind == "mean":
        out = xd.mean(axis=axis, keepdims=keepdims)

        def backward(g):
            return (np.broadcast_to(expand(g), shape) / extent,)

    elif kind == "max":
        if axis is None:
            flat = int(np.argmax(xd))
            out = xd.reshape(-1)[flat].reshape((1,) * len(shape) if keepdims else ())

            def backward(g):
                grad = np.zeros(xd.size, dtype=xd.dtype)
                grad[flat] = np.asarray(g).reshape(-1)[0]
                return (grad.reshape(shape),)

        else:
            arg = np.expand_dims(np.argmax(xd, axis=axis), axis)
            out = np.take_along_axis(xd, arg, axis)
            if not keepdims:
                out = np.squeeze(out, axis)

            def backward(g):
                grad = np.zeros_like(xd)
                np.put_along_axis(grad, arg, expand(g), axis)
                return (grad,)

    else:
        raise LcpShapeError(f"reduce: unknown kind '{kind}'", x.shape)
    return _emit([x], np.asarray(out, dtype=xd.dtype), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _axis("softmax", x, axis)
    _check_finite("softmax", x.data)
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)
    return _emit([x], y, lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def _indices(name: str, idx, n: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise LcpIndexError(f"{name}: index out of range [0, {n})")
    return idx


def segment_sum(values: np.ndarray, idx: np.ndarray, count: int) -> np.ndarray:
    """
    Sum of the rows of values (leading idx.shape axes) into count rows, row r of the result
    adding every row whose idx is r.
    """
    flat = idx.reshape(-1)
    rest = values.shape[idx.ndim :]
    width = int(np.prod(rest, dtype=np.int64))
    # One bincount over (row, column) cells
    cells = (flat[:, None] * width + np.arange(width)).reshape(-1)
    out = np.bincount(cells, weights=values.reshape(-1), minlength=count * width)
    return out.reshape((count,) + rest).astype(values.dtype, copy=False)


def segment_max(values: np.ndarray, idx: np.ndarray, count: int) -> np.ndarray:
    # Rows without any member stay at -inf
    out = np.full((count,) + values.shape[1:], -np.inf, dtype=values.dtype)
    if idx.size:
        order = np.argsort(idx, kind="stable")
        ordered = idx[order]
        starts = np.flatnonzero(np.concatenate([[True], ordered[1:] != ordered[:-1]]))
        out[ordered[starts]] = np.maximum.reduceat(values[order], starts, axis=0)
    return out


def gather_rows(x: Tensor, idx) -> Tensor:
    """
    Row selection along the first axis; idx may have any shape (output shape is
    idx.shape + x.shape[1:]).
    """
    idx = _indices("gather_rows", idx, x.shape[0])
    n = x.shape[0]
    return _emit([x], x.data[idx], lambda g: (segment_sum(g, idx, n),))


def scatter_add_rows(dst: Tensor, idx, src: Tensor) -> Tensor:
    idx = _indices("scatter_add_rows", idx, dst.shape[0])
    if src.shape != idx.shape + dst.shape[1:]:
        raise LcpShapeError("scatter_add_rows", dst.shape, src.shape)
    out = dst.data + segment_sum(src.data, idx, dst.shape[0])
    return _emit([dst, src], out, lambda g: (g, g[idx]))


def segment_softmax(x: Tensor, segments, count: int) -> Tensor:
    """
    Softmax over rows sharing the same segment id, independently per column.
    """
    seg = _indices("segment_softmax", segments, count)
    if seg.shape != x.shape[:1]:
        raise LcpShapeError("segment_softmax", x.shape, seg.shape)
    _check_finite("segment_softmax", x.data)
    top = segment_max(x.data, seg, count)
    e = np.exp(x.data - top[seg])
    y = e / segment_sum(e, seg, count)[seg]

    def backward(g):
        return (y * (g - segment_sum(g * y, seg, count)[seg]),)

    return _emit([x], y, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if x.shape[-1] < 1 or gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise LcpShapeError("layer_norm", x.shape, gain.shape, bias.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x.data.var(axis=-1, keepdims=True) + eps)
    xhat = (x.data - mu) * inv
    gd = gain.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _emit([x, gain, bias], xhat * gd + bias.data, backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """
    Mean negative log-likelihood of integer labels under softmax(logits).
    """
    if logits.ndim != 2:
        raise LcpShapeError("cross_entropy", logits.shape)
    n, classes = logits.shape
    labels = _indices("cross_entropy labels", labels, classes)
    if labels.shape != (n,):
        raise LcpShapeError("cross_entropy", logits.shape, labels.shape)
    _check_finite("cross_entropy", logits.data)
    e = np.exp(logits.data - logits.data.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    picked = p[np.arange(n), labels]
    loss = -np.log(np.maximum(picked, LOG_CLAMP)).mean()

    def backward(g):
        grad = p.copy()
        grad[np.arange(n), labels] -= 1.0
        grad *= (picked > LOG_CLAMP)[:, None]
        return (grad * (g / n),)

    return _emit([logits], np.asarray(loss, dtype=logits.dtype), backward)


def concat(tensors: List[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = _axis("concat", tensors[0], axis)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise LcpShapeError("concat", *(t.shape for t in tensors))
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit(tensors, out, lambda g: tuple(np.split(g, bounds, axis=axis)))


def reshape(x: Tensor, shape: Tuple[int, ...]) -> Tensor:
    original = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise LcpShapeError("reshape", original, shape)
    return _emit([x], out, lambda g: (g.reshape(original),))


def transpose(x: Tensor, axes: Tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    return _emit([x], np.transpose(x.data, axes), lambda g: (np.transpose(g, inverse),))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out
