from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from lcpformer.autodiff import Tensor
from lcpformer.errors import LcpConfigError, LcpShapeError

# Optimizer kinds
SGD = "sgd"
ADAMW = "adamw"
OPTIMIZERS = [SGD, ADAMW]


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    return lr0 * 0.5 * (1.0 + np.cos(np.pi * epoch / total_epochs))


@dataclass
class OptimizerState:
    kind: str
    lr: float
    weight_decay: float = 0.0
    momentum: float = 0.9
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    # Per-parameter slots by slot name: "momentum", or "m" and "v"
    slots: Dict[str, List[np.ndarray]] = field(default_factory=dict)

    @staticmethod
    def create(kind: str, params: Sequence[Tensor], lr: float, **kwargs) -> "OptimizerState":
        if kind not in OPTIMIZERS:
            raise LcpConfigError(f"Unknown optimizer: {kind} (known: {', '.join(OPTIMIZERS)})")
        names = ["momentum"] if kind == SGD else ["m", "v"]
        return OptimizerState(kind, lr, slots={n: [np.zeros_like(p.data) for p in params] for n in names}, **kwargs)

    def named_slots(self, param_names: Sequence[str]) -> List[Tuple[str, np.ndarray]]:
        out = [("optim/step", np.array([self.step], dtype=np.float64))]
        for slot, values in self.slots.items():
            out.extend((f"optim/{slot}/{name}", v) for name, v in zip(param_names, values))
        return out

    def load_slots(self, param_names: Sequence[str], tensors: Dict[str, np.ndarray]):
        self.step = int(tensors.get("optim/step", np.zeros(1))[0])
        for slot, values in self.slots.items():
            for i, name in enumerate(param_names):
                stored = tensors.get(f"optim/{slot}/{name}")
                if stored is not None:
                    values[i] = stored.astype(values[i].dtype).reshape(values[i].shape)


def _check(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: OptimizerState, slots: List[str]):
    for name in slots:
        if len(state.slots.get(name, [])) != len(params):
            raise LcpShapeError(f"optimizer slot '{name}' count", (len(state.slots.get(name, [])),), (len(params),))
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise LcpShapeError("optimizer gradient", p.shape, g.shape)


def sgd_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: OptimizerState):
    """
    Momentum SGD with L2 weight decay folded into the gradient.
    """
    _check(params, grads, state, ["momentum"])
    state.step += 1
    for i, (p, g) in enumerate(zip(params, grads)):
        g = g + state.weight_decay * p.data
        buf = state.momentum * state.slots["momentum"][i] + g
        state.slots["momentum"][i] = buf
        p.data = (p.data - state.lr * buf).astype(p.dtype, copy=False)


def adamw_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: OptimizerState):
    """
    Adam with decoupled weight decay (applied to the parameter before the moment update).
    """
    _check(params, grads, state, ["m", "v"])
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        m = b1 * state.slots["m"][i] + (1.0 - b1) * g
        v = b2 * state.slots["v"][i] + (1.0 - b2) * g * g
        state.slots["m"][i], state.slots["v"][i] = m, v
        decayed = p.data * (1.0 - state.lr * state.weight_decay)
        p.data = (decayed - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)


def optimizer_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: OptimizerState):
    (sgd_step if state.kind == SGD else adamw_step)(params, grads, state)


def clip_grad_norm(grads: List[np.ndarray], max_norm: float) -> float:
    """
    Rescale gradients in place so that their global norm is at most max_norm; returns the norm before clipping.
    """
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for i, g in enumerate(grads):
            grads[i] = g * factor
    return total
