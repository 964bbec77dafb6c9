from dataclasses import dataclass, field, fields
from typing import Callable, List, Optional, Tuple

import numpy as np

from lcpformer.autodiff import Tensor


class ParamSet:
    """
    Mixin for dataclasses holding learnable tensors: named traversal in declaration order.
    """

    def named_tensors(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            name = f"{prefix}{f.name}"
            if isinstance(value, Tensor):
                out.append((name, value))
            elif isinstance(value, ParamSet):
                out.extend(value.named_tensors(name + "."))
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, ParamSet):
                        out.extend(item.named_tensors(f"{name}.{i}."))
        return out

    def tensors(self) -> List[Tensor]:
        return [t for _, t in self.named_tensors()]


class ParamInit:
    """
    Seeded initializer: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
    """

    def __init__(self, seed: int, dtype: np.dtype = np.float64):
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype

    def uniform(self, fan_in: int, shape: Tuple[int, ...]) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(self.rng.uniform(-bound, bound, size=shape).astype(self.dtype), requires_grad=True)

    def constant(self, value: float, shape: Tuple[int, ...]) -> Tensor:
        return Tensor(np.full(shape, value, dtype=self.dtype), requires_grad=True)

    def linear(self, n_in: int, n_out: int) -> "LinearParams":
        return LinearParams(self.uniform(n_in, (n_in, n_out)), self.uniform(n_in, (n_out,)))


@dataclass
class LinearParams(ParamSet):
    weight: Tensor
    bias: Tensor


@dataclass
class PEParams(ParamSet):
    fc1: LinearParams
    fc2: LinearParams


@dataclass
class AttentionParams(ParamSet):
    # Per-head projections stacked as heads x C x d_h
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int

    @property
    def head_width(self) -> int:
        return self.wq.shape[2]


@dataclass
class NormParams(ParamSet):
    gain: Tensor
    bias: Tensor


@dataclass
class TransformerLayerParams(ParamSet):
    attention: AttentionParams
    pe: PEParams
    ffn1: LinearParams
    ffn2: LinearParams
    norm1: Optional[NormParams] = None
    norm2: Optional[NormParams] = None


@dataclass
class LCPParams(ParamSet):
    # The per-region 1x1 convolution, 2C -> C
    conv: LinearParams


@dataclass
class BlockParams(ParamSet):
    before: List[TransformerLayerParams]
    # None when the network runs without local context propagation
    lcp: Optional[LCPParams]
    after: List[TransformerLayerParams]
    proj: LinearParams


@dataclass
class LCPFormerParams(ParamSet):
    embed: LinearParams
    blocks: List[BlockParams]
    upsample: List[LinearParams] = field(default_factory=list)
    head: List[LinearParams] = field(default_factory=list)


def init_pe(init: ParamInit, width: int) -> PEParams:
    return PEParams(init.linear(3, width), init.linear(width, width))


def init_attention(init: ParamInit, width: int, heads: int) -> AttentionParams:
    head_width = width // heads
    return AttentionParams(
        init.uniform(width, (heads, width, head_width)),
        init.uniform(width, (heads, width, head_width)),
        init.uniform(width, (heads, width, head_width)),
        init.uniform(heads * head_width, (heads * head_width, width)),
        heads,
    )


def init_norm(init: ParamInit, width: int) -> NormParams:
    return NormParams(init.constant(1.0, (width,)), init.constant(0.0, (width,)))


def init_transformer_layer(init: ParamInit, width: int, heads: int, norm: bool) -> TransformerLayerParams:
    return TransformerLayerParams(
        attention=init_attention(init, width, heads),
        pe=init_pe(init, width),
        ffn1=init.linear(width, 2 * width),
        ffn2=init.linear(2 * width, width),
        norm1=init_norm(init, width) if norm else None,
        norm2=init_norm(init, width) if norm else None,
    )


def init_lcp(init: ParamInit, width: int) -> LCPParams:
    return LCPParams(init.linear(2 * width, width))


def param_count(params: ParamSet, exclude: Callable[[str], bool] = None) -> int:
    return sum(t.size for name, t in params.named_tensors() if exclude is None or not exclude(name))


def is_lcp_param(name: str) -> bool:
    return ".lcp." in name


def zero_params(params: ParamSet):
    for t in params.tensors():
        t.data = np.zeros_like(t.data)
