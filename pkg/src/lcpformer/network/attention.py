from typing import Union

import numpy as np

from lcpformer.autodiff import Tensor
from lcpformer.autodiff.ops import add, as_tensor, layer_norm, linear, matmul, relu, reshape, scale, softmax, transpose
from lcpformer.errors import LcpShapeError
from lcpformer.network.params import AttentionParams, LinearParams, PEParams, TransformerLayerParams

Coords = Union[Tensor, np.ndarray]


def mlp2(x: Tensor, fc1: LinearParams, fc2: LinearParams) -> Tensor:
    return linear(relu(linear(x, fc1.weight, fc1.bias)), fc2.weight, fc2.bias)


def positional_encode(coords: Coords, pe: PEParams) -> Tensor:
    coords = as_tensor(coords, pe.fc1.weight)
    if coords.shape[-1] != 3:
        raise LcpShapeError("positional_encode (expected ... x 3)", coords.shape)
    return mlp2(coords, pe.fc1, pe.fc2)


def mhsa(coords: Coords, features: Tensor, params: AttentionParams, pe: PEParams, return_weights: bool = False):
    """
    Multi-head self-attention inside each of the M regions of an M x K x C tensor.

    Scores are scaled by sqrt(d_h) and normalized over the key axis.
    """
    if features.ndim != 3 or features.shape[2] != params.wq.shape[1]:
        raise LcpShapeError("mhsa", features.shape, params.wq.shape)
    m, k, c = features.shape
    heads, head_width = params.heads, params.head_width
    x = add(features, positional_encode(coords, pe))

    def project(w: Tensor) -> Tensor:
        # heads x C x d_h as one C x (heads * d_h) matrix, then M x heads x K x d_h
        stacked = reshape(transpose(w, (1, 0, 2)), (c, heads * head_width))
        return transpose(reshape(matmul(x, stacked), (m, k, heads, head_width)), (0, 2, 1, 3))

    q, key, v = project(params.wq), project(params.wk), project(params.wv)
    weights = softmax(scale(matmul(q, transpose(key, (0, 1, 3, 2))), 1.0 / np.sqrt(head_width)), axis=-1)

    # Concatenate heads back along channels
    h = reshape(transpose(matmul(weights, v), (0, 2, 1, 3)), (m, k, heads * head_width))
    out = matmul(h, params.wo)
    return (out, weights) if return_weights else out


def transformer_layer(coords: Coords, features: Tensor, params: TransformerLayerParams) -> Tensor:
    y = add(mhsa(coords, features, params.attention, params.pe), features)
    if params.norm1 is not None:
        y = layer_norm(y, params.norm1.gain, params.norm1.bias)
    out = add(y, mlp2(y, params.ffn1, params.ffn2))
    if params.norm2 is not None:
        out = layer_norm(out, params.norm2.gain, params.norm2.bias)
    return out
