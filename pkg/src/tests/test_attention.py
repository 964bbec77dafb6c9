import numpy as np
import pytest

from lcpformer.autodiff import Tensor
from lcpformer.autodiff.gradcheck import finite_diff_check
from lcpformer.autodiff.ops import mul, reduce
from lcpformer.errors import LcpShapeError
from lcpformer.network.attention import mhsa, positional_encode, transformer_layer
from lcpformer.network.params import AttentionParams, ParamInit, PEParams, init_attention, init_pe, init_transformer_layer, zero_params
from tests.utils import LcpTester


def weighted_total(x: Tensor, seed: int = 99) -> Tensor:
    w = np.random.default_rng(seed).normal(size=x.shape)
    return reduce(mul(x, Tensor(w)), None, "sum")


def softmax_rows(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def mhsa_oracle(coords: np.ndarray, features: np.ndarray, p: AttentionParams, pe: PEParams) -> np.ndarray:
    # Region by region, head by head
    out = np.zeros_like(features)
    for j in range(features.shape[0]):
        hidden = np.maximum(coords[j] @ pe.fc1.weight.data + pe.fc1.bias.data, 0.0)
        f = features[j] + hidden @ pe.fc2.weight.data + pe.fc2.bias.data
        heads = []
        for h in range(p.heads):
            q, k, v = f @ p.wq.data[h], f @ p.wk.data[h], f @ p.wv.data[h]
            heads.append(softmax_rows(q @ k.T / np.sqrt(p.head_width)) @ v)
        out[j] = np.concatenate(heads, axis=1) @ p.wo.data
    return out


def region(m: int, k: int, c: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, size=(m, k, 3)), rng.normal(size=(m, k, c))


class TestAttention(LcpTester):
    def check(self, f, params, tol: float = 1e-5):
        report = finite_diff_check(f, params, tol=tol)
        assert report.passed, f"Gradient mismatch: {report.failures}"

    def test_pe_zero(self):
        pe = init_pe(ParamInit(0), 8)
        zero_params(pe)
        coords, _ = region(2, 3, 8)
        assert np.array_equal(positional_encode(coords, pe).data, np.zeros((2, 3, 8)))

    def test_pe_pointwise(self):
        pe = init_pe(ParamInit(1), 8)
        coords = np.array([[0.1, 0.2, 0.3], [0.5, -0.5, 0.0], [0.1, 0.2, 0.3]])
        out = positional_encode(coords, pe).data
        assert np.array_equal(out[0], out[2])
        assert not np.allclose(out[0], out[1])

    def test_pe_shape_error(self):
        with pytest.raises(LcpShapeError):
            positional_encode(np.zeros((4, 2)), init_pe(ParamInit(0), 8))

    def test_pe_gradient(self):
        pe = init_pe(ParamInit(2), 6)
        coords, _ = region(2, 4, 6, seed=3)
        self.check(lambda: weighted_total(positional_encode(coords, pe)), pe.named_tensors())

    def test_mhsa_oracle(self):
        init = ParamInit(4)
        p, pe = init_attention(init, 8, 2), init_pe(init, 8)
        for m, k in [(3, 5), (1, 2), (2, 2)]:
            coords, features = region(m, k, 8, seed=m * 10 + k)
            out = mhsa(coords, Tensor(features), p, pe).data
            assert out.shape == (m, k, 8)
            assert np.allclose(out, mhsa_oracle(coords, features, p, pe), atol=1e-12)

    def test_mhsa_single_token(self):
        init = ParamInit(5)
        p, pe = init_attention(init, 8, 4), init_pe(init, 8)
        coords, features = region(3, 1, 8, seed=6)
        x = features[:, 0] + positional_encode(coords[:, 0], pe).data
        expected = np.concatenate([x @ p.wv.data[h] for h in range(4)], axis=1) @ p.wo.data
        assert np.allclose(mhsa(coords, Tensor(features), p, pe).data[:, 0], expected, atol=1e-12)

    def test_mhsa_identical_tokens(self):
        init = ParamInit(7)
        p, pe = init_attention(init, 4, 2), init_pe(init, 4)
        coords, features = region(1, 3, 4, seed=8)
        coords[0, 2], features[0, 2] = coords[0, 0], features[0, 0]
        out = mhsa(coords, Tensor(features), p, pe).data
        assert np.allclose(out[0, 0], out[0, 2], atol=1e-12)

    def test_mhsa_weights(self):
        init = ParamInit(9)
        p, pe = init_attention(init, 8, 4), init_pe(init, 8)
        coords, features = region(2, 5, 8, seed=10)
        _, weights = mhsa(coords, Tensor(features), p, pe, return_weights=True)
        assert weights.shape == (2, 4, 5, 5)
        assert np.allclose(weights.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_mhsa_shape_error(self):
        init = ParamInit(0)
        with pytest.raises(LcpShapeError, match="mhsa"):
            mhsa(np.zeros((2, 3, 3)), Tensor(np.zeros((2, 3, 6))), init_attention(init, 8, 2), init_pe(init, 8))

    def test_mhsa_gradient(self):
        init = ParamInit(11)
        p, pe = init_attention(init, 4, 2), init_pe(init, 4)
        coords, features = region(2, 3, 4, seed=12)
        x = Tensor(features, requires_grad=True)
        self.check(lambda: weighted_total(mhsa(coords, x, p, pe)), p.named_tensors() + pe.named_tensors() + [("x", x)])

    def test_layer_zero_is_identity(self):
        layer = init_transformer_layer(ParamInit(13), 8, 2, norm=False)
        zero_params(layer)
        coords, features = region(3, 4, 8, seed=14)
        assert np.array_equal(transformer_layer(coords, Tensor(features), layer).data, features)

    def test_layer_permutation_equivariance(self):
        rng = np.random.default_rng(15)
        for trial in range(200):
            layer = init_transformer_layer(ParamInit(trial), 4, 2, norm=bool(trial % 2))
            m, k = int(rng.integers(1, 4)), int(rng.integers(1, 7))
            coords, features = region(m, k, 4, seed=1000 + trial)
            order = rng.permutation(k)
            out = transformer_layer(coords, Tensor(features), layer).data
            permuted = transformer_layer(coords[:, order], Tensor(features[:, order]), layer).data
            assert np.allclose(permuted, out[:, order], atol=1e-10), f"trial {trial}"

    def test_layer_norm_statistics(self):
        layer = init_transformer_layer(ParamInit(16), 8, 2, norm=True)
        coords, features = region(4, 5, 8, seed=17)
        out = transformer_layer(coords, Tensor(features), layer).data
        assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-9)
        assert np.allclose(out.var(axis=-1), 1.0, rtol=1e-3)

    def test_layer_gradient(self):
        for norm in [False, True]:
            layer = init_transformer_layer(ParamInit(18), 4, 2, norm=norm)
            coords, features = region(2, 3, 4, seed=19)
            x = Tensor(features, requires_grad=True)
            self.check(lambda layer=layer, x=x: weighted_total(transformer_layer(coords, x, layer)), layer.named_tensors() + [("x", x)])
