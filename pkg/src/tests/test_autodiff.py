import numpy as np
import pytest

from lcpformer.autodiff import Tape, Tensor, active_tape, backward
from lcpformer.autodiff.gradcheck import finite_diff_check
from lcpformer.autodiff.ops import (
    add,
    concat,
    cross_entropy,
    gather_rows,
    layer_norm,
    linear,
    matmul,
    mul,
    reduce,
    relu,
    reshape,
    scale,
    scatter_add_rows,
    segment_max,
    segment_softmax,
    segment_sum,
    softmax,
    sub,
    transpose,
)
from lcpformer.errors import LcpError, LcpIndexError, LcpNonFiniteError, LcpShapeError
from lcpformer.utils import ordered_map
from tests.utils import LcpTester


def param(shape, seed: int = 0, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(np.random.default_rng(seed).uniform(low, high, size=shape), requires_grad=True)


def total(x: Tensor) -> Tensor:
    return reduce(x, None, "sum")


def weighted_total(x: Tensor, seed: int = 99) -> Tensor:
    # Random projection to a scalar, so that every output entry matters
    w = np.random.default_rng(seed).normal(size=x.shape)
    return total(mul(x, Tensor(w)))


class TestAutodiff(LcpTester):
    def check(self, f, *params: Tensor, tol: float = 1e-6):
        report = finite_diff_check(f, [(f"p{i}", p) for i, p in enumerate(params)], tol=tol)
        assert report.passed, f"Gradient mismatch: {report.failures}"

    def test_matmul_values(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(matmul(Tensor(np.eye(2)), Tensor(m)).data, m)
        out = matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]), Tensor([[0.0, 1.0], [1.0, 0.0]]))
        assert np.array_equal(out.data, [[0.0, 1.0], [0.0, 0.0]])

    def test_matmul_naive_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
        expected = np.zeros((3, 5))
        for i in range(3):
            for j in range(5):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        assert np.allclose(matmul(Tensor(a), Tensor(b)).data, expected, atol=1e-12)

    def test_matmul_broadcast(self):
        a, b = param((2, 1, 3, 4)), param((5, 4, 2), seed=1)
        assert matmul(a, b).shape == (2, 5, 3, 2)
        self.check(lambda: weighted_total(matmul(a, b)), a, b)

    def test_matmul_shape_error(self):
        with pytest.raises(LcpShapeError, match=r"matmul: incompatible shapes \(2, 3\) vs \(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_matmul_gradient_of_sum(self):
        a, b = param((2, 3)), param((3, 4), seed=1)
        with Tape() as tape:
            tape.backward(total(matmul(a, b)))
        assert np.allclose(a.grad, np.ones((2, 4)) @ b.data.T)
        self.check(lambda: total(matmul(a, b)), a, b)

    def test_softmax_values(self):
        assert np.allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3, 1 / 3, 1 / 3])
        assert np.allclose(softmax(Tensor([0.0, np.log(2.0)])).data, [1 / 3, 2 / 3])
        assert np.array_equal(softmax(Tensor([7.5])).data, [1.0])
        rows = softmax(Tensor(np.random.default_rng(0).normal(size=(6, 5)) * 30), axis=0).data
        assert np.allclose(rows.sum(axis=0), 1.0, atol=1e-6)

    def test_softmax_non_finite(self):
        with pytest.raises(LcpNonFiniteError):
            softmax(Tensor([0.0, np.nan]))

    def test_softmax_gradient(self):
        x = param((3, 4))
        self.check(lambda: weighted_total(softmax(x, axis=1)), x)
        self.check(lambda: weighted_total(softmax(x, axis=0)), x)

    def test_elementwise_values(self):
        assert np.array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
        a = Tensor([1.5, -2.0])
        assert np.array_equal(add(a, 0.0).data, a.data)
        assert np.array_equal(sub(a, a).data, [0.0, 0.0])
        assert np.array_equal(scale(a, 2.0).data, [3.0, -4.0])
        assert np.array_equal((a * a).data, [2.25, 4.0])

    def test_elementwise_shape_error(self):
        with pytest.raises(LcpShapeError):
            add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_relu_gradient(self):
        x = Tensor([-1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(total(relu(x)))
        assert np.array_equal(x.grad, [0.0, 1.0])

    def test_elementwise_gradients(self):
        a, b = param((3, 4)), param((4,), seed=1)
        self.check(lambda: weighted_total(add(a, b)), a, b)
        self.check(lambda: weighted_total(sub(a, b)), a, b)
        self.check(lambda: weighted_total(mul(a, b)), a, b)
        self.check(lambda: weighted_total(scale(a, -3.0)), a)
        # Away from the kink
        c = param((3, 4), seed=2, low=0.1, high=1.0)
        self.check(lambda: weighted_total(relu(mul(c, Tensor(np.where(np.arange(12).reshape(3, 4) % 2, 1.0, -1.0))))), c)

    def test_reduce_values(self):
        assert np.array_equal(reduce(Tensor([[1.0, 5.0], [3.0, 2.0]]), 0, "max").data, [3.0, 5.0])
        assert reduce(Tensor([2.0, 4.0]), 0, "mean").item() == 3.0
        assert reduce(Tensor([[1.0, 2.0], [3.0, 4.0]]), None, "sum").item() == 10.0
        assert reduce(Tensor(np.ones((2, 3))), 1, "sum", keepdims=True).shape == (2, 1)

    def test_reduce_max_gradient(self):
        x = Tensor([1.0, 5.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(reduce(x, 0, "max"))
        assert np.array_equal(x.grad, [0.0, 1.0])

        # First maximal slot wins on ties
        y = Tensor([2.0, 2.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(reduce(y, 0, "max"))
        assert np.array_equal(y.grad, [1.0, 0.0])

    def test_reduce_gradients(self):
        x = param((3, 4, 2))
        for kind in ["sum", "mean", "max"]:
            self.check(lambda kind=kind: weighted_total(reduce(x, 1, kind)), x)
            self.check(lambda kind=kind: weighted_total(reduce(x, -1, kind, keepdims=True)), x)

    def test_reduce_errors(self):
        with pytest.raises(LcpShapeError, match="empty axis"):
            reduce(Tensor(np.zeros((0, 3))), 0, "max")
        with pytest.raises(LcpShapeError, match="axis 2"):
            reduce(Tensor(np.zeros((2, 3))), 2, "sum")

    def test_gather_scatter_values(self):
        assert np.array_equal(gather_rows(Tensor([[1.0], [2.0], [3.0]]), [2, 0]).data, [[3.0], [1.0]])
        out = scatter_add_rows(Tensor(np.zeros((3, 1))), [0, 0], Tensor([[1.0], [2.0]]))
        assert np.array_equal(out.data, [[3.0], [0.0], [0.0]])

    def test_gather_scatter_permutation(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(10, 4)))
        order = rng.permutation(10)
        back = scatter_add_rows(Tensor(np.zeros((10, 4))), order, gather_rows(x, order))
        assert np.array_equal(back.data, x.data)

    def test_gather_scatter_gradients(self):
        x, src = param((5, 3)), param((2, 4, 3), seed=1)
        idx = np.array([[0, 4, 4, 1], [2, 0, 3, 3]])
        self.check(lambda: weighted_total(gather_rows(x, idx)), x)
        self.check(lambda: weighted_total(scatter_add_rows(x, idx, src)), x, src)

    def test_index_errors(self):
        with pytest.raises(LcpIndexError):
            gather_rows(Tensor(np.zeros((3, 1))), [3])
        with pytest.raises(LcpIndexError):
            scatter_add_rows(Tensor(np.zeros((3, 1))), [-1], Tensor(np.zeros((1, 1))))

    def test_segment_softmax(self):
        x = Tensor([[0.0], [np.log(2.0)], [5.0]])
        out = segment_softmax(x, [0, 0, 1], 2).data
        assert np.allclose(out, [[1 / 3], [2 / 3], [1.0]])
        p = param((6, 3))
        segments = np.array([1, 0, 1, 2, 1, 0])
        self.check(lambda: weighted_total(segment_softmax(p, segments, 3)), p)

    def test_segment_reductions(self):
        rng = np.random.default_rng(41)
        values = rng.normal(size=(12, 2, 3))
        idx = rng.integers(0, 5, size=12)
        idx[idx == 3] = 4
        sums = np.zeros((5, 2, 3))
        np.add.at(sums, idx, values)
        assert np.allclose(segment_sum(values, idx, 5), sums, atol=1e-14)
        maxima = segment_max(values, idx, 5)
        for r in range(5):
            expected = values[idx == r].max(axis=0) if np.any(idx == r) else np.full((2, 3), -np.inf)
            assert np.array_equal(maxima[r], expected), r

        # Index arrays of any shape address the leading axes
        grid = values.reshape(3, 4, 6)
        assert np.allclose(segment_sum(grid, idx.reshape(3, 4), 5), sums.reshape(5, 6), atol=1e-14)
        assert np.array_equal(segment_sum(np.zeros((0, 2)), np.zeros(0, dtype=int), 3), np.zeros((3, 2)))

    def test_layer_norm_values(self):
        gain, bias = Tensor(np.ones(3)), Tensor([0.5, -1.0, 2.0])
        assert np.allclose(layer_norm(Tensor([[4.0, 4.0, 4.0]]), gain, bias).data, [[0.5, -1.0, 2.0]])
        row = np.array([[-1.0, 1.0]])
        assert np.allclose(layer_norm(Tensor(row), Tensor(np.ones(2)), Tensor(np.zeros(2))).data, row, atol=1e-5)

    def test_layer_norm_gradient(self):
        x, gain, bias = param((2, 3, 5)), param((5,), seed=1), param((5,), seed=2)
        self.check(lambda: weighted_total(layer_norm(x, gain, bias)), x, gain, bias)

    def test_layer_norm_shape_error(self):
        with pytest.raises(LcpShapeError):
            layer_norm(Tensor(np.zeros((2, 3))), Tensor(np.ones(2)), Tensor(np.zeros(2)))

    def test_cross_entropy_values(self):
        assert cross_entropy(Tensor([[60.0, 0.0, 0.0]]), [0]).item() < 1e-6
        assert np.isclose(cross_entropy(Tensor(np.zeros((4, 5))), [0, 1, 2, 3]).item(), np.log(5.0))

    def test_cross_entropy_gradient(self):
        logits = param((4, 3))
        self.check(lambda: cross_entropy(logits, [2, 0, 1, 1]), logits)

    def test_cross_entropy_errors(self):
        with pytest.raises(LcpIndexError):
            cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
        with pytest.raises(LcpShapeError):
            cross_entropy(Tensor(np.zeros((2, 3))), [0])
        with pytest.raises(LcpNonFiniteError):
            cross_entropy(Tensor([[np.inf, 0.0]]), [0])

    def test_shape_ops_gradients(self):
        a, b = param((2, 3)), param((2, 4), seed=1)
        self.check(lambda: weighted_total(concat([a, b], axis=1)), a, b)
        self.check(lambda: weighted_total(reshape(b, (4, 2))), b)
        c = param((2, 3, 4), seed=2)
        self.check(lambda: weighted_total(transpose(c, (2, 0, 1))), c)
        w, bias = param((4, 2), seed=3), param((2,), seed=4)
        self.check(lambda: weighted_total(linear(b, w, bias)), b, w, bias)

    def test_reshape_error(self):
        with pytest.raises(LcpShapeError):
            reshape(Tensor(np.zeros(6)), (4, 2))

    def test_backward_product(self):
        x, y = Tensor([2.0, 3.0], requires_grad=True), Tensor([5.0, 7.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(total(mul(x, y)))
        assert np.array_equal(x.grad, y.data)
        assert np.array_equal(y.grad, x.data)

    def test_backward_composite(self):
        w1, w2, x = param((3, 4)), param((4, 2), seed=1), param((5, 3), seed=2)
        labels = [0, 1, 1, 0, 1]
        self.check(lambda: cross_entropy(matmul(relu(matmul(x, w1)), w2), labels), w1, w2, x, tol=1e-5)

    def test_backward_constant_leaf(self):
        x, c = Tensor([1.0, 2.0], requires_grad=True), Tensor([3.0, 4.0])
        with Tape() as tape:
            root = total(mul(x, c))
            backward(root)
        assert np.array_equal(x.grad, c.data)
        assert c.grad is None
        assert tape.grad(c) is None

    def test_backward_unused_leaf(self):
        x, unused = Tensor([1.0], requires_grad=True), Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = mul(unused, 1.0)
            tape.backward(total(mul(x, 2.0)))
        assert y.shape == (2,)
        assert np.array_equal(unused.grad, [0.0, 0.0])

    def test_backward_errors(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = mul(x, 2.0)
            with pytest.raises(LcpShapeError, match="root must be scalar"):
                tape.backward(y)
        with pytest.raises(LcpError, match="not recorded on any tape"):
            backward(Tensor(1.0))

    def test_no_tape_no_record(self):
        x = Tensor([1.0], requires_grad=True)
        assert active_tape() is None
        y = mul(x, 3.0)
        assert y.tape is None and y.node_id is None

    def test_threaded_tapes(self):
        # Independent tapes on worker threads share the leaves and agree with a sequential run
        w = param((4, 3))
        inputs = [np.random.default_rng(s).normal(size=(6, 4)) for s in range(8)]

        def grad_of(x: np.ndarray) -> np.ndarray:
            with Tape() as tape:
                tape.backward(total(relu(matmul(Tensor(x), w))), populate=False)
            return tape.grad(w)

        sequential = ordered_map(grad_of, inputs, 1)
        threaded = ordered_map(grad_of, inputs, 4)
        for a, b in zip(sequential, threaded):
            assert np.array_equal(a, b)
        assert w.grad is None

    def test_gradcheck_detects_wrong_rule(self):
        def bad_square(x: Tensor) -> Tensor:
            # Recorded rule misses the factor 2
            tape = active_tape()
            out = x.data**2
            return Tensor(out) if tape is None else tape.record([x], out, lambda g: (g * x.data,))

        x = param((4,), low=0.5, high=1.0)
        report = finite_diff_check(lambda: total(bad_square(x)), [("x", x)], tol=1e-6)
        assert not report.passed
        assert list(report.failures) == ["x"]
        assert report.worst > 0.1

    def test_gradcheck_sampled_entries(self):
        w, v = param((20, 10)), Tensor(np.random.default_rng(1).normal(size=(10, 4)))
        report = finite_diff_check(lambda: weighted_total(matmul(w, v)), [("w", w)], max_entries=3, seed=4)
        assert report.passed
        assert report.errors["w"] < 1e-6

    def test_gradcheck_restores_values(self):
        w = param((3, 3))
        before = w.data.copy()
        finite_diff_check(lambda: weighted_total(softmax(w)), [("w", w)])
        assert np.array_equal(w.data, before)

    def test_gradcheck_needs_double(self):
        w = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
        with pytest.raises(LcpError, match="must be float64"):
            finite_diff_check(lambda: total(w), [("w", w)])
