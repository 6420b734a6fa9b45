import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsum import numerics as nm
from avsum.numerics import GradientTape, Matrix


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop reference product."""
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        m = Matrix([[1.0, 2.0], [3.0, 4.0]])
        out = nm.matmul(Matrix(np.eye(2)), m)
        np.testing.assert_array_equal(out.data, m.data)

    def test_row_times_column(self):
        out = nm.matmul(Matrix([[1.0, 2.0]]), Matrix([[3.0], [4.0]]))
        assert out.item() == 11.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        out = nm.matmul(Matrix(a), Matrix(b))
        np.testing.assert_allclose(out.data, naive_matmul(a, b), rtol=1e-12)

    def test_dimension_mismatch_reports_both_shapes(self):
        with pytest.raises(ValueError, match=r"2x3 @ 2x2"):
            nm.matmul(Matrix(np.ones((2, 3))), Matrix(np.ones((2, 2))))

    def test_associative_on_random_triples(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            a, b, c = (Matrix(rng.normal(size=(4, 4))) for _ in range(3))
            left = nm.matmul(nm.matmul(a, b), c).data
            right = nm.matmul(a, nm.matmul(b, c)).data
            np.testing.assert_allclose(left, right, rtol=1e-10)


class TestElementwise:
    def test_tanh_zero(self):
        assert nm.elementwise("tanh", Matrix([[0.0]])).item() == 0.0

    def test_sigmoid_zero(self):
        assert nm.elementwise("sigmoid", Matrix([[0.0]])).item() == 0.5

    def test_saturation_matches_high_precision(self):
        mp = pytest.importorskip("mpmath")
        for x in (20.0, -20.0, 100.0, -100.0):
            got = nm.tanh(Matrix([[x]])).item()
            want = float(mp.tanh(mp.mpf(x)))
            assert math.isfinite(got)
            assert got == pytest.approx(want, abs=1e-15)
            s = nm.sigmoid(Matrix([[x]])).item()
            assert math.isfinite(s)
            assert s == pytest.approx(float(1 / (1 + mp.exp(-mp.mpf(x)))), abs=1e-15)

    def test_sigmoid_never_overflows(self):
        out = nm.sigmoid(Matrix([[-800.0, 800.0]]))
        assert np.all(np.isfinite(out.data))

    def test_add_mul_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            nm.elementwise("add", Matrix(np.ones((2, 2))), Matrix(np.ones((2, 3))))
        with pytest.raises(ValueError, match="shape mismatch"):
            nm.elementwise("mul", Matrix(np.ones((1, 2))), Matrix(np.ones((2, 1))))

    def test_unknown_op_rejected(self):
        with pytest.raises(ValueError, match="unknown elementwise"):
            nm.elementwise("relu", Matrix([[1.0]]))


class TestSoftmax:
    def test_uniform_on_equal_inputs(self):
        np.testing.assert_allclose(nm.softmax([0.0, 0.0, 0.0]), np.full(3, 1 / 3))

    def test_large_inputs_no_overflow(self):
        out = nm.softmax([1000.0, 1000.0])
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_matches_high_precision_oracle(self):
        mp = pytest.importorskip("mpmath")
        xs = [1.0, 2.0, 3.0]
        exps = [mp.exp(mp.mpf(x)) for x in xs]
        total = sum(exps)
        want = np.array([float(e / total) for e in exps])
        np.testing.assert_allclose(nm.softmax(xs), want, rtol=1e-14)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            nm.softmax([])

    @given(
        st.lists(
            st.floats(min_value=-50, max_value=50, allow_nan=False),
            min_size=1,
            max_size=12,
        ),
        st.floats(min_value=-100, max_value=100, allow_nan=False),
    )
    @settings(max_examples=150, deadline=None)
    def test_sums_to_one_and_shift_invariant(self, xs, shift):
        base = nm.softmax(xs)
        assert abs(base.sum() - 1.0) <= 1e-12
        assert np.all(base > 0)
        shifted = nm.softmax([x + shift for x in xs])
        np.testing.assert_allclose(shifted, base, atol=1e-12)


def central_diff(fn, value: Matrix, step: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(value.data)
    flat = value.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn()
        flat[i] = orig - step
        down = fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad


class TestBackward:
    def test_rejects_non_scalar(self):
        with GradientTape() as tape:
            y = nm.add(Matrix([[1.0], [2.0]]), Matrix([[3.0], [4.0]]))
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(y)

    def test_square_at_three(self):
        x = Matrix([[3.0]])
        with GradientTape() as tape:
            y = nm.mul(x, x)
        assert tape.backward(y).get(x)[0, 0] == 6.0

    def test_untouched_value_gets_zero(self):
        w = Matrix([[5.0]])
        x = Matrix([[2.0]])
        with GradientTape() as tape:
            y = nm.mul(x, x)
        g = tape.backward(y)
        assert w not in g
        np.testing.assert_array_equal(g.get(w), [[0.0]])

    def test_linear_loss_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        w = Matrix(rng.normal(size=(3, 4)))
        x = Matrix(rng.normal(size=(4, 1)))
        with GradientTape() as tape:
            loss = nm.sum_all(nm.matmul(w, x))
        analytic = tape.backward(loss).get(w)
        numeric = central_diff(lambda: float((w.data @ x.data).sum()), w)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-9)

    def test_gradient_accumulates_across_uses(self):
        x = Matrix([[2.0]])
        with GradientTape() as tape:
            y = nm.add(nm.mul(x, x), nm.mul(x, x))  # 2x^2
        assert tape.backward(y).get(x)[0, 0] == pytest.approx(8.0)

    @pytest.mark.parametrize(
        "builder",
        [
            lambda a, b: nm.sum_all(nm.mul(nm.tanh(nm.matmul(a, b)), nm.sigmoid(nm.matmul(a, b)))),
            lambda a, b: nm.sum_all(nm.softmax_col(nm.matmul(nm.hstack([a, a]), nm.vstack([b, b])))),
            lambda a, b: nm.sum_all(nm.add_col(nm.matmul(a, nm.hstack([b, b])), nm.matmul(a, b))),
            lambda a, b: nm.sum_all(nm.take_rows(nm.transpose(nm.matmul(a, b)), [0, 0])),
            lambda a, b: nm.sum_all(nm.sub(nm.scale(nm.matmul(a, b), 1.7), nm.matmul(a, b))),
        ],
    )
    def test_composite_ops_match_finite_differences(self, builder):
        rng = np.random.default_rng(9)
        a = Matrix(rng.normal(size=(3, 2)))
        b = Matrix(rng.normal(size=(2, 1)))
        with GradientTape() as tape:
            loss = builder(a, b)
        grads = tape.backward(loss)

        def value():
            return builder(a, b).item()

        for param in (a, b):
            numeric = central_diff(lambda: value(), param)
            analytic = grads.get(param)
            err = np.abs(analytic - numeric) / np.maximum(
                np.abs(analytic) + np.abs(numeric), 1e-4
            )
            assert err.max() < 1e-4

    def test_reverse_order_is_strict_reverse_of_creation(self):
        x = Matrix([[1.0]])
        with GradientTape() as tape:
            a = nm.mul(x, x)
            b = nm.tanh(a)
            nm.add(a, b)
        outs = [op[0] for op in tape._ops]
        assert outs == [a, b, outs[-1]]


class TestMatrixInvariants:
    def test_one_dim_input_becomes_column(self):
        m = Matrix([1.0, 2.0, 3.0])
        assert m.shape == (3, 1)

    def test_rejects_3d(self):
        with pytest.raises(ValueError, match="2-D"):
            Matrix(np.zeros((2, 2, 2)))

    def test_finite_after_saturating_ops(self):
        big = Matrix([[1e6, -1e6]])
        assert np.all(np.isfinite(nm.tanh(big).data))
        assert np.all(np.isfinite(nm.sigmoid(big).data))
