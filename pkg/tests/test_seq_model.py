import math

import numpy as np
import pytest

from avsum import numerics as nm
from avsum import seq_model as sm
from avsum.numerics import GradientTape, Matrix


def zero_layer(input_size: int, hidden: int) -> sm.LstmLayerParams:
    return sm.LstmLayerParams(
        Matrix(np.zeros((4 * hidden, input_size + hidden))),
        Matrix(np.zeros((4 * hidden, 1))),
        input_size,
    )


def random_params(rng, input_size, hidden, layers=1) -> sm.LstmParams:
    return sm.init_lstm_params(input_size, hidden, layers, rng, init_range=0.4)


def reference_cell(layer: sm.LstmLayerParams, x, h, c):
    """Independent per-gate numpy evaluation of one LSTM step (1-D vectors)."""
    def gate(name, squash):
        pre = (
            layer.gate_input_weight(name) @ x
            + layer.gate_recurrent_weight(name) @ h
            + layer.gate_bias(name)
        )
        return squash(pre)

    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i = gate("input", sig)
    f = gate("forget", sig)
    o = gate("output", sig)
    g = gate("candidate", np.tanh)
    c_next = f * c + i * g
    h_next = o * np.tanh(c_next)
    return h_next, c_next


def reference_forward(params: sm.LstmParams, feats: np.ndarray, reverse=False):
    """Unrolled reference loop over time and layers."""
    total = feats.shape[0]
    hidden = params.hidden_size
    hs = [np.zeros(hidden) for _ in params.layers]
    cs = [np.zeros(hidden) for _ in params.layers]
    rows = np.zeros((total, hidden))
    order = range(total - 1, -1, -1) if reverse else range(total)
    for t in order:
        inp = feats[t]
        for li, layer in enumerate(params.layers):
            hs[li], cs[li] = reference_cell(layer, inp, hs[li], cs[li])
            inp = hs[li]
        rows[t] = inp
    return rows


class TestCellStep:
    def test_zero_params_zero_input(self):
        layer = zero_layer(3, 2)
        h, c = sm.lstm_cell_step(layer, nm.zeros(3, 1), (nm.zeros(2, 1), nm.zeros(2, 1)))
        np.testing.assert_array_equal(h.data, np.zeros((2, 1)))
        np.testing.assert_array_equal(c.data, np.zeros((2, 1)))

    def test_bias_only_matches_hand_computation(self):
        # H=1, all weights zero, biases (i, f, o, g) = (0.3, -0.2, 0.5, 0.7)
        layer = sm.LstmLayerParams.from_gates(
            {
                "input": (np.zeros((1, 2)), np.zeros((1, 1)), np.array([0.3])),
                "forget": (np.zeros((1, 2)), np.zeros((1, 1)), np.array([-0.2])),
                "output": (np.zeros((1, 2)), np.zeros((1, 1)), np.array([0.5])),
                "candidate": (np.zeros((1, 2)), np.zeros((1, 1)), np.array([0.7])),
            }
        )
        h, c = sm.lstm_cell_step(layer, nm.zeros(2, 1), (nm.zeros(1, 1), nm.zeros(1, 1)))
        sig = lambda v: 1.0 / (1.0 + math.exp(-v))
        c_want = sig(0.3) * math.tanh(0.7)
        h_want = sig(0.5) * math.tanh(c_want)
        assert c.item() == pytest.approx(c_want, rel=1e-12)
        assert h.item() == pytest.approx(h_want, rel=1e-12)

    def test_matches_reference_cell(self):
        rng = np.random.default_rng(2)
        layer = random_params(rng, 4, 3).layers[0]
        x = rng.normal(size=4)
        h0 = rng.normal(size=3)
        c0 = rng.normal(size=3)
        h, c = sm.lstm_cell_step(layer, Matrix(x), (Matrix(h0), Matrix(c0)))
        h_ref, c_ref = reference_cell(layer, x, h0, c0)
        np.testing.assert_allclose(h.data.reshape(-1), h_ref, rtol=1e-12)
        np.testing.assert_allclose(c.data.reshape(-1), c_ref, rtol=1e-12)

    def test_dimension_mismatch_rejected(self):
        layer = zero_layer(3, 2)
        with pytest.raises(ValueError, match="3x1"):
            sm.lstm_cell_step(layer, nm.zeros(2, 1), (nm.zeros(2, 1), nm.zeros(2, 1)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        params = random_params(rng, 3, 2)
        layer = params.layers[0]
        x = rng.normal(size=(3, 1))

        def loss_value():
            h, _ = sm.lstm_cell_step(
                layer, Matrix(x), (nm.zeros(2, 1), nm.zeros(2, 1))
            )
            return float(h.data.sum())

        with GradientTape() as tape:
            h, _ = sm.lstm_cell_step(layer, Matrix(x), (nm.zeros(2, 1), nm.zeros(2, 1)))
            loss = nm.sum_all(h)
        analytic = tape.backward(loss).get(layer.weights)

        step = 1e-6
        flat = layer.weights.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_value()
            flat[i] = orig - step
            down = loss_value()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            assert analytic.reshape(-1)[i] == pytest.approx(numeric, rel=1e-4, abs=1e-8)

    def test_hidden_state_bounded_by_one(self):
        rng = np.random.default_rng(13)
        layer = random_params(rng, 3, 4).layers[0]
        h = nm.zeros(4, 1)
        c = nm.zeros(4, 1)
        for t in range(50):
            h, c = sm.lstm_cell_step(layer, Matrix(rng.normal(size=(3, 1)) * 5), (h, c))
            assert np.all(np.abs(h.data) <= 1.0)


class TestForward:
    def test_single_step_equals_cell(self):
        rng = np.random.default_rng(4)
        params = random_params(rng, 3, 2, layers=2)
        feats = rng.normal(size=(1, 3))
        out = sm.lstm_forward(params, feats)
        inp = Matrix(feats[0].reshape(-1, 1))
        for layer in params.layers:
            inp, _ = sm.lstm_cell_step(layer, inp, (nm.zeros(2, 1), nm.zeros(2, 1)))
        np.testing.assert_allclose(out.data, inp.data.T, rtol=1e-12)

    def test_palindrome_reverse_symmetry(self):
        rng = np.random.default_rng(5)
        params = random_params(rng, 2, 3)
        half = rng.normal(size=(3, 2))
        feats = np.vstack([half, half[::-1]])  # palindrome in time
        fwd = sm.lstm_forward(params, feats, reverse=False).data
        bwd = sm.lstm_forward(params, feats, reverse=True).data
        np.testing.assert_allclose(bwd, fwd[::-1], rtol=1e-10)

    def test_matches_unrolled_reference(self):
        rng = np.random.default_rng(6)
        params = random_params(rng, 4, 2, layers=2)
        feats = rng.normal(size=(3, 4))
        for reverse in (False, True):
            got = sm.lstm_forward(params, feats, reverse=reverse).data
            want = reference_forward(params, feats, reverse=reverse)
            np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_empty_sequence_rejected(self):
        params = random_params(np.random.default_rng(0), 3, 2)
        with pytest.raises(ValueError, match="nonempty"):
            sm.lstm_forward(params, np.zeros((0, 3)))

    def test_wrong_input_dim_rejected(self):
        params = random_params(np.random.default_rng(0), 3, 2)
        with pytest.raises(ValueError, match="input dim"):
            sm.lstm_forward(params, np.zeros((4, 5)))


class TestBilstmEncode:
    def test_constant_input_identical_directions(self):
        # constant input is invariant under time reversal, so the backward
        # half is the forward half read backward (and the middle row of an
        # odd-length sequence matches exactly)
        rng = np.random.default_rng(7)
        params = random_params(rng, 3, 2, layers=2)
        feats = np.tile(rng.normal(size=3), (5, 1))
        out = sm.bilstm_encode(params, params, feats).data
        np.testing.assert_allclose(out[:, 2:], out[::-1, :2], rtol=1e-12)
        np.testing.assert_allclose(out[2, :2], out[2, 2:], rtol=1e-12)

    @pytest.mark.parametrize("hidden", [1, 3, 4])
    def test_width_is_twice_hidden(self, hidden):
        rng = np.random.default_rng(hidden)
        fwd = random_params(rng, 2, hidden)
        bwd = random_params(rng, 2, hidden)
        out = sm.bilstm_encode(fwd, bwd, rng.normal(size=(4, 2)))
        assert out.shape == (4, 2 * hidden)

    def test_matches_two_independent_passes(self):
        rng = np.random.default_rng(9)
        fwd = random_params(rng, 3, 2)
        bwd = random_params(rng, 3, 2)
        feats = rng.normal(size=(4, 3))
        got = sm.bilstm_encode(fwd, bwd, feats).data
        want = np.hstack(
            [reference_forward(fwd, feats), reference_forward(bwd, feats, reverse=True)]
        )
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_perturbation_reaches_both_sides(self):
        rng = np.random.default_rng(10)
        fwd = random_params(rng, 2, 2)
        bwd = random_params(rng, 2, 2)
        feats = rng.normal(size=(7, 2))
        base = sm.bilstm_encode(fwd, bwd, feats).data
        poked = feats.copy()
        poked[3] += 1.0
        moved = np.abs(sm.bilstm_encode(fwd, bwd, poked).data - base).sum(axis=1) > 1e-12
        assert moved[:3].any() and moved[4:].any()

    def test_mismatched_direction_dims_rejected(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError, match="share dimensions"):
            sm.bilstm_encode(
                random_params(rng, 3, 2), random_params(rng, 3, 4), np.zeros((2, 3))
            )

    def test_full_sequence_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        fwd = random_params(rng, 2, 2, layers=2)
        bwd = random_params(rng, 2, 2, layers=2)
        feats = rng.normal(size=(4, 2))
        weights = rng.normal(size=(4, 4))  # fixed mixing to scalar

        def loss_value():
            out = sm.bilstm_encode(fwd, bwd, feats)
            return float((out.data * weights).sum())

        with GradientTape() as tape:
            out = sm.bilstm_encode(fwd, bwd, feats)
            loss = nm.sum_all(nm.mul(out, Matrix(weights)))
        grads = tape.backward(loss)

        step = 1e-5
        for stack in (fwd, bwd):
            for layer in stack.layers:
                for tensor in (layer.weights, layer.bias):
                    analytic = grads.get(tensor).reshape(-1)
                    flat = tensor.data.reshape(-1)
                    for i in range(0, flat.size, 7):  # sample entries
                        orig = flat[i]
                        flat[i] = orig + step
                        up = loss_value()
                        flat[i] = orig - step
                        down = loss_value()
                        flat[i] = orig
                        numeric = (up - down) / (2 * step)
                        err = abs(analytic[i] - numeric) / max(
                            abs(analytic[i]) + abs(numeric), 1e-3
                        )
                        assert err < 1e-4


class TestParamContainers:
    def test_from_gates_round_trip(self):
        rng = np.random.default_rng(3)
        blocks = {
            name: (rng.normal(size=(2, 3)), rng.normal(size=(2, 2)), rng.normal(size=2))
            for name in ("input", "forget", "output", "candidate")
        }
        layer = sm.LstmLayerParams.from_gates(blocks)
        for name, (w_in, w_rec, bias) in blocks.items():
            np.testing.assert_array_equal(layer.gate_input_weight(name), w_in)
            np.testing.assert_array_equal(layer.gate_recurrent_weight(name), w_rec)
            np.testing.assert_array_equal(layer.gate_bias(name), bias)

    def test_missing_gate_rejected(self):
        with pytest.raises(ValueError, match="missing gates"):
            sm.LstmLayerParams.from_gates(
                {"input": (np.zeros((1, 1)), np.zeros((1, 1)), np.zeros(1))}
            )

    def test_layer_stack_shape_validation(self):
        rng = np.random.default_rng(0)
        l0 = random_params(rng, 3, 2).layers[0]
        bad = random_params(rng, 3, 2).layers[0]  # layer 1 must consume H=2
        with pytest.raises(ValueError, match="input size"):
            sm.LstmParams([l0, bad])

    def test_forget_bias_initialization(self):
        params = sm.init_lstm_params(3, 4, 2, np.random.default_rng(0))
        for layer in params.layers:
            np.testing.assert_array_equal(layer.gate_bias("forget"), np.ones(4))
            np.testing.assert_array_equal(layer.gate_bias("input"), np.zeros(4))
            assert np.all(np.abs(layer.weights.data) <= 0.05)
