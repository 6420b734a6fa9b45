"""LSTM cell, stacked layers, and the bidirectional frame encoder.

Each layer stores its four gates (input, forget, output, candidate) as row
blocks of one fused weight matrix so a timestep costs a single matmul; the
per-gate matrices required by callers and tests are exposed as views.

The encoder runs one stack forward in time and one backward, then
concatenates the two hidden sequences row-wise into a T x 2H annotation
matrix: row t sees both the frames before and after t.
"""

from __future__ import annotations

import numpy as np

from . import numerics as nm
from .numerics import Matrix

__all__ = [
    "LstmLayerParams",
    "LstmParams",
    "LstmState",
    "init_lstm_params",
    "lstm_cell_step",
    "lstm_forward",
    "bilstm_encode",
]

# Row-block order of the fused gate matrix.
_GATES = ("input", "forget", "output", "candidate")


class LstmLayerParams:
    """One layer's gate parameters.

    ``weights`` is 4H x (D + H): columns [0, D) multiply the step input,
    columns [D, D+H) multiply the previous hidden state. ``bias`` is 4H x 1.
    Gate g occupies rows [g*H, (g+1)*H) in the order input, forget, output,
    candidate.
    """

    def __init__(self, weights: Matrix, bias: Matrix, input_size: int):
        hidden4 = weights.rows
        if hidden4 % 4 != 0:
            raise ValueError(f"gate rows must be 4*H, got {hidden4}")
        hidden = hidden4 // 4
        if weights.cols != input_size + hidden:
            raise ValueError(
                f"fused weights must be {hidden4}x{input_size + hidden}, "
                f"got {weights.rows}x{weights.cols}"
            )
        if bias.shape != (hidden4, 1):
            raise ValueError(f"bias must be {hidden4}x1, got {bias.shape}")
        self.weights = weights
        self.bias = bias
        self.input_size = input_size
        self.hidden_size = hidden

    @classmethod
    def from_gates(cls, gates: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]):
        """Build from per-gate (input weight HxD, recurrent weight HxH, bias H)."""
        missing = set(_GATES) - set(gates)
        if missing:
            raise ValueError(f"missing gates: {sorted(missing)}")
        w_blocks, b_blocks = [], []
        for name in _GATES:
            w_in, w_rec, b = (np.asarray(m, dtype=np.float64) for m in gates[name])
            w_blocks.append(np.concatenate([w_in, w_rec], axis=1))
            b_blocks.append(b.reshape(-1, 1))
        input_size = np.asarray(gates["input"][0]).shape[1]
        return cls(
            Matrix(np.concatenate(w_blocks, axis=0)),
            Matrix(np.concatenate(b_blocks, axis=0)),
            input_size,
        )

    def _gate_rows(self, name: str) -> slice:
        g = _GATES.index(name)
        h = self.hidden_size
        return slice(g * h, (g + 1) * h)

    def gate_input_weight(self, name: str) -> np.ndarray:
        """H x D input-weight view of one gate."""
        return self.weights.data[self._gate_rows(name), : self.input_size]

    def gate_recurrent_weight(self, name: str) -> np.ndarray:
        """H x H recurrent-weight view of one gate."""
        return self.weights.data[self._gate_rows(name), self.input_size:]

    def gate_bias(self, name: str) -> np.ndarray:
        """Length-H bias view of one gate."""
        return self.bias.data[self._gate_rows(name), 0]


class LstmParams:
    """A stack of LSTM layers; layer l > 0 consumes layer l-1's hiddens."""

    def __init__(self, layers: list[LstmLayerParams]):
        if not layers:
            raise ValueError("LstmParams needs at least one layer")
        hidden = layers[0].hidden_size
        for i, layer in enumerate(layers[1:], start=1):
            if layer.hidden_size != hidden:
                raise ValueError("hidden size must match across layers")
            if layer.input_size != hidden:
                raise ValueError(
                    f"layer {i} input size {layer.input_size} != hidden {hidden}"
                )
        self.layers = layers

    @property
    def hidden_size(self) -> int:
        return self.layers[0].hidden_size

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def num_layers(self) -> int:
        return len(self.layers)


class LstmState:
    """Per-layer (hidden, cell) column vectors."""

    def __init__(self, pairs: list[tuple[Matrix, Matrix]]):
        self.pairs = pairs

    @classmethod
    def zeros(cls, num_layers: int, hidden_size: int) -> "LstmState":
        return cls(
            [
                (nm.zeros(hidden_size, 1), nm.zeros(hidden_size, 1))
                for _ in range(num_layers)
            ]
        )

    @property
    def top_hidden(self) -> Matrix:
        return self.pairs[-1][0]


def init_lstm_params(
    input_size: int,
    hidden_size: int,
    num_layers: int,
    rng: np.random.Generator,
    init_range: float = 0.05,
    forget_bias: float = 1.0,
) -> LstmParams:
    """Uniform [-init_range, init_range] weights, forget-gate bias pinned."""
    layers = []
    for layer_index in range(num_layers):
        d = input_size if layer_index == 0 else hidden_size
        w = rng.uniform(-init_range, init_range, size=(4 * hidden_size, d + hidden_size))
        b = np.zeros((4 * hidden_size, 1))
        b[hidden_size : 2 * hidden_size] = forget_bias
        layers.append(LstmLayerParams(Matrix(w), Matrix(b), d))
    return LstmParams(layers)


def lstm_cell_step(
    layer: LstmLayerParams, x: Matrix, state: tuple[Matrix, Matrix]
) -> tuple[Matrix, Matrix]:
    """One LSTM timestep for a single layer.

    Gates: i, f, o = sigmoid(affine), g = tanh(affine);
    c' = f*c + i*g and h' = o*tanh(c').
    """
    if x.shape != (layer.input_size, 1):
        raise ValueError(
            f"step input must be {layer.input_size}x1, got {x.rows}x{x.cols}"
        )
    h_prev, c_prev = state
    hidden = layer.hidden_size
    if h_prev.shape != (hidden, 1) or c_prev.shape != (hidden, 1):
        raise ValueError(
            f"state must be {hidden}x1 pairs, got {h_prev.shape}, {c_prev.shape}"
        )
    xh = nm.vstack([x, h_prev])
    pre = nm.add(nm.matmul(layer.weights, xh), layer.bias)
    rows = np.arange(4 * hidden)
    gate_i = nm.sigmoid(nm.take_rows(pre, rows[:hidden]))
    gate_f = nm.sigmoid(nm.take_rows(pre, rows[hidden : 2 * hidden]))
    gate_o = nm.sigmoid(nm.take_rows(pre, rows[2 * hidden : 3 * hidden]))
    gate_g = nm.tanh(nm.take_rows(pre, rows[3 * hidden :]))
    c_next = nm.add(nm.mul(gate_f, c_prev), nm.mul(gate_i, gate_g))
    h_next = nm.mul(gate_o, nm.tanh(c_next))
    return h_next, c_next


def stack_step(
    params: LstmParams, x: Matrix, state: LstmState
) -> tuple[Matrix, LstmState]:
    """Advance every layer one timestep; returns top hidden and new state."""
    inp = x
    new_pairs = []
    for layer, pair in zip(params.layers, state.pairs):
        h, c = lstm_cell_step(layer, inp, pair)
        new_pairs.append((h, c))
        inp = h
    return inp, LstmState(new_pairs)


def lstm_forward(params: LstmParams, inputs, reverse: bool = False) -> Matrix:
    """Run the stack over a T x D input, zero initial state.

    Returns the top layer's hidden states as a T x H matrix in original
    time order; with ``reverse`` the sequence is consumed back-to-front
    but rows still line up with the input frames.
    """
    feats = inputs.data if isinstance(inputs, Matrix) else np.asarray(inputs, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError(f"inputs must be a nonempty T x D matrix, got {feats.shape}")
    if feats.shape[1] != params.input_size:
        raise ValueError(
            f"input dim {feats.shape[1]} != layer-0 input dim {params.input_size}"
        )
    total = feats.shape[0]
    order = range(total - 1, -1, -1) if reverse else range(total)
    state = LstmState.zeros(params.num_layers, params.hidden_size)
    rows: list[Matrix | None] = [None] * total
    for t in order:
        x = Matrix(feats[t].reshape(-1, 1))
        top, state = stack_step(params, x, state)
        rows[t] = nm.transpose(top)
    return nm.vstack(rows)


def bilstm_encode(fwd: LstmParams, bwd: LstmParams, inputs) -> Matrix:
    """Encode frames into T x 2H annotations: [forward pass | backward pass]."""
    if fwd.hidden_size != bwd.hidden_size or fwd.input_size != bwd.input_size:
        raise ValueError("forward/backward stacks must share dimensions")
    forward = lstm_forward(fwd, inputs, reverse=False)
    backward = lstm_forward(bwd, inputs, reverse=True)
    return nm.hstack([forward, backward])
