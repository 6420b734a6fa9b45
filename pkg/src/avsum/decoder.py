"""Score-emitting decoder and the full summarizer model container.

A decode step feeds concat(previous score, context vector) through a stacked
LSTM and squashes a linear readout of the top hidden state through a sigmoid,
so every emitted frame score lies in [0, 1]. Three variants share this shell:

- ``a-avs``: context from additive attention over a window of annotations
- ``m-avs``: context from multiplicative (bilinear) attention
- ``lstm-vs``: no attention; the context is the mean annotation, fixed
  across all steps

During training the previous score comes from the teacher sequence; at
inference the decoder free-runs on its own outputs, starting from 0.
"""

from __future__ import annotations

import struct

import numpy as np

from . import attention as attn
from . import numerics as nm
from . import seq_model as sm
from .numerics import Matrix

__all__ = [
    "VARIANTS",
    "DecoderParams",
    "DecoderState",
    "AvsModel",
    "init_model",
    "decoder_step",
    "decode_sequence",
    "save_checkpoint",
    "load_checkpoint",
    "write_scores",
    "read_scores",
]

VARIANTS = ("a-avs", "m-avs", "lstm-vs")

CHECKPOINT_MAGIC = b"AVSM"
CHECKPOINT_VERSION = 1
_VARIANT_TAGS = {"a-avs": "A-AVS", "m-avs": "M-AVS", "lstm-vs": "LSTM-VS"}
_TAG_VARIANTS = {tag: v for v, tag in _VARIANT_TAGS.items()}


class DecoderParams:
    """Stacked decoder LSTM plus the sigmoid readout of its top hidden state."""

    def __init__(self, lstm: sm.LstmParams, readout_weight: Matrix, readout_bias: Matrix):
        hidden = lstm.hidden_size
        if readout_weight.shape != (1, hidden):
            raise ValueError(
                f"readout weight must be 1x{hidden}, got {readout_weight.shape}"
            )
        if readout_bias.shape != (1, 1):
            raise ValueError(f"readout bias must be 1x1, got {readout_bias.shape}")
        self.lstm = lstm
        self.readout_weight = readout_weight
        self.readout_bias = readout_bias


class DecoderState:
    """Stacked LSTM state plus the previous emitted score (1x1, in [0, 1])."""

    def __init__(self, lstm: sm.LstmState, y_prev: Matrix):
        self.lstm = lstm
        self.y_prev = y_prev

    @classmethod
    def initial(cls, num_layers: int, hidden_size: int) -> "DecoderState":
        return cls(sm.LstmState.zeros(num_layers, hidden_size), nm.zeros(1, 1))


def decoder_step(
    params: DecoderParams, state: DecoderState, context: Matrix
) -> tuple[Matrix, DecoderState]:
    """Advance the decoder one step; returns (score in [0, 1], new state)."""
    expected = params.lstm.input_size - 1
    if context.shape != (expected, 1):
        raise ValueError(
            f"context must be {expected}x1, got {context.rows}x{context.cols}"
        )
    step_input = nm.vstack([state.y_prev, context])
    top, lstm_state = sm.stack_step(params.lstm, step_input, state.lstm)
    logit = nm.add(nm.matmul(params.readout_weight, top), params.readout_bias)
    y = nm.sigmoid(logit)
    return y, DecoderState(lstm_state, y)


class AvsModel:
    """Encoder, optional attention, and decoder for one summarizer variant."""

    def __init__(
        self,
        variant: str,
        feature_dim: int,
        hidden_size: int,
        num_layers: int,
        attention_scale: int,
        attention_size: int,
        encoder_fwd: sm.LstmParams,
        encoder_bwd: sm.LstmParams,
        decoder: DecoderParams,
        attention_params=None,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        self.variant = variant
        self.feature_dim = feature_dim
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.attention_scale = attention_scale
        self.attention_size = attention_size
        self.encoder_fwd = encoder_fwd
        self.encoder_bwd = encoder_bwd
        self.decoder = decoder
        self.attention_params = attention_params

    @property
    def window(self) -> attn.AttentionWindow:
        return attn.AttentionWindow(self.attention_scale)

    def parameters(self) -> list[tuple[str, Matrix]]:
        """All learnable tensors with stable names, in serialization order."""
        named: list[tuple[str, Matrix]] = []
        for prefix, stack in (
            ("encoder_fwd", self.encoder_fwd),
            ("encoder_bwd", self.encoder_bwd),
            ("decoder", self.decoder.lstm),
        ):
            for i, layer in enumerate(stack.layers):
                named.append((f"{prefix}.layer{i}.weights", layer.weights))
                named.append((f"{prefix}.layer{i}.bias", layer.bias))
        if isinstance(self.attention_params, attn.AdditiveAttentionParams):
            p = self.attention_params
            named += [
                ("attention.score_vector", p.score_vector),
                ("attention.state_proj", p.state_proj),
                ("attention.annotation_proj", p.annotation_proj),
                ("attention.bias", p.bias),
            ]
        elif isinstance(self.attention_params, attn.MultiplicativeAttentionParams):
            named.append(("attention.bilinear", self.attention_params.bilinear))
        named += [
            ("readout.weight", self.decoder.readout_weight),
            ("readout.bias", self.decoder.readout_bias),
        ]
        return named

    def encode(self, features) -> Matrix:
        return sm.bilstm_encode(self.encoder_fwd, self.encoder_bwd, features)

    def clone(self) -> "AvsModel":
        """Deep copy of all parameters (used for best-epoch snapshots)."""
        copy = init_model(
            self.variant,
            self.feature_dim,
            hidden_size=self.hidden_size,
            num_layers=self.num_layers,
            attention_scale=self.attention_scale,
            attention_size=self.attention_size,
            seed=0,
        )
        for (_, src), (_, dst) in zip(self.parameters(), copy.parameters()):
            dst.data[...] = src.data
        return copy


def init_model(
    variant: str,
    feature_dim: int,
    hidden_size: int = 256,
    num_layers: int = 3,
    attention_scale: int = 9,
    seed: int = 0,
    attention_size: int | None = None,
) -> AvsModel:
    """Seeded fresh model; decoder consumes concat(score, 2H context)."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    rng = np.random.default_rng(seed)
    annotation_size = 2 * hidden_size
    enc_fwd = sm.init_lstm_params(feature_dim, hidden_size, num_layers, rng)
    enc_bwd = sm.init_lstm_params(feature_dim, hidden_size, num_layers, rng)
    dec_lstm = sm.init_lstm_params(1 + annotation_size, hidden_size, num_layers, rng)
    readout_w = Matrix(rng.uniform(-0.05, 0.05, size=(1, hidden_size)))
    readout_b = Matrix(np.zeros((1, 1)))
    if attention_size is None:
        attention_size = hidden_size
    attention_params = None
    if variant == "a-avs":
        attention_params = attn.init_attention_params(
            "additive", annotation_size, hidden_size, rng, attention_size
        )
    elif variant == "m-avs":
        attention_params = attn.init_attention_params(
            "multiplicative", annotation_size, hidden_size, rng
        )
    attn.AttentionWindow(attention_scale)  # validates scale
    return AvsModel(
        variant,
        feature_dim,
        hidden_size,
        num_layers,
        attention_scale,
        attention_size,
        enc_fwd,
        enc_bwd,
        DecoderParams(dec_lstm, readout_w, readout_b),
        attention_params,
    )


def _mean_annotation(annotations: Matrix) -> Matrix:
    total = annotations.rows
    averager = Matrix(np.full((total, 1), 1.0 / total))
    return nm.matmul(nm.transpose(annotations), averager)


def decode_sequence(model: AvsModel, annotations: Matrix, teacher=None) -> Matrix:
    """Emit one score per annotation row, as a T x 1 column on the tape.

    With ``teacher`` (length-T ground-truth scores) the previous score fed
    at step t is teacher[t-1]; without it the decoder consumes its own
    previous output.
    """
    total = annotations.rows
    if total == 0:
        raise ValueError("cannot decode an empty annotation matrix")
    if teacher is not None:
        teacher = np.asarray(teacher, dtype=np.float64).reshape(-1)
        if len(teacher) != total:
            raise ValueError(
                f"teacher length {len(teacher)} != annotation count {total}"
            )
    state = DecoderState.initial(model.num_layers, model.hidden_size)
    window = model.window
    fixed_context = _mean_annotation(annotations) if model.variant == "lstm-vs" else None
    outputs = []
    for t in range(total):
        if fixed_context is not None:
            context = fixed_context
        else:
            idx, scores = attn.relevance_scores(
                model.attention_params, state.lstm.top_hidden, annotations, window, t
            )
            weights = attn.attention_weights(idx, scores)
            context = attn.context_vector(weights, annotations)
        y, state = decoder_step(model.decoder, state, context)
        outputs.append(y)
        if teacher is not None and t + 1 < total:
            state = DecoderState(state.lstm, Matrix([[teacher[t]]]))
    return nm.vstack(outputs)


def forward_scores(model: AvsModel, features) -> np.ndarray:
    """Inference-mode frame scores as a plain length-T array."""
    return decode_sequence(model, model.encode(features)).data.reshape(-1)


# ---------------------------------------------------------------------------
# Checkpoint container: magic "AVSM", version, variant tag, dimensions, then
# named tensors in parameters() order, all little-endian.
# ---------------------------------------------------------------------------


def _write_str(fh, text: str) -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def save_checkpoint(model: AvsModel, path) -> None:
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        _write_str(fh, _VARIANT_TAGS[model.variant])
        fh.write(
            struct.pack(
                "<5I",
                model.feature_dim,
                model.hidden_size,
                model.num_layers,
                model.attention_size,
                model.attention_scale,
            )
        )
        fh.write(struct.pack("<I", len(params)))
        for name, tensor in params:
            _write_str(fh, name)
            fh.write(struct.pack("<II", tensor.rows, tensor.cols))
            fh.write(tensor.data.astype("<f8").tobytes())


def load_checkpoint(path) -> AvsModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        tag = _read_str(fh)
        if tag not in _TAG_VARIANTS:
            raise ValueError(f"{path}: unknown variant tag {tag!r}")
        feature_dim, hidden, layers, attention_size, scale = struct.unpack(
            "<5I", fh.read(20)
        )
        model = init_model(
            _TAG_VARIANTS[tag],
            feature_dim,
            hidden_size=hidden,
            num_layers=layers,
            attention_scale=scale,
            attention_size=attention_size,
            seed=0,
        )
        (count,) = struct.unpack("<I", fh.read(4))
        params = model.parameters()
        if count != len(params):
            raise ValueError(
                f"{path}: {count} tensors in file, model needs {len(params)}"
            )
        for name, tensor in params:
            stored = _read_str(fh)
            if stored != name:
                raise ValueError(f"{path}: tensor {stored!r} where {name!r} expected")
            rows, cols = struct.unpack("<II", fh.read(8))
            if (rows, cols) != tensor.shape:
                raise ValueError(
                    f"{path}: tensor {name} is {rows}x{cols}, expected "
                    f"{tensor.rows}x{tensor.cols}"
                )
            raw = fh.read(rows * cols * 8)
            if len(raw) != rows * cols * 8:
                raise ValueError(f"{path}: truncated tensor {name}")
            tensor.data[...] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols)
    return model


def write_scores(path, scores) -> None:
    """One line per frame: ``frame_index<TAB>score`` with 6 decimals."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    with open(path, "w") as fh:
        for i, s in enumerate(scores):
            fh.write(f"{i}\t{s:.6f}\n")


def read_scores(path) -> np.ndarray:
    values = []
    with open(path) as fh:
        for line in fh:
            _, score = line.rstrip("\n").split("\t")
            values.append(float(score))
    return np.asarray(values)
