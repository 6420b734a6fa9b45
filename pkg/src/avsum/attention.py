"""Attention over encoder annotations for the decoder.

At decode step t the decoder scores a window of annotations centered on t
(frame and output sequences are time-aligned), normalizes the scores with a
softmax, and forms the context vector as the weighted sum of the attended
rows. Two score functions are provided: an additive one
(score_vector . tanh(state_proj s + annotation_proj v + bias)) and a
multiplicative bilinear one (v . bilinear s).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from .numerics import Matrix

__all__ = [
    "AdditiveAttentionParams",
    "MultiplicativeAttentionParams",
    "AttentionWindow",
    "AttentionWeights",
    "init_attention_params",
    "relevance_scores",
    "attention_weights",
    "context_vector",
]


class AdditiveAttentionParams:
    """Weights of the additive score function.

    score_vector: A x 1, state_proj: A x S, annotation_proj: A x 2H,
    bias: A x 1, where S is the decoder hidden size and A the attention
    hidden size.
    """

    def __init__(self, score_vector: Matrix, state_proj: Matrix,
                 annotation_proj: Matrix, bias: Matrix):
        a = state_proj.rows
        if score_vector.shape != (a, 1):
            raise ValueError(f"score_vector must be {a}x1, got {score_vector.shape}")
        if annotation_proj.rows != a or bias.shape != (a, 1):
            raise ValueError("additive attention shapes are inconsistent")
        self.score_vector = score_vector
        self.state_proj = state_proj
        self.annotation_proj = annotation_proj
        self.bias = bias

    @property
    def attention_size(self) -> int:
        return self.state_proj.rows


class MultiplicativeAttentionParams:
    """Bilinear form (2H x S) pairing annotations with the decoder state."""

    def __init__(self, bilinear: Matrix):
        self.bilinear = bilinear


@dataclass(frozen=True)
class AttentionWindow:
    """How many annotations each decode step attends to (odd, >= 1)."""

    scale: int = 9

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"attention scale must be >= 1, got {self.scale}")
        if self.scale % 2 == 0:
            raise ValueError(f"attention scale must be odd, got {self.scale}")

    def indices(self, t: int, total: int) -> np.ndarray:
        """Attended frame indices for output step t, clamped to [0, total)."""
        if not 0 <= t < total:
            raise ValueError(f"step {t} out of range for {total} frames")
        half = self.scale // 2
        lo = max(0, t - half)
        hi = min(total, t + half + 1)
        return np.arange(lo, hi)


@dataclass(frozen=True)
class AttentionWeights:
    """Normalized weights over the attended annotation rows at one step."""

    indices: np.ndarray
    weights: Matrix  # k x 1, entries positive, summing to 1

    def as_array(self) -> np.ndarray:
        return self.weights.data.reshape(-1)


def init_attention_params(
    variant: str,
    annotation_size: int,
    state_size: int,
    rng: np.random.Generator,
    attention_size: int | None = None,
    init_range: float = 0.05,
):
    """Fresh parameters for one score function; None for the no-attention variant."""
    if variant == "additive":
        a = attention_size if attention_size is not None else state_size
        return AdditiveAttentionParams(
            score_vector=Matrix(rng.uniform(-init_range, init_range, size=(a, 1))),
            state_proj=Matrix(rng.uniform(-init_range, init_range, size=(a, state_size))),
            annotation_proj=Matrix(rng.uniform(-init_range, init_range, size=(a, annotation_size))),
            bias=Matrix(np.zeros((a, 1))),
        )
    if variant == "multiplicative":
        return MultiplicativeAttentionParams(
            bilinear=Matrix(
                rng.uniform(-init_range, init_range, size=(annotation_size, state_size))
            )
        )
    raise ValueError(f"unknown attention variant {variant!r}")


def relevance_scores(
    params,
    s_prev: Matrix,
    annotations: Matrix,
    window: AttentionWindow,
    t: int,
) -> tuple[np.ndarray, Matrix]:
    """Unnormalized relevance of each windowed annotation to the decoder state.

    Returns (attended frame indices, k x 1 score column). ``t`` is the
    0-based output step; the window is centered there and truncated at the
    sequence ends.
    """
    idx = window.indices(t, annotations.rows)
    attended = nm.take_rows(annotations, idx)  # k x 2H
    if isinstance(params, AdditiveAttentionParams):
        shifted = nm.add(nm.matmul(params.state_proj, s_prev), params.bias)  # A x 1
        projected = nm.matmul(params.annotation_proj, nm.transpose(attended))  # A x k
        hidden = nm.tanh(nm.add_col(projected, shifted))
        scores = nm.transpose(nm.matmul(nm.transpose(params.score_vector), hidden))
    elif isinstance(params, MultiplicativeAttentionParams):
        scores = nm.matmul(attended, nm.matmul(params.bilinear, s_prev))
    else:
        raise TypeError(f"unsupported attention params: {type(params).__name__}")
    return idx, scores


def attention_weights(indices: np.ndarray, scores: Matrix) -> AttentionWeights:
    """Softmax-normalize relevance scores over exactly the attended set."""
    if scores.rows == 0:
        raise ValueError("attention_weights needs a nonempty score set")
    if len(indices) != scores.rows:
        raise ValueError(
            f"{len(indices)} indices for {scores.rows} scores"
        )
    return AttentionWeights(np.asarray(indices), nm.softmax_col(scores))


def context_vector(weights: AttentionWeights, annotations: Matrix) -> Matrix:
    """Convex combination of the attended annotation rows, as a 2H x 1 column."""
    idx = weights.indices
    if len(idx) and (idx.min() < 0 or idx.max() >= annotations.rows):
        raise ValueError(
            f"attended indices {idx.tolist()} out of range for "
            f"{annotations.rows} annotations"
        )
    attended = nm.take_rows(annotations, idx)
    return nm.matmul(nm.transpose(attended), weights.weights)
