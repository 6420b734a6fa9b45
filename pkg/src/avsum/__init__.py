"""Attentive encoder-decoder video summarization.

Learns frame-level importance scores from precomputed frame features with a
bidirectional-LSTM encoder and an attention-equipped LSTM decoder, converts
the scores into a budgeted keyshot summary via change-point segmentation and
0/1 knapsack selection, and evaluates summaries by temporal-overlap
F-measure.
"""

from . import (
    attention,
    dataset,
    decoder,
    numerics,
    pipeline,
    segmentation,
    selection_eval,
    seq_model,
    training,
)

__all__ = [
    "attention",
    "dataset",
    "decoder",
    "numerics",
    "pipeline",
    "segmentation",
    "selection_eval",
    "seq_model",
    "training",
]

__version__ = "0.1.0"
