"""End-to-end per-video flow: score frames, segment, select, evaluate."""

from __future__ import annotations

import numpy as np

from . import selection_eval as sel
from .dataset import VideoRecord
from .decoder import AvsModel, forward_scores
from .segmentation import ShotSegmentation, kts_segment

__all__ = [
    "segment_record",
    "build_summary",
    "summarize_record",
    "reference_summaries",
    "evaluate_model",
]


def segment_record(
    record: VideoRecord,
    max_shots: int | None = None,
    penalty_weight: float = 1.0,
) -> ShotSegmentation:
    return kts_segment(record.features, max_shots=max_shots, penalty_weight=penalty_weight)


def build_summary(
    frame_scores, seg: ShotSegmentation, budget_fraction: float = sel.DEFAULT_BUDGET
) -> sel.Summary:
    shots = sel.shot_scores(frame_scores, seg, budget_fraction)
    capacity = sel.budget_capacity(seg.n_frames, budget_fraction)
    return sel.knapsack_select(shots, capacity)


def summarize_record(
    model: AvsModel,
    record: VideoRecord,
    seg: ShotSegmentation | None = None,
    budget_fraction: float = sel.DEFAULT_BUDGET,
) -> tuple[np.ndarray, ShotSegmentation, sel.Summary]:
    """Predict frame scores for one video and select its keyshot summary."""
    if seg is None:
        seg = segment_record(record)
    scores = forward_scores(model, record.features)
    return scores, seg, build_summary(scores, seg, budget_fraction)


def reference_summaries(
    record: VideoRecord,
    seg: ShotSegmentation,
    budget_fraction: float = sel.DEFAULT_BUDGET,
) -> list[sel.Summary]:
    """User summaries when annotated, else the ground-truth-score summary."""
    users = record.user_summary_objects()
    if users:
        return users
    return [sel.ground_truth_summary(record.gt_frame_scores, seg, budget_fraction)]


def evaluate_model(
    model: AvsModel,
    records: list[VideoRecord],
    budget_fraction: float = sel.DEFAULT_BUDGET,
    agg: str = "mean",
    segmentations: dict[str, ShotSegmentation] | None = None,
) -> tuple[float, dict[str, sel.EvalResult]]:
    """Mean F across videos, each scored against its reference summaries.

    ``segmentations`` caches per-video shot boundaries (they depend only on
    features, so callers evaluating every epoch should precompute them).
    """
    if not records:
        raise ValueError("evaluate_model needs at least one record")
    results: dict[str, sel.EvalResult] = {}
    for record in records:
        seg = segmentations.get(record.id) if segmentations else None
        if seg is None:
            seg = segment_record(record)
        _, _, summary = summarize_record(model, record, seg, budget_fraction)
        refs = reference_summaries(record, seg, budget_fraction)
        results[record.id] = sel.evaluate_against_users(summary, refs, agg)
    mean_f = sum(r.f_score for r in results.values()) / len(results)
    return mean_f, results
