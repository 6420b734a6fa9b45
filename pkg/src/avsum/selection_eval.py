"""Shot scoring, budgeted keyshot selection, and temporal-overlap metrics.

A shot's importance is the mean of its frame scores; its cost is its frame
count. Selecting the summary is a 0/1 knapsack: maximize total importance
subject to the selected frame count staying within budget_fraction of the
video (default 15%). Capacity is discretized in exact frame counts, and the
DP breaks value ties toward the lexicographically earliest shot set.

Precision and recall count overlapping frames between a machine summary and
a reference summary; F = 2PR/(P+R) x 100.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .segmentation import ShotSegmentation

__all__ = [
    "ShotScore",
    "Summary",
    "EvalResult",
    "shot_scores",
    "knapsack_select",
    "precision_recall",
    "f_measure",
    "evaluate_against_users",
    "ground_truth_summary",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 0.15


@dataclass(frozen=True)
class ShotScore:
    """One shot's selection inputs: span, mean score, and normalized length."""

    index: int
    start: int
    end: int  # exclusive
    score: float
    normalized_length: float  # frames / (budget_fraction * n_frames)

    @property
    def frames(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Summary:
    """A budgeted selection of shots and the frame intervals it induces."""

    n_frames: int
    intervals: tuple[tuple[int, int], ...]  # sorted, non-overlapping, end exclusive
    selection: tuple[int, ...] = field(default=())  # 0/1 per shot, when known

    def __post_init__(self):
        last = 0
        for start, end in self.intervals:
            if start < last or end <= start or end > self.n_frames:
                raise ValueError(
                    f"bad interval list {self.intervals} for {self.n_frames} frames"
                )
            last = end

    @classmethod
    def from_intervals(cls, intervals, n_frames: int) -> "Summary":
        ordered = tuple(sorted((int(s), int(e)) for s, e in intervals))
        return cls(n_frames=n_frames, intervals=ordered)

    @property
    def frame_count(self) -> int:
        return sum(end - start for start, end in self.intervals)

    def frame_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_frames, dtype=bool)
        for start, end in self.intervals:
            mask[start:end] = True
        return mask

    def write(self, path) -> None:
        """Interval list ``start<TAB>end_exclusive`` plus budget usage."""
        with open(path, "w") as fh:
            fh.write(f"# frames {self.frame_count}/{self.n_frames}\n")
            for start, end in self.intervals:
                fh.write(f"{start}\t{end}\n")


@dataclass(frozen=True)
class EvalResult:
    """Precision/recall in [0, 1], F in percent, per-user breakdown."""

    precision: float
    recall: float
    f_score: float
    mode: str
    per_user: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_score": self.f_score,
            "mode": self.mode,
            "per_user": list(self.per_user),
        }


def budget_capacity(n_frames: int, budget_fraction: float) -> int:
    """Largest frame count not exceeding budget_fraction of the video."""
    return int(np.floor(budget_fraction * n_frames + 1e-9))


def shot_scores(
    frame_scores, seg: ShotSegmentation, budget_fraction: float = DEFAULT_BUDGET
) -> list[ShotScore]:
    """Mean frame score and normalized length per shot of the segmentation."""
    scores = np.asarray(frame_scores, dtype=np.float64).reshape(-1)
    if len(scores) != seg.n_frames:
        raise ValueError(
            f"{len(scores)} frame scores for a {seg.n_frames}-frame segmentation"
        )
    if not 0 < budget_fraction <= 1:
        raise ValueError(f"budget_fraction must be in (0, 1], got {budget_fraction}")
    denom = budget_fraction * seg.n_frames
    return [
        ShotScore(
            index=i,
            start=start,
            end=end,
            score=float(scores[start:end].mean()),
            normalized_length=(end - start) / denom,
        )
        for i, (start, end) in enumerate(seg.shots())
    ]


def knapsack_select(
    shots: list[ShotScore], capacity_frames: int | None = None
) -> Summary:
    """Exact 0/1 knapsack over shots; weight = frames, budget = capacity.

    Maximizes the summed shot scores subject to the selected frame total
    staying within capacity. Ties prefer the lexicographically earliest
    shot set. An empty selection is legal when nothing fits.
    """
    if not shots:
        raise ValueError("knapsack_select needs at least one shot")
    n_frames = shots[-1].end
    if capacity_frames is None:
        # normalized_length = frames / (budget * n_frames)
        capacity_frames = int(
            np.floor(shots[0].frames / shots[0].normalized_length + 1e-6)
        )
    m = len(shots)
    weights = [s.frames for s in shots]
    values = [s.score for s in shots]

    # best[i][c]: max value using shots i.. with capacity c
    best = np.zeros((m + 1, capacity_frames + 1))
    for i in range(m - 1, -1, -1):
        best[i] = best[i + 1]
        w = weights[i]
        if w <= capacity_frames:
            take = values[i] + best[i + 1, : capacity_frames - w + 1]
            best[i, w:] = np.maximum(best[i + 1, w:], take)

    chosen = np.zeros(m, dtype=int)
    cap = capacity_frames
    for i in range(m):
        w = weights[i]
        # taking i whenever it preserves the optimum keeps the earliest set;
        # the comparison is exact because both sides reuse the same DP sums
        if w <= cap and best[i, cap] == values[i] + best[i + 1, cap - w]:
            chosen[i] = 1
            cap -= w
    intervals = tuple((s.start, s.end) for s, c in zip(shots, chosen) if c)
    return Summary(
        n_frames=n_frames, intervals=intervals, selection=tuple(int(c) for c in chosen)
    )


def precision_recall(summary: Summary, reference: Summary) -> tuple[float, float]:
    """Frame-overlap precision and recall of ``summary`` against ``reference``."""
    if summary.n_frames != reference.n_frames:
        raise ValueError(
            f"timeline mismatch: {summary.n_frames} vs {reference.n_frames} frames"
        )
    overlap = int(np.count_nonzero(summary.frame_mask() & reference.frame_mask()))
    p = overlap / summary.frame_count if summary.frame_count else 0.0
    r = overlap / reference.frame_count if reference.frame_count else 0.0
    return p, r


def f_measure(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall, in percent; 0 when both are 0."""
    if not (0 <= precision <= 1 and 0 <= recall <= 1):
        raise ValueError(f"precision/recall must be in [0, 1], got {precision}, {recall}")
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall) * 100.0


def evaluate_against_users(
    summary: Summary, user_summaries: list[Summary], mode: str = "mean"
) -> EvalResult:
    """Score a summary against every annotator and aggregate by mean or max."""
    if not user_summaries:
        raise ValueError("needs at least one user summary")
    if mode not in ("mean", "max"):
        raise ValueError(f"mode must be 'mean' or 'max', got {mode!r}")
    rows = []
    for ref in user_summaries:
        p, r = precision_recall(summary, ref)
        rows.append((p, r, f_measure(p, r)))
    per_user = tuple(f for _, _, f in rows)
    if mode == "max":
        p, r, f = max(rows, key=lambda row: row[2])
    else:
        p = sum(row[0] for row in rows) / len(rows)
        r = sum(row[1] for row in rows) / len(rows)
        f = sum(per_user) / len(per_user)
    return EvalResult(precision=p, recall=r, f_score=f, mode=mode, per_user=per_user)


def ground_truth_summary(
    gt_scores, seg: ShotSegmentation, budget_fraction: float = DEFAULT_BUDGET
) -> Summary:
    """Budgeted summary induced by annotated frame scores (same machinery
    as predictions: shot averaging then knapsack)."""
    shots = shot_scores(gt_scores, seg, budget_fraction)
    return knapsack_select(shots, budget_capacity(seg.n_frames, budget_fraction))
