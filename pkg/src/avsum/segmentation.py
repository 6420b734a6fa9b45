"""Kernel temporal segmentation: split a frame sequence into coherent shots.

Dynamic programming minimizes the total within-segment scatter
sum_t ||x_t - segment mean||^2, evaluated in O(1) per candidate segment from
linear-kernel prefix sums. The shot count m is chosen by penalizing the
optimal m-segment scatter with penalty_weight * m * (log(T/m) + 1).

Everything here is deterministic: equal inputs give identical boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShotSegmentation",
    "segment_cost",
    "kts_segment",
    "default_max_shots",
]


@dataclass(frozen=True)
class ShotSegmentation:
    """Strictly increasing boundaries 0 = b_0 < ... < b_m = T.

    Shot i covers frames [boundaries[i], boundaries[i+1]).
    """

    boundaries: tuple[int, ...]

    def __post_init__(self):
        b = self.boundaries
        if len(b) < 2 or b[0] != 0:
            raise ValueError(f"boundaries must start at 0, got {b}")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError(f"boundaries must strictly increase, got {b}")

    @property
    def n_frames(self) -> int:
        return self.boundaries[-1]

    @property
    def n_shots(self) -> int:
        return len(self.boundaries) - 1

    def shots(self) -> list[tuple[int, int]]:
        b = self.boundaries
        return [(b[i], b[i + 1]) for i in range(len(b) - 1)]

    def write(self, path) -> None:
        """One line per shot: ``start<TAB>end_exclusive``."""
        with open(path, "w") as fh:
            for start, end in self.shots():
                fh.write(f"{start}\t{end}\n")

    @classmethod
    def read(cls, path) -> "ShotSegmentation":
        starts, ends = [], []
        with open(path) as fh:
            for line in fh:
                s, e = line.split("\t")
                starts.append(int(s))
                ends.append(int(e))
        return cls(tuple(starts) + (ends[-1],))


class _ScatterTable:
    """Prefix sums giving the scatter of any frame range in O(d)."""

    def __init__(self, features: np.ndarray):
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError(f"features must be T x d, got shape {feats.shape}")
        total = feats.shape[0]
        self.norm_prefix = np.zeros(total + 1)
        self.norm_prefix[1:] = np.cumsum((feats * feats).sum(axis=1))
        self.vec_prefix = np.zeros((total + 1, feats.shape[1]))
        np.cumsum(feats, axis=0, out=self.vec_prefix[1:])
        self.n_frames = total

    def cost(self, lo: int, hi: int) -> float:
        """Scatter of frames [lo, hi): sum ||x||^2 - ||sum x||^2 / n."""
        if not 0 <= lo < hi <= self.n_frames:
            raise ValueError(f"empty or invalid range [{lo}, {hi})")
        seg_sum = self.vec_prefix[hi] - self.vec_prefix[lo]
        raw = (self.norm_prefix[hi] - self.norm_prefix[lo]) - (
            seg_sum @ seg_sum
        ) / (hi - lo)
        return max(raw, 0.0)  # clamp tiny negative rounding residue

    def matrix(self) -> np.ndarray:
        """(T+1) x (T+1) table with entry [lo, hi] = cost(lo, hi) for lo < hi.

        ||sum_{lo<=t<hi} x_t||^2 expands through the Gram matrix of the
        prefix-sum vectors, so the whole table costs one matrix product.
        """
        total = self.n_frames
        gram = self.vec_prefix @ self.vec_prefix.T
        diag = np.diag(gram)
        sq_norms = diag[np.newaxis, :] + diag[:, np.newaxis] - 2.0 * gram
        lengths = np.arange(total + 1)[np.newaxis, :] - np.arange(total + 1)[:, np.newaxis]
        with np.errstate(divide="ignore", invalid="ignore"):
            table = (
                self.norm_prefix[np.newaxis, :]
                - self.norm_prefix[:, np.newaxis]
                - sq_norms / lengths
            )
        np.maximum(table, 0.0, out=table, where=lengths > 0)
        return table


def segment_cost(features, lo: int, hi: int) -> float:
    """Within-segment scatter of frames [lo, hi) of a T x d feature matrix."""
    return _ScatterTable(features).cost(lo, hi)


def default_max_shots(n_frames: int) -> int:
    # average shot of at least 5 downsampled frames
    return max(1, math.ceil(n_frames / 5))


def shot_count_penalty(n_frames: int, n_shots: int) -> float:
    return n_shots * (math.log(n_frames / n_shots) + 1.0)


def kts_segment(
    features,
    max_shots: int | None = None,
    penalty_weight: float = 1.0,
) -> ShotSegmentation:
    """Optimal change-point segmentation of a T x d feature sequence.

    For every candidate shot count m <= max_shots the DP finds the
    segmentation of minimum total scatter; the final m minimizes
    scatter + penalty_weight * m * (log(T/m) + 1).
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError(f"features must be a nonempty T x d matrix, got {feats.shape}")
    total = feats.shape[0]
    if max_shots is None:
        max_shots = default_max_shots(total)
    if max_shots < 1:
        raise ValueError(f"max_shots must be >= 1, got {max_shots}")
    max_shots = min(max_shots, total)

    scatter = _ScatterTable(feats).matrix()
    # best[k, t]: min scatter splitting the first t frames into k+1 shots
    best = np.full((max_shots, total + 1), np.inf)
    split = np.zeros((max_shots, total + 1), dtype=np.intp)
    best[0, 1:] = scatter[0, 1:]
    for k in range(1, max_shots):
        for t in range(k + 1, total + 1):
            # previous boundary s ranges over [k, t)
            cand = best[k - 1, k:t] + scatter[k:t, t]
            pick = int(np.argmin(cand))
            best[k, t] = cand[pick]
            split[k, t] = pick + k

    totals = np.array(
        [
            best[m - 1, total] + penalty_weight * shot_count_penalty(total, m)
            for m in range(1, max_shots + 1)
        ]
    )
    m_opt = int(np.argmin(totals)) + 1

    bounds = [total]
    t = total
    for k in range(m_opt - 1, 0, -1):
        t = int(split[k, t])
        bounds.append(t)
    bounds.append(0)
    return ShotSegmentation(tuple(reversed(bounds)))
