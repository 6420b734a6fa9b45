"""Dataset container, train/test splitting, and the synthetic generator.

A dataset is a directory with two files per video: ``<id>.avsf`` holding the
frame features (magic "AVSF", version, T, d as little-endian u32, then T x d
float64 row-major) and ``<id>.json`` holding frame scores, user summaries,
fps, and a source tag. The format is trivially writable from any feature
extraction stack.

The synthetic generator plants piecewise-constant shot prototypes whose
content determines importance: shots whose prototype points along +axis0
carry high ground-truth scores and are sized to fill the summary budget, so
the planted selection is the unique knapsack optimum.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import selection_eval as sel
from .segmentation import ShotSegmentation

__all__ = [
    "VideoRecord",
    "SplitSpec",
    "DatasetError",
    "save_dataset",
    "load_dataset",
    "make_split",
    "generate_synthetic",
    "SyntheticSpec",
]

FEATURE_MAGIC = b"AVSF"
FEATURE_VERSION = 1


class DatasetError(ValueError):
    """A container file failed validation."""


@dataclass
class VideoRecord:
    """One video: precomputed frame features plus annotations."""

    id: str
    features: np.ndarray  # T x d float64
    gt_frame_scores: np.ndarray  # length T, values in [0, 1]
    user_summaries: list[list[tuple[int, int]]] | None = None
    fps_downsampled: float = 2.0
    source_dataset: str = "unknown"
    planted_boundaries: tuple[int, ...] | None = None  # synthetic ground truth

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    def validate(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DatasetError(f"{self.id}: features must be nonempty T x d")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError(f"{self.id}: non-finite feature values")
        total = self.n_frames
        if self.gt_frame_scores.shape != (total,):
            raise DatasetError(
                f"{self.id}: {self.gt_frame_scores.shape[0]} scores for {total} frames"
            )
        if np.any(self.gt_frame_scores < 0) or np.any(self.gt_frame_scores > 1):
            raise DatasetError(f"{self.id}: frame scores must lie in [0, 1]")
        for u, intervals in enumerate(self.user_summaries or []):
            for start, end in intervals:
                if not 0 <= start < end <= total:
                    raise DatasetError(
                        f"{self.id}: user {u} interval [{start}, {end}) outside "
                        f"[0, {total})"
                    )

    def user_summary_objects(self) -> list[sel.Summary]:
        return [
            sel.Summary.from_intervals(iv, self.n_frames)
            for iv in (self.user_summaries or [])
        ]


def _feature_path(directory: Path, video_id: str) -> Path:
    return directory / f"{video_id}.avsf"


def _meta_path(directory: Path, video_id: str) -> Path:
    return directory / f"{video_id}.json"


def write_features(path, features: np.ndarray) -> None:
    feats = np.ascontiguousarray(features, dtype=np.float64)
    total, dim = feats.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<III", FEATURE_VERSION, total, dim))
        fh.write(feats.astype("<f8").tobytes())


def read_features(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise DatasetError(f"{path.name}: truncated header ({len(raw)} bytes)")
    if raw[:4] != FEATURE_MAGIC:
        raise DatasetError(f"{path.name}: bad magic {raw[:4]!r} at offset 0")
    version, total, dim = struct.unpack("<III", raw[4:16])
    if version != FEATURE_VERSION:
        raise DatasetError(f"{path.name}: unsupported version {version} at offset 4")
    expected = 16 + total * dim * 8
    if len(raw) != expected:
        raise DatasetError(
            f"{path.name}: payload is {len(raw) - 16} bytes, header at offset 8 "
            f"declares {total}x{dim} ({expected - 16} bytes)"
        )
    if total == 0 or dim == 0:
        raise DatasetError(f"{path.name}: empty shape {total}x{dim} in header")
    return np.frombuffer(raw[16:], dtype="<f8").reshape(total, dim).copy()


def save_dataset(records: list[VideoRecord], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for rec in records:
        rec.validate()
        write_features(_feature_path(directory, rec.id), rec.features)
        meta = {
            "id": rec.id,
            "fps_downsampled": rec.fps_downsampled,
            "source_dataset": rec.source_dataset,
            "gt_frame_scores": [float(s) for s in rec.gt_frame_scores],
            "user_summaries": (
                [[[int(s), int(e)] for s, e in iv] for iv in rec.user_summaries]
                if rec.user_summaries is not None
                else None
            ),
        }
        if rec.planted_boundaries is not None:
            meta["planted_boundaries"] = list(rec.planted_boundaries)
        with open(_meta_path(directory, rec.id), "w") as fh:
            json.dump(meta, fh, indent=1)
            fh.write("\n")


def load_dataset(directory) -> list[VideoRecord]:
    """Load and validate every record in a dataset directory, sorted by id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"dataset directory {directory} does not exist")
    records = []
    for feature_file in sorted(directory.glob("*.avsf")):
        video_id = feature_file.stem
        meta_file = _meta_path(directory, video_id)
        if not meta_file.exists():
            raise DatasetError(f"{video_id}: missing metadata file {meta_file.name}")
        features = read_features(feature_file)
        try:
            meta = json.loads(meta_file.read_text())
        except json.JSONDecodeError as err:
            raise DatasetError(f"{video_id}: malformed metadata: {err}") from err
        user_summaries = meta.get("user_summaries")
        rec = VideoRecord(
            id=str(meta.get("id", video_id)),
            features=features,
            gt_frame_scores=np.asarray(meta["gt_frame_scores"], dtype=np.float64),
            user_summaries=(
                [[(int(s), int(e)) for s, e in iv] for iv in user_summaries]
                if user_summaries is not None
                else None
            ),
            fps_downsampled=float(meta.get("fps_downsampled", 2.0)),
            source_dataset=str(meta.get("source_dataset", "unknown")),
            planted_boundaries=(
                tuple(meta["planted_boundaries"])
                if "planted_boundaries" in meta
                else None
            ),
        )
        if rec.id != video_id:
            raise DatasetError(
                f"{video_id}: metadata id {rec.id!r} does not match filename"
            )
        rec.validate()
        records.append(rec)
    return records


@dataclass(frozen=True)
class SplitSpec:
    """Seeded 80/20 partition; foreign-source records only ever train."""

    seed: int
    test_fraction: float = 0.20
    augment_tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError(f"test_fraction must be in (0, 1), got {self.test_fraction}")


def make_split(
    records: list[VideoRecord], spec: SplitSpec
) -> tuple[list[VideoRecord], list[VideoRecord]]:
    """Shuffle the primary records, carve off the test fraction, and append
    any augmentation-tagged records to the training side only."""
    primary = [r for r in records if r.source_dataset not in spec.augment_tags]
    extra = [r for r in records if r.source_dataset in spec.augment_tags]
    if len(primary) < 2:
        raise ValueError(f"need at least 2 primary records to split, got {len(primary)}")
    order = np.random.default_rng(spec.seed).permutation(len(primary))
    n_test = int(round(spec.test_fraction * len(primary)))
    n_test = min(max(n_test, 1), len(primary) - 1)
    test = [primary[i] for i in order[:n_test]]
    train = [primary[i] for i in order[n_test:]] + extra
    return train, test


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for the synthetic corpus."""

    n_videos: int = 10
    frames_range: tuple[int, int] = (60, 96)
    feature_dim: int = 16
    n_shots_range: tuple[int, int] = (6, 10)
    exact_shot_length: int | None = None  # overrides frame/shot ranges
    noise_scale: float = 0.2
    prototype_scale: float = 1.0
    content_amplitude: float = 1.0
    # the gap keeps every low-score subset below a single planted shot's
    # value, so the planted set is the unique knapsack optimum
    high_score: float = 0.9
    low_score: float = 0.05
    score_jitter: float = 0.02
    n_users: int = 3
    user_score_jitter: float = 0.05
    budget_fraction: float = sel.DEFAULT_BUDGET
    source_tag: str = "synthetic"


def _random_boundaries(
    rng: np.random.Generator, total: int, n_shots: int, min_len: int
) -> tuple[int, ...]:
    """Random partition of [0, total) into n_shots parts of >= min_len frames."""
    slack = total - n_shots * min_len
    if slack < 0:
        raise ValueError(f"{total} frames cannot hold {n_shots} shots of >= {min_len}")
    cuts = np.sort(rng.integers(0, slack + 1, size=n_shots - 1))
    bounds = [0]
    for i in range(n_shots - 1):
        bounds.append(int(cuts[i]) + (i + 1) * min_len)
    bounds.append(total)
    return tuple(bounds)


def generate_synthetic(
    seed: int, spec: SyntheticSpec = SyntheticSpec()
) -> list[VideoRecord]:
    """Seeded corpus of piecewise-constant videos with planted summaries.

    Important shots point along +axis0 and together fill the summary budget
    as tightly as possible, so ground-truth knapsack selection recovers
    exactly the planted set; unimportant shots point along -axis0.
    """
    if spec.feature_dim < 2:
        raise ValueError("feature_dim must be >= 2 to keep adjacent shots distinct")
    rng = np.random.default_rng(seed)
    records = []
    for v in range(spec.n_videos):
        if spec.exact_shot_length is not None:
            length = spec.exact_shot_length
            n_shots = max(2, int(rng.integers(*_as_span(spec.n_shots_range))))
            total = n_shots * length
            bounds = tuple(range(0, total + 1, length))
        else:
            total = int(rng.integers(spec.frames_range[0], spec.frames_range[1] + 1))
            n_shots = int(rng.integers(*_as_span(spec.n_shots_range)))
            n_shots = max(2, min(n_shots, total // 4))
            bounds = _random_boundaries(rng, total, n_shots, min_len=4)
        seg = ShotSegmentation(bounds)
        shot_spans = seg.shots()
        lengths = [end - start for start, end in shot_spans]

        # plant the important set: greedily fill the budget so that no
        # leftover capacity can hold any other shot
        capacity = sel.budget_capacity(total, spec.budget_fraction)
        order = rng.permutation(n_shots)
        planted = np.zeros(n_shots, dtype=bool)
        remaining = capacity
        for i in order:
            if lengths[i] <= remaining:
                planted[i] = True
                remaining -= lengths[i]

        prototypes = rng.normal(0.0, spec.prototype_scale, size=(n_shots, spec.feature_dim))
        prototypes[:, 0] = np.where(planted, spec.content_amplitude, -spec.content_amplitude)

        features = np.empty((total, spec.feature_dim))
        scores = np.empty(total)
        for i, (start, end) in enumerate(shot_spans):
            features[start:end] = prototypes[i] + rng.normal(
                0.0, spec.noise_scale, size=(end - start, spec.feature_dim)
            )
            base = spec.high_score if planted[i] else spec.low_score
            jitter = rng.uniform(-spec.score_jitter, spec.score_jitter)
            scores[start:end] = np.clip(base + jitter, 0.0, 1.0)

        shot_means = np.array([scores[s:e].mean() for s, e in shot_spans])
        user_summaries = []
        for _ in range(spec.n_users):
            noisy = np.clip(
                shot_means + rng.normal(0.0, spec.user_score_jitter, size=n_shots),
                0.0,
                1.0,
            )
            user_scores = np.repeat(noisy, lengths)
            user_summaries.append(
                [
                    (int(s), int(e))
                    for s, e in sel.ground_truth_summary(
                        user_scores, seg, spec.budget_fraction
                    ).intervals
                ]
            )

        records.append(
            VideoRecord(
                id=f"{spec.source_tag}_{v:03d}",
                features=features,
                gt_frame_scores=scores,
                user_summaries=user_summaries,
                fps_downsampled=2.0,
                source_dataset=spec.source_tag,
                planted_boundaries=bounds,
            )
        )
    return records


def _as_span(value_range: tuple[int, int]) -> tuple[int, int]:
    lo, hi = value_range
    if lo > hi:
        raise ValueError(f"empty range {value_range}")
    return lo, hi + 1
