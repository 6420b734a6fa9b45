"""Loss, batched SGD with early stopping, and the gradient-check harness.

Training minimizes mean squared error between predicted and annotated frame
scores. Sequences vary in length, so there is no padding: gradients from the
sequences of a mini-batch are summed (in batch order, deterministically) and
one plain SGD step is applied per batch. After every epoch the model is
scored on held-out videos by summary F-measure; training stops once that
F-score has strictly decreased for ``patience`` epochs in a row, and the
best-scoring epoch's parameters are returned.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from . import pipeline
from .dataset import VideoRecord
from .decoder import AvsModel, decode_sequence, init_model
from .numerics import GradientTape, Matrix

__all__ = [
    "TrainConfig",
    "TrainReport",
    "EpochStats",
    "TrainingDiverged",
    "mse_loss",
    "train",
    "GradCheckDims",
    "grad_check",
]


class TrainingDiverged(RuntimeError):
    """Raised when the training loss turns non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.15
    batch_size: int = 16
    attention_scale: int = 9
    max_epochs: int = 60
    patience: int = 5
    seed: int = 0
    clip_norm: float | None = None
    budget_fraction: float = 0.15
    agg: str = "mean"
    teacher_forcing: bool = True
    target_train_loss: float | None = None  # early exit for overfit runs

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_f: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    best_f: float = 0.0
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": e.epoch, "train_loss": e.train_loss, "val_f": e.val_f}
                for e in self.epochs
            ],
            "stop_epoch": self.stop_epoch,
            "best_epoch": self.best_epoch,
            "best_f": self.best_f,
            "wall_time_s": self.wall_time_s,
        }


def mse_loss(pred, target) -> float:
    """Mean squared difference between two equal-length score vectors."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {t.shape[0]}")
    d = p - t
    return float(d @ d) / len(d)


def _sequence_loss(model: AvsModel, record: VideoRecord, teacher_forcing: bool) -> Matrix:
    """Scalar MSE between decoded and annotated scores, built on the tape."""
    annotations = model.encode(record.features)
    teacher = record.gt_frame_scores if teacher_forcing else None
    predicted = decode_sequence(model, annotations, teacher=teacher)
    target = Matrix(record.gt_frame_scores.reshape(-1, 1))
    diff = nm.sub(predicted, target)
    return nm.scale(nm.sum_all(nm.mul(diff, diff)), 1.0 / record.n_frames)


def sequence_gradients(
    model: AvsModel, record: VideoRecord, teacher_forcing: bool = True
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and per-parameter gradient for one sequence."""
    with GradientTape() as tape:
        loss = _sequence_loss(model, record, teacher_forcing)
    grads = tape.backward(loss)
    return loss.item(), {name: grads.get(p) for name, p in model.parameters()}


def batch_gradients(
    model: AvsModel, records: list[VideoRecord], teacher_forcing: bool = True
) -> tuple[list[float], dict[str, np.ndarray]]:
    """Per-sequence losses and the summed gradient, in batch order."""
    total: dict[str, np.ndarray] = {
        name: np.zeros_like(p.data) for name, p in model.parameters()
    }
    losses = []
    for record in records:
        loss, grads = sequence_gradients(model, record, teacher_forcing)
        losses.append(loss)
        for name in total:
            total[name] += grads[name]
    return losses, total


def _apply_update(model: AvsModel, grads: dict[str, np.ndarray],
                  lr: float, clip_norm: float | None) -> None:
    if clip_norm is not None:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        if norm > clip_norm:
            factor = clip_norm / norm
            grads = {name: g * factor for name, g in grads.items()}
    for name, param in model.parameters():
        param.data -= lr * grads[name]


def train(
    model: AvsModel,
    train_records: list[VideoRecord],
    val_records: list[VideoRecord],
    config: TrainConfig,
    log=None,
) -> tuple[AvsModel, TrainReport]:
    """SGD until the validation F-score drops ``patience`` epochs in a row.

    Returns the parameters of the best validation epoch, not the last one.
    ``log`` is an optional callable receiving one line per epoch.
    """
    if not train_records:
        raise ValueError("training set is empty")
    if not val_records:
        raise ValueError("validation set is empty")
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    val_segs = {r.id: pipeline.segment_record(r) for r in val_records}

    report = TrainReport()
    best_model = model.clone()
    best_f = -1.0
    prev_f = None
    descent_streak = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_records))
        epoch_losses: list[float] = []
        for lo in range(0, len(order), config.batch_size):
            batch = [train_records[i] for i in order[lo : lo + config.batch_size]]
            losses, grads = batch_gradients(model, batch, config.teacher_forcing)
            if not all(np.isfinite(losses)):
                raise TrainingDiverged(epoch)
            _apply_update(model, grads, config.learning_rate, config.clip_norm)
            epoch_losses.extend(losses)

        train_loss = sum(epoch_losses) / len(epoch_losses)
        val_f, _ = pipeline.evaluate_model(
            model,
            val_records,
            budget_fraction=config.budget_fraction,
            agg=config.agg,
            segmentations=val_segs,
        )
        report.epochs.append(EpochStats(epoch, train_loss, val_f))
        report.stop_epoch = epoch
        if log is not None:
            log(f"epoch {epoch:3d}  train_mse {train_loss:.6f}  val_f {val_f:.2f}")

        if val_f > best_f:
            best_f = val_f
            best_model = model.clone()
            report.best_epoch = epoch
            report.best_f = val_f
        if prev_f is not None and val_f < prev_f:
            descent_streak += 1
        else:
            descent_streak = 0
        prev_f = val_f
        if descent_streak >= config.patience:
            break
        if config.target_train_loss is not None and train_loss < config.target_train_loss:
            break

    report.wall_time_s = time.perf_counter() - started
    return best_model, report


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheckDims:
    frames: int = 4
    feature_dim: int = 5
    hidden: int = 3
    layers: int = 2
    attention_scale: int = 3


def grad_check(
    variant: str,
    dims: GradCheckDims = GradCheckDims(),
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    Every parameter entry is perturbed by +-step and the loss re-evaluated
    untracked. The denominator is floored at 1e-3 so entries whose true
    gradient sits below finite-difference resolution compare by absolute
    error instead of noise ratio.
    """
    rng = np.random.default_rng(seed)
    model = init_model(
        variant,
        dims.feature_dim,
        hidden_size=dims.hidden,
        num_layers=dims.layers,
        attention_scale=dims.attention_scale,
        seed=seed,
        attention_size=dims.hidden,
    )
    # healthier magnitudes than the training init, to exercise the gates
    for _, param in model.parameters():
        param.data[...] = rng.uniform(-0.4, 0.4, size=param.shape)
    record = VideoRecord(
        id="gradcheck",
        features=rng.normal(0.0, 1.0, size=(dims.frames, dims.feature_dim)),
        gt_frame_scores=rng.uniform(0.0, 1.0, size=dims.frames),
    )

    with GradientTape() as tape:
        loss = _sequence_loss(model, record, teacher_forcing=True)
    grads = tape.backward(loss)

    def loss_value() -> float:
        return _sequence_loss(model, record, teacher_forcing=True).item()

    worst = 0.0
    for _, param in model.parameters():
        analytic = grads.get(param)
        flat = param.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = loss_value()
            flat[i] = original - step
            down = loss_value()
            flat[i] = original
            numeric = (up - down) / (2.0 * step)
            err = abs(aflat[i] - numeric) / max(abs(aflat[i]) + abs(numeric), 1e-3)
            worst = max(worst, err)
    return worst
