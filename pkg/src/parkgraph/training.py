"""MAE objective with random horizons, Adam, and validation-based model selection."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .autodiff import NonFiniteError, ShapeError, Tensor, as_tensor, backward
from .model import Seq2SeqModel
from .preprocess import Windows

log = logging.getLogger(__name__)

EVAL_HORIZONS = (1, 2, 4, 8)


class TrainingDivergedError(RuntimeError):
    """A non-finite value appeared; ``batch`` is None when it surfaced during evaluation."""

    def __init__(self, epoch: int, batch: int | None, learning_rate: float, detail: str):
        where = f"batch {batch}" if batch is not None else "evaluation"
        super().__init__(f"non-finite loss at epoch {epoch}, {where} (lr={learning_rate}): {detail}")
        self.epoch, self.batch, self.learning_rate = epoch, batch, learning_rate


@dataclass
class TrainConfig:
    batch_size: int = 512
    epochs: int = 50
    M: int = 48
    n_max: int = 8
    ggnn_steps: int = 5
    dropout: float = 0.3
    learning_rate: float = 1e-3
    seed: int = 0
    teacher_forcing_ratio: float = 1.0
    grad_clip: float = 5.0
    eval_horizons: tuple[int, ...] = EVAL_HORIZONS

    def __post_init__(self):
        self.eval_horizons = tuple(self.eval_horizons)
        if self.batch_size < 1 or self.epochs < 0 or self.M < 1 or self.n_max < 1 or self.ggnn_steps < 0:
            raise ValueError("batch size, M and n_max must be positive; epochs and ggnn_steps non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ValueError("learning rate and gradient clip must be positive")
        if not 0.0 <= self.teacher_forcing_ratio <= 1.0:
            raise ValueError("teacher forcing ratio must lie in [0, 1]")
        if max(self.eval_horizons) > self.n_max:
            raise ValueError("evaluation horizons cannot exceed n_max")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eval_horizons"] = list(self.eval_horizons)
        return d


def mae_loss(pred, target) -> Tensor:
    """Mean absolute error over every (step, cluster) entry (and batch item)."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.data.size == 0:
        raise ShapeError("empty prediction")
    return (pred - target).abs().mean()


def sample_horizon(rng: np.random.Generator, n_max: int = 8) -> int:
    """Uniform draw from ``1..n_max``."""
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    return int(rng.integers(1, n_max + 1))


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, self.betas, self.eps = lr, betas, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def clip(self, max_norm: float) -> float:
        total = math.sqrt(sum(float((p.grad**2).sum()) for p in self.params.values() if p.grad is not None))
        if total > max_norm:
            scale = max_norm / (total + 1e-12)
            for p in self.params.values():
                if p.grad is not None:
                    p.grad = p.grad * scale
        return total

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            self.m[k] = b1 * self.m[k] + (1 - b1) * p.grad
            self.v[k] = b2 * self.v[k] + (1 - b2) * p.grad**2
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_mae: float
    val_mae: float


@dataclass
class TrainResult:
    model: Seq2SeqModel
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def history_csv(self) -> str:
        return history_to_csv(self.history)


def history_to_csv(history: list[EpochRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_mae", "val_mae"])
    for rec in history:
        writer.writerow([rec.epoch, repr(rec.train_mae), repr(rec.val_mae)])
    return buf.getvalue()


def predict_windows(model, windows: Windows, steps: int, batch_size: int = 512) -> np.ndarray:
    """Eval-mode forecasts ``(W, steps, K)`` without teacher forcing."""
    chunks = []
    for start in range(0, len(windows), batch_size):
        part = windows.subset(slice(start, start + batch_size))
        chunks.append(model.predict(part.inputs, part.calendar, steps))
    if not chunks:
        return np.zeros((0, steps, windows.inputs.shape[-1]))
    return np.concatenate(chunks, axis=0)


def horizon_mae(model, windows: Windows, horizons=EVAL_HORIZONS, batch_size: int = 512) -> float:
    """Normalised MAE at each listed step, averaged over the steps."""
    steps = max(horizons)
    pred = predict_windows(model, windows, steps, batch_size)
    errs = np.abs(pred - windows.targets[:, :steps])
    return float(np.mean([errs[:, h - 1].mean() for h in horizons]))


def snapshot(model: Seq2SeqModel) -> dict[str, np.ndarray]:
    return {k: p.data.copy() for k, p in model.parameters().items()}


def restore(model: Seq2SeqModel, arrays: dict[str, np.ndarray]) -> None:
    params = model.parameters()
    if set(params) != set(arrays):
        raise ValueError("parameter names do not match the model")
    for k, p in params.items():
        if p.data.shape != arrays[k].shape:
            raise ShapeError(f"{k}: shape {arrays[k].shape} != {p.data.shape}")
        p.data = arrays[k].copy()


def train(model: Seq2SeqModel, train_windows: Windows, val_windows: Windows, cfg: TrainConfig,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Fit ``model`` in place and leave it holding the best-validation parameters.

    Epoch 0 records the untrained model, scoring both splits with the
    evaluation metric; later rows report the mean training-batch loss.
    """
    if len(train_windows) == 0 or len(val_windows) == 0:
        raise ValueError("training and validation windows must be non-empty")
    enc = model.encoder_cfg
    if enc.M != cfg.M:
        raise ValueError(f"model expects M={enc.M}, config says M={cfg.M}")
    if enc.kind == "gnn" and enc.ggnn_steps != cfg.ggnn_steps:
        raise ValueError(f"model propagates {enc.ggnn_steps} times, config says {cfg.ggnn_steps}")
    if train_windows.targets.shape[1] < cfg.n_max:
        raise ValueError(f"windows carry {train_windows.targets.shape[1]} targets, need n_max={cfg.n_max}")

    shuffle_rng, horizon_rng, dropout_rng, teacher_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4)
    )
    params = model.parameters()
    opt = Adam(params, lr=cfg.learning_rate)
    horizons = cfg.eval_horizons

    def score(windows: Windows, epoch: int) -> float:
        try:
            return horizon_mae(model, windows, horizons, cfg.batch_size)
        except NonFiniteError as exc:
            raise TrainingDivergedError(epoch, None, cfg.learning_rate, str(exc)) from exc

    val0 = score(val_windows, 0)
    train0 = score(train_windows, 0)
    history = [EpochRecord(0, train0, val0)]
    best_val, best_epoch, best = val0, 0, snapshot(model)
    if on_epoch:
        on_epoch(history[-1])

    n = len(train_windows)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total, seen = 0.0, 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            batch = train_windows.subset(order[start : start + cfg.batch_size])
            steps = sample_horizon(horizon_rng, cfg.n_max)
            mask = teacher_rng.random(steps) < cfg.teacher_forcing_ratio
            try:
                pred = model.forward(batch.inputs, batch.calendar, steps, teacher=batch.targets,
                                     teacher_mask=mask, train=True, dropout_p=cfg.dropout, rng=dropout_rng)
                loss = mae_loss(pred, batch.targets[:, :steps])
                opt.zero_grad()
                backward(loss, params.values())
            except NonFiniteError as exc:
                raise TrainingDivergedError(epoch, b, cfg.learning_rate, str(exc)) from exc
            value = float(loss.data)
            grad_norm = opt.clip(cfg.grad_clip)
            if not math.isfinite(value) or not math.isfinite(grad_norm):
                raise TrainingDivergedError(epoch, b, cfg.learning_rate, f"loss={value}, grad norm={grad_norm}")
            opt.step()
            total += value * len(batch)
            seen += len(batch)
        val = score(val_windows, epoch)
        history.append(EpochRecord(epoch, total / seen, val))
        log.info("epoch %d train_mae=%.5f val_mae=%.5f", epoch, total / seen, val)
        if on_epoch:
            on_epoch(history[-1])
        if val < best_val:
            best_val, best_epoch, best = val, epoch, snapshot(model)

    restore(model, best)
    return TrainResult(model, history, best_epoch)
