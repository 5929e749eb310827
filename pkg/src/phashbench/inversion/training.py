"""Decoder training (AdamW, cosine-annealed lr) and reconstruction metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import image_ops
from ..rng import substream
from .data import HashImageDataset
from .model import DecoderModel


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    initial_lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")


@dataclass(frozen=True)
class TrainResult:
    loss_curve: tuple[float, ...]
    lr_curve: tuple[float, ...]
    n_params: int


class AdamW:
    """Decoupled weight decay Adam; one shared step counter for all params."""

    def __init__(self, params, beta1: float, beta2: float, weight_decay: float, eps: float = 1e-8) -> None:
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.t
        bias2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            m += (1.0 - b1) * (p.grad - m)
            v += (1.0 - b2) * (p.grad**2 - v)
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.value -= lr * (update + self.weight_decay * p.value)


def cosine_lr(initial_lr: float, epoch: int, total_epochs: int) -> float:
    """lr_t = lr0 * 0.5 * (1 + cos(pi * t / T)), annealing toward zero."""
    return initial_lr * 0.5 * (1.0 + np.cos(np.pi * epoch / total_epochs))


def train(model: DecoderModel, ds: HashImageDataset, cfg: TrainConfig) -> TrainResult:
    """Minimize mean squared reconstruction error over the training split.

    Deterministic given seeds; aborts with :class:`DivergenceError` (and the
    offending epoch/batch in the message) if the loss leaves the reals.
    """
    x_all, y_all = ds.train_pairs()
    m = x_all.shape[0]
    if m == 0:
        raise ValueError("training split is empty")
    rng = substream(cfg.seed, "train")
    opt = AdamW(model.params, cfg.beta1, cfg.beta2, cfg.weight_decay)
    loss_curve = []
    lr_curve = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(cfg.initial_lr, epoch, cfg.epochs)
        order = rng.permutation(m)
        total = 0.0
        for start in range(0, m, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            model.zero_grads()
            out = model.forward_batch(xb)
            diff = out - yb
            loss = float(np.mean(diff**2))
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            model.backward_batch(2.0 * diff / diff.size)
            opt.step(lr)
            total += loss * len(idx)
        loss_curve.append(total / m)
        lr_curve.append(lr)
    return TrainResult(
        loss_curve=tuple(loss_curve),
        lr_curve=tuple(lr_curve),
        n_params=model.num_params(),
    )


@dataclass(frozen=True)
class InversionReport:
    """Per-pair reconstruction quality plus mean and std aggregates."""

    l2_values: tuple[float, ...]
    ssim_values: tuple[float, ...]

    @property
    def mean_l2(self) -> float:
        return float(np.mean(self.l2_values))

    @property
    def std_l2(self) -> float:
        return float(np.std(self.l2_values))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_values))

    @property
    def std_ssim(self) -> float:
        return float(np.std(self.ssim_values))


def evaluate_inversion(model: DecoderModel, ds: HashImageDataset, split: str = "test") -> InversionReport:
    """Reconstruct every pair in the chosen split and score against truth."""
    if split == "test":
        x, y = ds.test_pairs()
    elif split == "train":
        x, y = ds.train_pairs()
    else:
        raise ValueError(f"split must be train or test, got {split!r}")
    if x.shape[0] == 0:
        raise ValueError(f"{split} split is empty")
    l2s, ssims = [], []
    for start in range(0, x.shape[0], 64):
        out = model.forward_batch(x[start : start + 64])
        for recon, truth in zip(out, y[start : start + 64]):
            l2s.append(image_ops.l2_normalized(recon, truth))
            ssims.append(image_ops.ssim(recon, truth))
    return InversionReport(l2_values=tuple(l2s), ssim_values=tuple(ssims))
