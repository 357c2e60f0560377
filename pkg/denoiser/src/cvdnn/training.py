"""Patch-based training of the residual denoiser.

Each step draws a batch of aligned random crops, normalizes every crop
by its parent sample's full-matrix RMS, and minimizes the residual MSE

    (1 / 2N) * sum_i || F(noisy_i) - (noisy_i - clean_i) ||_F^2

under an adaptive-moment optimizer whose learning rate drops by a fixed
factor at the configured epoch milestones.  Training is deterministic
given the seed, up to platform numerics.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch

from .data import crop_patches, split_indices
from .errors import ConfigError, TrainingDivergedError
from .model import CVDnCNN, ModelSpec, _SCALE_FLOOR, residual

NMSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class TrainConfig:
    patch: int = 64
    epochs: int = 150
    batch_size: int = 8
    lr: float = 1e-4
    milestones: tuple = (30, 60, 90, 120)
    decay: float = 0.4
    val_fraction: float = 0.1
    seed: int = 0
    limit: int | None = None

    def __post_init__(self):
        if self.patch < 1:
            raise ConfigError("patch must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        ms = tuple(self.milestones)
        if any(m < 1 for m in ms) or any(a >= b for a, b in zip(ms, ms[1:])):
            raise ConfigError("milestones must be strictly increasing positive epochs")
        object.__setattr__(self, "milestones", ms)
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must be in (0, 1]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.limit is not None and self.limit < 1:
            raise ConfigError("limit must be positive when given")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        data = dict(data)
        if "milestones" in data:
            data["milestones"] = tuple(data["milestones"])
        return cls(**data)


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Learning rate in force during 1-indexed `epoch`."""
    passed = sum(1 for m in config.milestones if m < epoch)
    return config.lr * config.decay ** passed


def residual_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """(1 / 2N) * sum of squared complex deviations over an N-sample batch."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    diff = pred - target
    return 0.5 * (diff.real ** 2 + diff.imag ** 2).sum() / pred.shape[0]


@dataclass
class TrainResult:
    spec: ModelSpec
    config: TrainConfig
    model: CVDnCNN
    epochs: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    def to_log_dict(self) -> dict:
        return {"kind": "train-log", "model": self.spec.to_dict(),
                "training": self.config.to_dict(), "epochs": self.epochs,
                "final": self.final, "elapsed_s": self.elapsed_s}


def _sample_scales(noisy: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(np.abs(noisy) ** 2, axis=(1, 2))).clip(min=_SCALE_FLOOR)


def _batch(noisy, clean, scales, idx):
    g = torch.from_numpy(np.ascontiguousarray(noisy[idx], dtype=np.complex64))
    target = torch.from_numpy((noisy[idx] - clean[idx]).astype(np.complex64))
    sc = torch.from_numpy(scales[idx].astype(np.float32))
    return g, target, sc


def _mean_loss(model, noisy, clean, scales, indices, batch_size) -> float:
    """Mean per-sample residual loss over full matrices, eval mode."""
    model.eval()
    total = 0.0
    with torch.no_grad():
        for lo in range(0, len(indices), batch_size):
            idx = indices[lo:lo + batch_size]
            g, target, sc = _batch(noisy, clean, scales, idx)
            loss = residual_loss(residual(model, g, scale=sc), target)
            total += float(loss) * len(idx)
    return total / len(indices)


def _nmse_stats(model, noisy, clean, scales, indices, batch_size) -> dict:
    """Grid-domain NMSE of the raw and enhanced estimates on `indices`."""
    model.eval()
    noisy_lin, enh_lin = [], []
    with torch.no_grad():
        for lo in range(0, len(indices), batch_size):
            idx = indices[lo:lo + batch_size]
            g, _, sc = _batch(noisy, clean, scales, idx)
            enhanced = (g - residual(model, g, scale=sc)).numpy()
            for j, i in enumerate(idx):
                den = max(float(np.sum(np.abs(clean[i]) ** 2, dtype=np.float64)),
                          _SCALE_FLOOR)
                noisy_lin.append(float(np.sum(np.abs(noisy[i] - clean[i]) ** 2,
                                              dtype=np.float64)) / den)
                enh_lin.append(float(np.sum(np.abs(enhanced[j] - clean[i]) ** 2,
                                            dtype=np.float64)) / den)
    noisy_lin = np.asarray(noisy_lin)
    enh_lin = np.asarray(enh_lin)

    def to_db(mean_lin):
        if mean_lin <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
            return NMSE_FLOOR_DB
        return float(10.0 * np.log10(mean_lin))

    mean_noisy = to_db(noisy_lin.mean())
    mean_enh = to_db(enh_lin.mean())
    return {"count": len(indices),
            "mean_noisy_nmse_db": mean_noisy,
            "mean_enhanced_nmse_db": mean_enh,
            "gain_db": mean_noisy - mean_enh,
            "improved_fraction": float(np.mean(enh_lin < noisy_lin))}


def train(noisy: np.ndarray, clean: np.ndarray, spec: ModelSpec,
          config: TrainConfig, progress: Callable | None = None) -> TrainResult:
    """Train a fresh network on (n, rows, cols) sample-pair arrays.

    Raises TrainingDivergedError as soon as any batch loss is not
    finite.  Returns the trained model plus per-epoch records and final
    validation NMSE statistics.
    """
    if noisy.shape != clean.shape or noisy.ndim != 3:
        raise ConfigError(f"expected matching (n, rows, cols) arrays, "
                          f"got {noisy.shape} and {clean.shape}")
    # the network trains in single precision
    noisy = np.ascontiguousarray(noisy, dtype=np.complex64)
    clean = np.ascontiguousarray(clean, dtype=np.complex64)
    if config.limit is not None:
        noisy, clean = noisy[:config.limit], clean[:config.limit]
    n = noisy.shape[0]
    if n < 1:
        raise ConfigError("dataset is empty")

    start = time.perf_counter()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    train_idx, val_idx = split_indices(n, config.val_fraction, rng)
    scales = _sample_scales(noisy)

    model = CVDnCNN(spec)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    scheduler = torch.optim.lr_scheduler.MultiStepLR(
        optimizer, milestones=list(config.milestones), gamma=config.decay)

    result = TrainResult(spec=spec, config=config, model=model)
    for epoch in range(1, config.epochs + 1):
        model.train()
        lr_now = optimizer.param_groups[0]["lr"]
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo:lo + config.batch_size]
            pn, pc = crop_patches(noisy, clean, idx, config.patch, rng)
            g = torch.from_numpy(pn)
            target = torch.from_numpy(pn - pc)
            sc = torch.from_numpy(scales[idx].astype(np.float32))
            loss = residual_loss(residual(model, g, scale=sc), target)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {float(loss.detach())!r} at epoch {epoch}, "
                    f"batch starting at sample {lo}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
        record = {"epoch": epoch, "lr": lr_now,
                  "train_loss": total / len(order)}
        if len(val_idx):
            record["val_loss"] = _mean_loss(model, noisy, clean, scales,
                                            val_idx, config.batch_size)
        result.epochs.append(record)
        if progress is not None:
            progress(record)
        scheduler.step()

    # final report scored on held-out samples when a split exists
    eval_idx = val_idx if len(val_idx) else train_idx
    result.final = _nmse_stats(model, noisy, clean, scales, eval_idx,
                               config.batch_size)
    result.final["evaluated_on"] = "validation" if len(val_idx) else "train"
    result.elapsed_s = time.perf_counter() - start
    model.eval()
    return result
