"""Pretraining loop over featurized clips with in-batch segment sampling."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..features import BinauralSpectrogram, sample_segments
from ..nn import OptimizerState
from ..seeds import derive_seed
from .config import ModelConfig
from .net import GramModel, pretrain_step


@dataclass
class TrainConfig:
    steps: int = 300
    batch_clips: int = 4
    segments_per_clip: int = 16
    base_lr: float = 1e-3     # toy scale; paper-scale runs use 2e-4
    warmup_steps: int = 30    # paper-scale runs use 10000
    seed: int = 0
    log_every: int = 10

    def to_dict(self):
        return asdict(self)


def make_batch(clips: list, step: int, cfg: TrainConfig) -> np.ndarray:
    """Deterministic batch: pick clips, crop 16 segments from each."""
    rng = np.random.default_rng(derive_seed(cfg.seed, "clips", step))
    chosen = rng.integers(0, len(clips), size=cfg.batch_clips)
    segments = []
    for slot, clip_idx in enumerate(chosen):
        batch = sample_segments(
            BinauralSpectrogram(clips[int(clip_idx)]),
            derive_seed(cfg.seed, "segments", step, slot),
            n_segments=cfg.segments_per_clip)
        segments.append(batch.segments)
    return np.concatenate(segments, axis=0)


def evaluate_loss(model: GramModel, clips: list, seed: int = 0,
                  batch_clips: int = 4) -> float:
    """Masked MSE on a frozen evaluation batch (fixed segments, fixed masks)."""
    cfg = TrainConfig(batch_clips=batch_clips, seed=seed)
    batch = make_batch(clips, 0, cfg)
    mask_seeds = [derive_seed(seed, "eval-mask", i) for i in range(batch.shape[0])]
    loss, _ = model.forward_loss(batch, mask_seeds)
    return loss.item()


def pretrain(clips: list, model_cfg: ModelConfig, train_cfg: TrainConfig,
             log_path=None) -> tuple:
    """Train from scratch on featurized clips; returns (model, losses)."""
    model = GramModel(model_cfg)
    opt_state = OptimizerState()
    losses = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for step in range(train_cfg.steps):
            batch = make_batch(clips, step, train_cfg)
            mask_seeds = [derive_seed(train_cfg.seed, "mask", step, i)
                          for i in range(batch.shape[0])]
            loss = pretrain_step(model, batch, opt_state, step, train_cfg.steps,
                                 mask_seeds, train_cfg.base_lr,
                                 train_cfg.warmup_steps)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} at step {step}")
            losses.append(loss)
            if log_fh and (step % train_cfg.log_every == 0
                           or step == train_cfg.steps - 1):
                from ..nn import cosine_warmup_lr

                lr = cosine_warmup_lr(step, train_cfg.steps,
                                      warmup=train_cfg.warmup_steps,
                                      base_lr=train_cfg.base_lr)
                log_fh.write(json.dumps({"step": step, "lr": lr, "loss": loss},
                                        sort_keys=True) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    return model, losses
