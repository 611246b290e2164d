"""The masked-autoencoder model: patch embed, mask, encode, decode, loss.

The encoder (transformer or selective-SSM) sees only the visible 20% of
patches plus a CLS token; the decoder re-inserts learned [MASK] tokens at
the masked positions, runs local-global windowed attention, and a linear
head predicts the raw patch values.  Loss is MSE over masked patches only.
"""

from __future__ import annotations

import numpy as np

from .. import nn
from ..nn import serialize
from .config import ModelConfig
from .layers import (
    ParamBuilder,
    build_mamba_block,
    build_transformer_block,
    linear,
    mamba_block,
    norm,
    sinusoidal_table,
    transformer_block,
)
from .masking import MaskPlan, make_mask


def extract_patches(batch: np.ndarray, patch_cfg) -> np.ndarray:
    """Non-overlapping patch extraction, time-major then frequency.

    (B, C, T, F) -> (B, n_patches, C*pt*pf) where patch i*nf + j covers
    time rows [i*pt, (i+1)*pt) and mel columns [j*pf, (j+1)*pf).
    """
    b, c, t, f = batch.shape
    pc, pt, pf = patch_cfg.patch_dims
    if c != pc or t % pt or f % pf:
        raise ValueError(f"shape {batch.shape} not divisible by patch {patch_cfg.patch_dims}")
    nt, nf = t // pt, f // pf
    x = batch.reshape(b, c, nt, pt, nf, pf)
    x = x.transpose(0, 2, 4, 1, 3, 5)  # (B, nt, nf, C, pt, pf)
    return np.ascontiguousarray(x).reshape(b, nt * nf, pc * pt * pf)


def masked_mse(pred, target, mask_index: np.ndarray):
    """MSE over masked patch positions only.

    pred/target: (B, n_patches, patch_values); mask_index: (B, n_masked).
    """
    if mask_index.size == 0:
        raise ValueError("empty mask: loss undefined")
    idx = mask_index[:, :, None]
    diff = nn.gather(nn.as_tensor(pred), idx, axis=1) - nn.gather(
        nn.as_tensor(target), idx, axis=1)
    return nn.mean(nn.mul(diff, diff))


class GramModel:
    def __init__(self, config: ModelConfig, params: dict | None = None):
        self.config = config
        self.params = params if params is not None else self.init_params(config)
        self.enc_pos = sinusoidal_table(config.patch.n_patches, config.patch.embed_dim)
        self.dec_pos = sinusoidal_table(config.patch.n_patches, config.decoder.dim)

    @staticmethod
    def init_params(config: ModelConfig) -> dict:
        pb = ParamBuilder(config.init_seed)
        patch, enc, dec = config.patch, config.encoder, config.decoder
        pb.linear("embed", patch.patch_values, patch.embed_dim)
        if enc.cls_token:
            pb.normal("cls", (1, 1, patch.embed_dim))
        for i in range(enc.depth):
            if enc.backbone == "transformer":
                build_transformer_block(pb, f"encoder.{i}", enc.dim)
            else:
                build_mamba_block(pb, f"encoder.{i}", enc)
        if enc.depth > 0:
            pb.norm("encoder.ln_out", enc.dim)
        pb.normal("mask_token", (1, 1, dec.dim))
        pb.linear("dec_in", enc.dim, dec.dim)
        for i in range(dec.depth):
            build_transformer_block(pb, f"decoder.{i}", dec.dim)
        pb.norm("decoder.ln_out", dec.dim)
        pb.linear("head", dec.dim, patch.patch_values)
        return pb.params

    # ---- persistence ----

    def param_arrays(self) -> dict:
        return {k: t.data for k, t in self.params.items()}

    def save(self, path) -> None:
        serialize.save_arrays(path, self.param_arrays())

    @classmethod
    def load(cls, path, config: ModelConfig) -> "GramModel":
        arrays = serialize.load_arrays(path)
        params = {k: nn.Tensor(v, requires_grad=True) for k, v in arrays.items()}
        model = cls(config, params)
        for k in model.init_params(config):
            if k not in params:
                raise ValueError(f"checkpoint missing parameter {k!r}")
        return model

    # ---- forward pieces ----

    def embed_patches(self, raw: np.ndarray):
        """Raw patches -> embedded tokens with positional encoding added."""
        tokens = linear(nn.as_tensor(raw), self.params, "embed")
        return nn.add(tokens, self.enc_pos)

    def encode(self, tokens):
        """Run the encoder over (already positional) tokens.

        A CLS token is prepended (never masked); depth 0 is an exact
        identity used by debugging tests.
        """
        enc = self.config.encoder
        batch = tokens.shape[0]
        if enc.cls_token:
            cls = nn.broadcast_to(self.params["cls"], (batch, 1, tokens.shape[2]))
            tokens = nn.concat([cls, tokens], axis=1)
        for i in range(enc.depth):
            if enc.backbone == "transformer":
                tokens = transformer_block(tokens, self.params, f"encoder.{i}", enc.heads)
            else:
                tokens = mamba_block(tokens, self.params, f"encoder.{i}", enc)
        if enc.depth > 0:
            tokens = norm(tokens, self.params, "encoder.ln_out")
        return tokens

    def decode(self, latents, visible_index: np.ndarray, mask_index: np.ndarray):
        """Scatter visible latents + [MASK] tokens, run windowed attention."""
        dec = self.config.decoder
        n = self.config.patch.n_patches
        batch, n_masked = mask_index.shape
        proj = linear(latents, self.params, "dec_in")
        full = nn.scatter(proj, visible_index[:, :, None], axis=1, size=n)
        mask_tok = nn.broadcast_to(self.params["mask_token"],
                                   (batch, n_masked, dec.dim))
        full = nn.add(full, nn.scatter(mask_tok, mask_index[:, :, None], axis=1, size=n))
        full = nn.add(full, self.dec_pos)
        for i, window in enumerate(dec.window_sizes):
            full = transformer_block(full, self.params, f"decoder.{i}", dec.heads,
                                     window=window)
        full = norm(full, self.params, "decoder.ln_out")
        return linear(full, self.params, "head")

    def forward_loss(self, batch: np.ndarray, mask_seeds):
        """Full pretraining forward pass; returns (loss, masks)."""
        n = self.config.patch.n_patches
        masks = [make_mask(n, s, self.config.mask_ratio) for s in mask_seeds]
        if len(masks) != batch.shape[0]:
            raise ValueError("one mask seed per batch item required")
        vis_idx = np.stack([m.visible for m in masks])
        mask_idx = np.stack([m.masked for m in masks])

        raw = extract_patches(batch, self.config.patch)
        tokens = self.embed_patches(raw)
        visible = nn.gather(tokens, vis_idx[:, :, None], axis=1)
        latents = self.encode(visible)
        if self.config.encoder.cls_token:
            latents = latents[:, 1:, :]
        pred = self.decode(latents, vis_idx, mask_idx)
        return masked_mse(pred, nn.Tensor(raw), mask_idx), masks

    # ---- inference ----

    def encode_all(self, specs: np.ndarray):
        """Encode full (unmasked) segments: (B, 2, 200, 128) -> latents."""
        raw = extract_patches(specs, self.config.patch)
        return self.encode(self.embed_patches(raw))

    def extract_embedding(self, values: np.ndarray, mode: str = "clip_level") -> np.ndarray:
        """Fixed-width embedding of a (2, frames, 128) spectrogram.

        The clip is split into non-overlapping 200-frame chunks, chunk
        latents are concatenated in time and averaged over the time axis,
        which keeps the width independent of clip duration.  Localization
        mode keeps the CLS latent (transformer) or the patch mean (mamba).
        """
        frames = values.shape[1]
        seg = 200
        if frames < seg:
            raise ValueError(f"clip of {frames} frames shorter than one 200-frame chunk")
        chunks = np.stack([values[:, o:o + seg, :] for o in range(0, frames - seg + 1, seg)])
        with nn.no_grad():
            latents = self.encode_all(chunks).data
        has_cls = self.config.encoder.cls_token
        if mode == "localization":
            if self.config.encoder.backbone == "transformer":
                if not has_cls:
                    raise ValueError("localization embedding needs a CLS token")
                return latents[:, 0, :].mean(axis=0)
            patches = latents[:, 1:, :] if has_cls else latents
            return patches.mean(axis=(0, 1))
        if mode != "clip_level":
            raise ValueError(f"unknown embedding mode {mode!r}")
        patches = latents[:, 1:, :] if has_cls else latents
        nt, nf = self.config.patch.grid
        per_chunk = patches.reshape(len(chunks), nt, nf, -1)
        in_time = per_chunk.reshape(len(chunks) * nt, nf, -1)
        return in_time.mean(axis=0).reshape(-1)


def pretrain_step(model: GramModel, batch: np.ndarray, opt_state, step: int,
                  total_steps: int, mask_seeds, base_lr: float,
                  warmup: int) -> float:
    """One optimization step; returns the loss value."""
    from ..nn import adamw_step, cosine_warmup_lr

    loss, _ = model.forward_loss(batch, mask_seeds)
    loss.backward()
    grads = {}
    for name, t in model.params.items():
        if t.grad is not None:
            grads[name] = t.grad
            t.grad = None
    lr = cosine_warmup_lr(step, total_steps, warmup=warmup, base_lr=base_lr)
    adamw_step(model.param_arrays(), grads, opt_state, lr)
    return loss.item()
