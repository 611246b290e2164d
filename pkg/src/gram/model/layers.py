"""Parameter initialization and the forward functions of all blocks.

Everything is functional: blocks take (x, params, prefix) and return a
Tensor, so the same code serves training, gradient checks and inference.
"""

from __future__ import annotations

import math

import numpy as np

from .. import nn
from .config import EncoderConfig

INIT_STD = 0.02


def sinusoidal_table(n_positions: int, dim: int) -> np.ndarray:
    """Fixed sin/cos positional table; row 0 is (0, 1, 0, 1, ...)."""
    if dim % 2:
        raise ValueError(f"positional dim must be even, got {dim}")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    idx = np.arange(dim // 2, dtype=np.float64)[None, :]
    angles = pos / 10000.0 ** (2.0 * idx / dim)
    table = np.zeros((n_positions, dim))
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


class ParamBuilder:
    """Accumulates named parameters with one deterministic rng."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)
        self.params: dict[str, nn.Tensor] = {}

    def _add(self, name, value):
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        self.params[name] = nn.Tensor(value, requires_grad=True)

    def normal(self, name, shape, std=INIT_STD):
        self._add(name, self.rng.standard_normal(shape) * std)

    def zeros(self, name, shape):
        self._add(name, np.zeros(shape))

    def ones(self, name, shape):
        self._add(name, np.ones(shape))

    def const(self, name, value):
        self._add(name, np.asarray(value, dtype=np.float64))

    def linear(self, name, fan_in, fan_out):
        self.normal(f"{name}.w", (fan_in, fan_out))
        self.zeros(f"{name}.b", (fan_out,))

    def norm(self, name, dim):
        self.ones(f"{name}.g", (dim,))
        self.zeros(f"{name}.b", (dim,))


def linear(x, params, name):
    return nn.add(nn.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def norm(x, params, name):
    return nn.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def build_attention(pb: ParamBuilder, prefix: str, dim: int):
    for proj in ("q", "k", "v", "o"):
        pb.linear(f"{prefix}.{proj}", dim, dim)


def attention(x, params, prefix, heads: int, window: int = 0):
    """Multi-head self-attention, optionally confined to contiguous windows.

    window w > 0 partitions the sequence into groups of w tokens and
    restricts attention to each group; w = 0 means full global attention.
    """
    batch, seq, dim = x.shape
    head_dim = dim // heads
    q, k, v = (linear(x, params, f"{prefix}.{p}") for p in "qkv")

    def split(t):
        t = nn.reshape(t, (batch, seq, heads, head_dim))
        return nn.transpose(t, (0, 2, 1, 3))  # (B, H, T, Dh)

    q, k, v = split(q), split(k), split(v)
    if window:
        if seq % window:
            raise ValueError(f"window {window} does not divide length {seq}")
        groups = seq // window
        shape5 = (batch, heads, groups, window, head_dim)
        q, k, v = (nn.reshape(t, shape5) for t in (q, k, v))
        kt = nn.transpose(k, (0, 1, 2, 4, 3))
    else:
        kt = nn.transpose(k, (0, 1, 3, 2))
    scores = nn.mul(nn.matmul(q, kt), 1.0 / math.sqrt(head_dim))
    ctx = nn.matmul(nn.softmax(scores), v)
    ctx = nn.reshape(ctx, (batch, heads, seq, head_dim))
    ctx = nn.transpose(ctx, (0, 2, 1, 3))
    ctx = nn.reshape(ctx, (batch, seq, dim))
    return linear(ctx, params, f"{prefix}.o")


def build_transformer_block(pb: ParamBuilder, prefix: str, dim: int, mlp_ratio=4):
    pb.norm(f"{prefix}.ln1", dim)
    build_attention(pb, f"{prefix}.attn", dim)
    pb.norm(f"{prefix}.ln2", dim)
    pb.linear(f"{prefix}.mlp1", dim, mlp_ratio * dim)
    pb.linear(f"{prefix}.mlp2", mlp_ratio * dim, dim)


def transformer_block(x, params, prefix, heads, window: int = 0):
    h = attention(norm(x, params, f"{prefix}.ln1"), params, f"{prefix}.attn",
                  heads, window)
    x = nn.add(x, h)
    h = linear(nn.gelu(linear(norm(x, params, f"{prefix}.ln2"), params,
                              f"{prefix}.mlp1")), params, f"{prefix}.mlp2")
    return nn.add(x, h)


def build_mamba_block(pb: ParamBuilder, prefix: str, cfg: EncoderConfig):
    dim, inner, n = cfg.dim, cfg.expand * cfg.dim, cfg.state_dim
    pb.norm(f"{prefix}.ln", dim)
    pb.linear(f"{prefix}.in_proj", dim, 2 * inner)
    pb.normal(f"{prefix}.conv.w", (cfg.conv_kernel, inner),
              std=1.0 / math.sqrt(cfg.conv_kernel))
    pb.zeros(f"{prefix}.conv.b", (inner,))
    pb.normal(f"{prefix}.dt_proj.w", (inner, inner))
    # bias so softplus(bias) starts log-uniform in [1e-3, 1e-1]
    dt = np.exp(pb.rng.uniform(math.log(1e-3), math.log(1e-1), inner))
    pb.const(f"{prefix}.dt_proj.b", np.log(np.expm1(dt)))
    pb.normal(f"{prefix}.b_proj.w", (inner, n))
    pb.normal(f"{prefix}.c_proj.w", (inner, n))
    pb.const(f"{prefix}.a_log", np.tile(np.log(np.arange(1, n + 1, dtype=np.float64)),
                                        (inner, 1)))
    pb.ones(f"{prefix}.d_skip", (inner,))
    pb.linear(f"{prefix}.out_proj", inner, dim)


def mamba_block(x, params, prefix, cfg: EncoderConfig):
    """Selective-SSM block: causal depthwise conv, SiLU gate, diagonal scan.

    Discretization is zero-order hold for the decay (exp(delta*A)) and
    first-order for the input (delta*B) unless cfg.exact_discretization.
    """
    batch, seq, _ = x.shape
    inner = cfg.expand * cfg.dim
    h = norm(x, params, f"{prefix}.ln")
    xz = linear(h, params, f"{prefix}.in_proj")
    x_in = xz[:, :, :inner]
    z = xz[:, :, inner:]

    # causal depthwise conv over time, kernel taps applied as shifted slices
    padded = nn.pad_axis(x_in, cfg.conv_kernel - 1, 0, axis=1)
    conv = None
    for k in range(cfg.conv_kernel):
        tap = nn.mul(padded[:, k:k + seq, :], params[f"{prefix}.conv.w"][k])
        conv = tap if conv is None else nn.add(conv, tap)
    x_c = nn.silu(nn.add(conv, params[f"{prefix}.conv.b"]))

    delta = nn.softplus(linear(x_c, params, f"{prefix}.dt_proj"))
    b_mat = nn.matmul(x_c, params[f"{prefix}.b_proj.w"])
    c_mat = nn.matmul(x_c, params[f"{prefix}.c_proj.w"])
    a_diag = nn.mul(nn.exp(params[f"{prefix}.a_log"]), -1.0)
    y = nn.selective_scan(x_c, delta, a_diag, b_mat, c_mat,
                          exact_discretization=cfg.exact_discretization)
    y = nn.add(y, nn.mul(x_c, params[f"{prefix}.d_skip"]))
    y = nn.mul(y, nn.silu(z))  # gate
    return nn.add(x, linear(y, params, f"{prefix}.out_proj"))
