"""Pure-numpy implementations of the hot kernels.

These are the fallback backend and the semantic reference for the compiled
extension: both must agree to float64 round-off on identical inputs.
"""

from __future__ import annotations

import numpy as np

SINC_TAPS = 33
_HALF = SINC_TAPS // 2


def place_taps(out: np.ndarray, delays: np.ndarray, amps: np.ndarray) -> None:
    """Scatter-add windowed-sinc impulses into ``out`` (in place).

    Each (delay, amp) pair contributes a 33-tap Hann-windowed sinc centered
    at the fractional sample position ``delay``.  Taps falling outside the
    buffer are dropped.
    """
    delays = np.asarray(delays, dtype=np.float64)
    amps = np.asarray(amps, dtype=np.float64)
    if delays.size == 0:
        return
    base = np.rint(delays).astype(np.int64)
    offsets = np.arange(-_HALF, _HALF + 1, dtype=np.int64)
    idx = base[:, None] + offsets[None, :]
    t = idx.astype(np.float64) - delays[:, None]
    vals = amps[:, None] * np.sinc(t) * 0.5 * (1.0 + np.cos(2.0 * np.pi * t / SINC_TAPS))
    valid = (idx >= 0) & (idx < out.shape[0])
    np.add.at(out, idx[valid], vals[valid])


def selective_scan_fwd(u, delta, A, B, C, exact_discretization=False):
    """Sequential selective-state-space scan.

    u, delta: (batch, T, d); A: (d, n) diagonal decay (negative);
    B, C: (batch, T, n) input-dependent projections.

    State update per step: h = exp(delta*A) * h + bbar * u with
    bbar = delta*B (first order) or expm1(delta*A)/A * B (exact ZOH).
    Returns (y, hs) with y: (batch, T, d) and the full state trajectory
    hs: (batch, T, d, n) kept for the backward pass.
    """
    u = np.asarray(u)
    batch, T, d = u.shape
    n = A.shape[1]
    hs = np.zeros((batch, T, d, n), dtype=u.dtype)
    y = np.zeros((batch, T, d), dtype=u.dtype)
    h = np.zeros((batch, d, n), dtype=u.dtype)
    for t in range(T):
        dA = delta[:, t, :, None] * A[None, :, :]
        abar = np.exp(dA)
        if exact_discretization:
            coef = np.expm1(dA) / A[None, :, :]
        else:
            coef = delta[:, t, :, None]
        h = abar * h + coef * B[:, t, None, :] * u[:, t, :, None]
        hs[:, t] = h
        y[:, t] = np.einsum("bdn,bn->bd", h, C[:, t])
    return y, hs


def selective_scan_bwd(dy, u, delta, A, B, C, hs, exact_discretization=False):
    """Reverse-time gradients of selective_scan_fwd.

    Returns (du, ddelta, dA, dB, dC) matching the forward input shapes.
    """
    batch, T, d = u.shape
    du = np.zeros_like(u)
    ddelta = np.zeros_like(delta)
    dA = np.zeros_like(A)
    dB = np.zeros_like(B)
    dC = np.zeros_like(C)
    g = np.zeros((batch, d, A.shape[1]), dtype=u.dtype)
    for t in range(T - 1, -1, -1):
        dC[:, t] = np.einsum("bdn,bd->bn", hs[:, t], dy[:, t])
        g = g + dy[:, t, :, None] * C[:, t, None, :]
        h_prev = hs[:, t - 1] if t > 0 else np.zeros_like(g)
        dt = delta[:, t, :, None]
        dA_t = dt * A[None, :, :]
        abar = np.exp(dA_t)
        bu = B[:, t, None, :] * u[:, t, :, None]
        if exact_discretization:
            coef = np.expm1(dA_t) / A[None, :, :]
            dcoef_ddelta = abar
            dcoef_dA = (dt * abar - coef) / A[None, :, :]
        else:
            coef = dt
            dcoef_ddelta = np.ones_like(abar)
            dcoef_dA = np.zeros_like(abar)
        # h_t = abar * h_prev + coef * bu
        ddelta[:, t] = ((g * h_prev * abar * A[None, :, :]).sum(-1)
                        + (g * bu * dcoef_ddelta).sum(-1))
        dA += ((g * h_prev * abar * dt) + (g * bu * dcoef_dA)).sum(0)
        dB[:, t] = (g * coef * u[:, t, :, None]).sum(1)
        du[:, t] = (g * coef * B[:, t, None, :]).sum(-1)
        g = g * abar
    return du, ddelta, dA, dB, dC


def selective_scan_chunked(u, delta, A, B, C, chunk=16, exact_discretization=False):
    """Chunked scan: same recurrence evaluated blockwise in log space.

    Within each chunk the pairwise decay products exp(S_t - S_j) are formed
    from cumulative sums of delta*A, so the only sequential dependency is the
    inter-chunk state hand-off.  Forward only; serves as the independent
    implementation the sequential scan is checked against.
    """
    u = np.asarray(u)
    batch, T, d = u.shape
    n = A.shape[1]
    y = np.zeros((batch, T, d), dtype=u.dtype)
    h = np.zeros((batch, d, n), dtype=u.dtype)
    for start in range(0, T, chunk):
        end = min(start + chunk, T)
        L = end - start
        dA = delta[:, start:end, :, None] * A[None, None, :, :]   # (b, L, d, n)
        if exact_discretization:
            coef = np.expm1(dA) / A[None, None, :, :]
        else:
            coef = delta[:, start:end, :, None]
        bu = coef * B[:, start:end, None, :] * u[:, start:end, :, None]
        S = np.cumsum(dA, axis=1)                                 # log decay from chunk start
        # h_t = exp(S_t) h_in + sum_{j<=t} exp(S_t - S_j) bu_j
        decay_in = np.exp(S)
        pair = S[:, :, None] - S[:, None, :]                      # (b, L, L, d, n)
        mask = np.tril(np.ones((L, L), dtype=bool))
        pair = np.where(mask[None, :, :, None, None], pair, -np.inf)
        hs_chunk = decay_in * h[:, None] + np.einsum(
            "btjdn,bjdn->btdn", np.exp(pair), bu)
        y[:, start:end] = np.einsum("btdn,btn->btd", hs_chunk, C[:, start:end])
        h = hs_chunk[:, -1]
    return y
