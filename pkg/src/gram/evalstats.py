"""Frozen-embedding probes, DoA error, McNemar + FDR-BH statistics.

Probes are shallow (linear or one hidden layer) classifiers/regressors
trained with the same AdamW as the main model; statistics are exact where
small counts allow it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn

SIGNIFICANCE_LEVELS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


@dataclass
class ProbeConfig:
    kind: str = "classification"  # or "regression_unit_sphere"
    hidden: int = 256             # 0 = linear probe
    epochs: int = 200
    lr: float = 1e-2
    seed: int = 0
    val_fraction: float = 0.2
    patience: int = 25

    def __post_init__(self):
        if self.kind not in ("classification", "regression_unit_sphere"):
            raise ValueError(f"unknown probe kind {self.kind!r}")


@dataclass
class PairedOutcomes:
    """Contingency counts for two systems on the same items."""

    n11: int  # both correct
    n10: int  # A only
    n01: int  # B only
    n00: int  # both wrong

    def __post_init__(self):
        if min(self.n11, self.n10, self.n01, self.n00) < 0:
            raise ValueError("counts must be nonnegative")

    @classmethod
    def from_correctness(cls, a, b) -> "PairedOutcomes":
        a = np.asarray(a, dtype=bool)
        b = np.asarray(b, dtype=bool)
        if a.shape != b.shape:
            raise ValueError("outcome vectors differ in length")
        return cls(n11=int(np.sum(a & b)), n10=int(np.sum(a & ~b)),
                   n01=int(np.sum(~a & b)), n00=int(np.sum(~a & ~b)))


@dataclass
class DoaResult:
    errors_deg: np.ndarray
    median_deg: float = field(init=False)
    mean_deg: float = field(init=False)

    def __post_init__(self):
        self.errors_deg = np.asarray(self.errors_deg, dtype=np.float64)
        if np.any((self.errors_deg < 0) | (self.errors_deg > 180)):
            raise ValueError("angle errors must lie in [0, 180] degrees")
        self.median_deg = float(np.median(self.errors_deg))
        self.mean_deg = float(np.mean(self.errors_deg))


def doa_error(v, v_hat) -> float:
    """Angular error arccos(v . v_hat) in degrees; v_hat is normalized."""
    v = np.asarray(v, dtype=np.float64)
    v_hat = np.asarray(v_hat, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-6:
        raise ValueError(f"reference direction must be unit length, |v| = {np.linalg.norm(v)}")
    norm = np.linalg.norm(v_hat)
    if norm == 0:
        raise ValueError("zero-length prediction vector")
    cos = float(np.clip(np.dot(v, v_hat) / norm, -1.0, 1.0))
    return math.degrees(math.acos(cos))


def mcnemar(outcomes: PairedOutcomes) -> float:
    """Two-sided McNemar p-value on the discordant pairs.

    Exact binomial when n10 + n01 < 25, chi-squared with continuity
    correction otherwise.  No discordant pairs gives p = 1 by convention.
    """
    n10, n01 = outcomes.n10, outcomes.n01
    n = n10 + n01
    if n == 0:
        return 1.0
    if n < 25:
        k = min(n10, n01)
        tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0**n
        return min(1.0, 2.0 * tail)
    stat = (abs(n10 - n01) - 1.0) ** 2 / n
    return math.erfc(math.sqrt(stat / 2.0))  # chi-squared(1) survival


def fdr_bh(p_values, q: float = 0.05):
    """Benjamini-Hochberg adjusted p-values and the rejection set at level q.

    adjusted[(i)] = min_{j >= i} p_(j) * m / j in sort order, mapped back to
    the original positions; rejections are adjusted <= q.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("need a non-empty 1-D list of p-values")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted_sorted = np.minimum(adjusted_sorted, 1.0)
    adjusted = np.empty(m)
    adjusted[order] = adjusted_sorted
    return adjusted, adjusted <= q


def significance_marker(p: float) -> str:
    for threshold, marker in SIGNIFICANCE_LEVELS:
        if p < threshold:
            return marker
    return ""


def samples_seen(batch_size: int, steps_per_epoch: int | None = None,
                 epochs: int | None = None, total_steps: int | None = None) -> int:
    """Training samples processed: batch x steps/epoch x epochs, or batch x steps."""
    if batch_size < 0:
        raise ValueError("batch_size must be nonnegative")
    if total_steps is not None:
        return batch_size * total_steps
    if steps_per_epoch is None or epochs is None:
        raise ValueError("need steps_per_epoch and epochs, or total_steps")
    return batch_size * steps_per_epoch * epochs


# ---- probes ----


def _standardize(train_x, eval_x):
    mu = train_x.mean(axis=0)
    sd = train_x.std(axis=0)
    sd[sd == 0] = 1.0
    return (train_x - mu) / sd, (eval_x - mu) / sd


def _probe_params(cfg: ProbeConfig, width: int, n_out: int) -> dict:
    rng = np.random.default_rng(cfg.seed)
    params = {}

    def lin(name, fi, fo):
        params[f"{name}.w"] = nn.Tensor(rng.standard_normal((fi, fo)) / math.sqrt(fi),
                                        requires_grad=True)
        params[f"{name}.b"] = nn.Tensor(np.zeros(fo), requires_grad=True)

    if cfg.hidden:
        lin("h", width, cfg.hidden)
        lin("out", cfg.hidden, n_out)
    else:
        lin("out", width, n_out)
    return params


def _probe_forward(params, x, cfg: ProbeConfig):
    h = nn.as_tensor(x)
    if cfg.hidden:
        h = nn.gelu(nn.add(nn.matmul(h, params["h.w"]), params["h.b"]))
    return nn.add(nn.matmul(h, params["out.w"]), params["out.b"])


def _probe_loss(params, x, y, cfg: ProbeConfig):
    out = _probe_forward(params, x, cfg)
    if cfg.kind == "classification":
        logp = nn.log_softmax(out)
        picked = nn.gather(logp, y[:, None], axis=1)
        return nn.mul(nn.mean(picked), -1.0)
    # unit-sphere regression with (1 - cosine) loss
    norm = nn.pow_const(nn.sum_(nn.mul(out, out), axis=1, keepdims=True), 0.5)
    unit = nn.mul(out, nn.pow_const(nn.add(norm, 1e-12), -1.0))
    cos = nn.sum_(nn.mul(unit, y), axis=1)
    return nn.mean(nn.add(nn.mul(cos, -1.0), 1.0))


def train_probe(embeddings, labels, cfg: ProbeConfig) -> dict:
    """Train a shallow probe on frozen embeddings.

    Classification labels are integer class ids; unit-sphere labels are
    (n, 3) unit vectors.  Returns params plus train/val metrics; training
    early-stops when validation loss stops improving.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if cfg.kind == "classification":
        y = np.asarray(labels, dtype=np.int64)
        n_out = int(y.max()) + 1
    else:
        y = np.asarray(labels, dtype=np.float64)
        if y.ndim != 2 or y.shape[1] != 3:
            raise ValueError("unit-sphere labels must be (n, 3)")
        n_out = 3
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} embeddings vs {y.shape[0]} labels")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(x.shape[0])
    n_val = max(1, int(round(cfg.val_fraction * x.shape[0])))
    val_idx, train_idx = order[:n_val], order[n_val:]
    train_x, val_x = _standardize(x[train_idx], x[val_idx])
    train_y, val_y = y[train_idx], y[val_idx]

    params = _probe_params(cfg, x.shape[1], n_out)
    opt = nn.OptimizerState(weight_decay=0.0)
    best = (math.inf, None, 0)
    for epoch in range(cfg.epochs):
        loss = _probe_loss(params, train_x, train_y, cfg)
        loss.backward()
        grads = {}
        for k, t in params.items():
            grads[k] = t.grad
            t.grad = None
        nn.adamw_step({k: t.data for k, t in params.items()}, grads, opt, cfg.lr)
        with nn.no_grad():
            val_loss = _probe_loss(params, val_x, val_y, cfg).item()
        if val_loss < best[0] - 1e-6:
            best = (val_loss, {k: t.data.copy() for k, t in params.items()}, epoch)
        elif epoch - best[2] >= cfg.patience:
            break
    if best[1] is not None:
        for k, t in params.items():
            t.data = best[1][k]

    stats = {"params": params, "val_loss": best[0], "epochs_run": epoch + 1,
             "mu_sd": None}

    def predict(raw_embeddings):
        e = np.asarray(raw_embeddings, dtype=np.float64)
        mu = x[train_idx].mean(axis=0)
        sd = x[train_idx].std(axis=0)
        sd[sd == 0] = 1.0
        with nn.no_grad():
            out = _probe_forward(params, (e - mu) / sd, cfg).data
        if cfg.kind == "classification":
            return np.argmax(out, axis=1)
        return out / np.maximum(np.linalg.norm(out, axis=1, keepdims=True), 1e-12)

    stats["predict"] = predict
    if cfg.kind == "classification":
        stats["train_accuracy"] = float(np.mean(predict(x[train_idx]) == train_y))
        stats["val_accuracy"] = float(np.mean(predict(x[val_idx]) == val_y))
    else:
        pred = predict(x[val_idx])
        errs = [doa_error(v, vh) for v, vh in zip(val_y, pred)]
        stats["val_median_doa_deg"] = float(np.median(errs))
    return stats
