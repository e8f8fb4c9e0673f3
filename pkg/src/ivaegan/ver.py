"""Stage 1: label-free variational pre-training and the frozen embedding it provides."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .numkit import (AdamWState, Mlp2Params, UsageError, adamw_step, as_matrix, iter_minibatches,
                     mlp2_forward, mlp2_grads, spawn_rngs)

log = logging.getLogger(__name__)

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0


class TrainingDiverged(RuntimeError):
    """A loss became non-finite; the message carries epoch/batch diagnostics."""


def check_finite(value: float, stage: str, epoch: int, batch: int) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"{stage}: non-finite loss {value!r} at epoch {epoch}, batch {batch}")


def clamp_logvar(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamped log-variance and the 0/1 mask of entries that pass gradient."""
    lv = np.clip(raw, LOGVAR_MIN, LOGVAR_MAX)
    return lv, ((raw > LOGVAR_MIN) & (raw < LOGVAR_MAX)).astype(np.float64)


def kl_std_normal(mu, logvar) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """``KL(N(mu, exp(logvar)) || N(0, I))`` averaged over rows, with gradients."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ValueError(f"mu {mu.shape} and logvar {logvar.shape} differ")
    n = mu.shape[0]
    ev = np.exp(logvar)
    value = 0.5 * float(np.sum(ev + mu * mu - 1.0 - logvar)) / n
    return value, (mu / n, 0.5 * (ev - 1.0) / n)


def reparameterize(mu, logvar, rng: np.random.Generator, eps: np.ndarray | None = None) -> np.ndarray:
    """``mu + exp(logvar / 2) * eps`` with ``eps ~ N(0, I)`` unless pinned."""
    mu = np.asarray(mu, dtype=np.float64)
    lv = np.clip(np.asarray(logvar, dtype=np.float64), LOGVAR_MIN, LOGVAR_MAX)
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * lv) * eps


def sum_sq_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Per-row squared L2 error averaged over rows, with gradient wrt ``pred``."""
    diff = pred - target
    n = pred.shape[0]
    return float(np.sum(diff * diff)) / n, 2.0 * diff / n


@dataclass
class VerConfig:
    epochs: int = 100
    batch_size: int = 64
    hidden: int = 64
    d_z: int | None = None
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.0
    seed: int = 0


@dataclass(eq=False)
class VerModel:
    E_pre: Mlp2Params
    F_pre: Mlp2Params
    frozen: bool = False
    loss_trace: list[float] = field(default_factory=list)

    @property
    def d_z(self) -> int:
        return self.F_pre.d_in

    @property
    def d_x(self) -> int:
        return self.E_pre.d_in

    @property
    def embed_width(self) -> int:
        return self.d_x + 2 * self.d_z

    @classmethod
    def init(cls, d_x: int, d_z: int, hidden: int, rng: np.random.Generator) -> "VerModel":
        return cls(Mlp2Params.init(d_x, hidden, 2 * d_z, rng), Mlp2Params.init(d_z, hidden, d_x, rng))

    def freeze(self) -> "VerModel":
        for p in (self.E_pre, self.F_pre):
            for a in p.arrays().values():
                a.flags.writeable = False
        self.frozen = True
        return self

    def encode(self, X) -> tuple[np.ndarray, np.ndarray]:
        out, _ = mlp2_forward(self.E_pre, X)
        lv, _ = clamp_logvar(out[:, self.d_z:])
        return out[:, :self.d_z], lv

    def checksum(self) -> str:
        return self.E_pre.checksum() + self.F_pre.checksum()


def vae_loss_and_grads(m: VerModel, X: np.ndarray, eps: np.ndarray):
    """Stage-1 objective (KL + reconstruction) on one batch with pinned noise."""
    d_z = m.d_z
    enc, enc_cache = mlp2_forward(m.E_pre, X)
    mu, raw_lv = enc[:, :d_z], enc[:, d_z:]
    lv, mask = clamp_logvar(raw_lv)
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    xr, dec_cache = mlp2_forward(m.F_pre, z)
    rec, d_xr = sum_sq_loss(xr, X)
    kl, (dmu_kl, dlv_kl) = kl_std_normal(mu, lv)
    gF, dz = mlp2_grads(m.F_pre, dec_cache, d_xr)
    dmu = dz + dmu_kl
    dlv = (dz * 0.5 * std * eps + dlv_kl) * mask
    gE, _ = mlp2_grads(m.E_pre, enc_cache, np.hstack([dmu, dlv]))
    return kl + rec, rec, gE, gF


def pooled_features(data) -> tuple[np.ndarray, int | None]:
    """Stack seen and unseen features of a dataset (labels are never touched)."""
    if hasattr(data, "Xs") and hasattr(data, "Xu"):
        return np.vstack([data.Xs, data.Xu]), data.As.shape[1]
    return as_matrix(data, name="X_all"), None


def pretrain_ver(data, cfg: VerConfig | None = None) -> VerModel:
    """Unsupervised VAE training over all visual features; returns a frozen model.

    ``data`` is a dataset (only its feature matrices are read) or a pooled
    feature matrix. ``d_z`` defaults to half the semantic width, rounded up.
    """
    cfg = cfg or VerConfig()
    X_all, d_a = pooled_features(data)
    if cfg.epochs < 1:
        raise ValueError("n_pre must be >= 1")
    d_z = cfg.d_z or (math.ceil(d_a / 2) if d_a else 4)
    rng_init, rng_batch, rng_eps = spawn_rngs(cfg.seed, 3)
    m = VerModel.init(X_all.shape[1], d_z, cfg.hidden, rng_init)
    opt = {name: AdamWState.for_params(getattr(m, name), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                                       weight_decay=cfg.weight_decay)
           for name in ("E_pre", "F_pre")}
    for epoch in range(cfg.epochs):
        total, count = 0.0, 0
        for b, idx in enumerate(iter_minibatches(len(X_all), cfg.batch_size, rng_batch)):
            xb = X_all[idx]
            eps = rng_eps.standard_normal((len(idx), d_z))
            loss, _, gE, gF = vae_loss_and_grads(m, xb, eps)
            check_finite(loss, "pretrain_ver", epoch, b)
            adamw_step(opt["E_pre"], m.E_pre, gE)
            adamw_step(opt["F_pre"], m.F_pre, gF)
            total += loss * len(idx)
            count += len(idx)
        m.loss_trace.append(total / count)
        log.debug("ver epoch %d loss %.5f", epoch, m.loss_trace[-1])
    return m.freeze()


def reconstruction_mse(m: VerModel, X) -> float:
    """Mean per-row squared error of the deterministic (mean) reconstruction."""
    mu, _ = m.encode(X)
    xr, _ = mlp2_forward(m.F_pre, mu)
    return float(np.mean(np.sum((xr - X) ** 2, axis=1)))


def ver_embed(m: VerModel, X) -> np.ndarray:
    """``[X | mu_pre(X) | logvar_pre(X)]``; deterministic."""
    if not m.frozen:
        raise UsageError("ver_embed requires a frozen VerModel (run pretrain_ver or freeze())")
    X = as_matrix(X, m.d_x)
    mu, lv = m.encode(X)
    return np.hstack([X, mu, lv])
