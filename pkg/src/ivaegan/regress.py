"""Stage 2: semantic regressor with MSE supervision and an adversarial semantic critic."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import as_train_view
from .numkit import (AdamWState, DimensionError, Mlp2Params, UsageError, adamw_step, as_matrix,
                     iter_minibatches, mlp2_forward, mlp2_grads, mlp2_hidden, spawn_rngs)
from .priors import sample_classes
from .ver import VerModel, check_finite, ver_embed
from .wgan import critic_objective, generator_side

log = logging.getLogger(__name__)


@dataclass
class RegressorConfig:
    epochs: int = 40
    batch_size: int = 64
    hidden: int = 64
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.0
    lambda_r: float = 0.01
    lambda_gp: float = 10.0
    adversarial: bool = True
    seed: int = 0


@dataclass(eq=False)
class RegressorModel:
    """Semantic regressor ``R``; its input is the VER embedding, or raw features when ``use_ver`` is off."""

    R: Mlp2Params
    use_ver: bool = True
    frozen: bool = False
    traces: dict[str, list[float]] = field(default_factory=dict)
    critic: "SemanticCritic | None" = None

    @property
    def hidden_width(self) -> int:
        return self.R.hidden

    @property
    def d_a(self) -> int:
        return self.R.d_out

    def freeze(self) -> "RegressorModel":
        for a in self.R.arrays().values():
            a.flags.writeable = False
        self.frozen = True
        return self


@dataclass(eq=False)
class SemanticCritic:
    D_r: Mlp2Params


def regressor_input(m: RegressorModel, ver: VerModel | None, X) -> np.ndarray:
    if m.use_ver:
        if ver is None:
            raise UsageError("this regressor was trained on VER embeddings; pass the VerModel")
        emb = ver_embed(ver, X)
    else:
        emb = as_matrix(X)
    if emb.shape[1] != m.R.d_in:
        raise DimensionError(f"regressor expects width {m.R.d_in}, input embedding has {emb.shape[1]}")
    return emb


def regress(m: RegressorModel, ver: VerModel | None, X) -> np.ndarray:
    """Pseudo semantic labels for the rows of ``X``."""
    out, _ = mlp2_forward(m.R, regressor_input(m, ver, X))
    return out


def regressor_hidden(m: RegressorModel, ver: VerModel | None, X) -> np.ndarray:
    """Post-activation output of the regressor's first layer."""
    return mlp2_hidden(m.R, regressor_input(m, ver, X))


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean of squared entries of ``pred - target`` and its gradient wrt ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"pred {pred.shape} and target {target.shape} differ")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def semantic_mae(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean(np.abs(pred - target)))


def semantic_critic_losses(c: SemanticCritic, a_real_s, a_fake_s, a_real_u, a_fake_u,
                           lambda_gp: float, rng: np.random.Generator | None = None,
                           alpha_s=None, alpha_u=None):
    """Seen plus unseen Wasserstein terms of the semantic critic.

    Returns ``(critic_objective, generator_objective, grads)`` where ``grads``
    holds ``D_r`` (gradient of the critic objective) and ``fake_s``/``fake_u``
    (gradients of the generator objective wrt the regressed semantics).
    """
    width = c.D_r.d_in
    for name, arr in (("a_real_s", a_real_s), ("a_fake_s", a_fake_s),
                      ("a_real_u", a_real_u), ("a_fake_u", a_fake_u)):
        if np.shape(arr)[1] != width:
            raise DimensionError(f"{name} has width {np.shape(arr)[1]}, critic expects {width}")
    if alpha_s is None:
        alpha_s = rng.random(len(a_real_s))
    if alpha_u is None:
        alpha_u = rng.random(len(a_real_u))
    obj_s, g_s = critic_objective(c.D_r, a_real_s, a_fake_s, alpha_s, lambda_gp)
    obj_u, g_u = critic_objective(c.D_r, a_real_u, a_fake_u, alpha_u, lambda_gp)
    gen_s, d_fake_s = generator_side(c.D_r, a_fake_s)
    gen_u, d_fake_u = generator_side(c.D_r, a_fake_u)
    return obj_s + obj_u, gen_s + gen_u, {"D_r": g_s + g_u, "fake_s": d_fake_s, "fake_u": d_fake_u}


def train_regressor(ds, ver: VerModel | None, prior, cfg: RegressorConfig | None = None,
                    use_ver: bool = True) -> RegressorModel:
    """Alternate one critic ascent step and one regressor descent step per seen batch.

    Unseen real semantics are drawn from ``Au`` under ``prior``. With
    ``lambda_r == 0`` the regressor update reduces to plain MSE.
    """
    cfg = cfg or RegressorConfig()
    tv = as_train_view(ds)
    if use_ver and (ver is None or not ver.frozen):
        raise UsageError("train_regressor needs a frozen VerModel when use_ver is set")
    rng_r, rng_d, rng_batch, rng_adv = spawn_rngs(cfg.seed, 4)
    d_in = ver.embed_width if use_ver else tv.d_x
    m = RegressorModel(Mlp2Params.init(d_in, cfg.hidden, tv.d_a, rng_r), use_ver=use_ver)
    critic = SemanticCritic(Mlp2Params.init(tv.d_a, cfg.hidden, 1, rng_d))
    hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay)
    opt_r = AdamWState.for_params(m.R, **hyper)
    opt_d = AdamWState.for_params(critic.D_r, **hyper)

    ver_in = ver if use_ver else None
    emb_s = regressor_input(m, ver_in, tv.Xs)
    emb_u = regressor_input(m, ver_in, tv.Xu) if len(tv.Xu) else np.zeros((0, d_in))
    targets_s = tv.As[tv.Ys]
    traces = {"mse": [], "critic": [], "seen_mae": []}

    for epoch in range(cfg.epochs):
        sums = {"mse": 0.0, "critic": 0.0}
        nb = 0
        for b, idx in enumerate(iter_minibatches(len(emb_s), cfg.batch_size, rng_batch)):
            xs, as_ = emb_s[idx], targets_s[idx]
            pred_s, cache_s = mlp2_forward(m.R, xs)
            mse, d_pred = mse_loss(pred_s, as_)
            check_finite(mse, "train_regressor", epoch, b)

            gR, _ = mlp2_grads(m.R, cache_s, d_pred)
            crit = 0.0
            if cfg.adversarial and len(emb_u):
                # adversarial draws come from rng_adv only
                iu = rng_adv.choice(len(emb_u), size=len(idx), replace=len(emb_u) < len(idx))
                au_real = tv.Au[sample_classes(prior, len(idx), rng_adv)]
                alpha_s, alpha_u = rng_adv.random(len(idx)), rng_adv.random(len(idx))
                pred_u, cache_u = mlp2_forward(m.R, emb_u[iu])
                crit, _, g = semantic_critic_losses(critic, as_, pred_s, au_real, pred_u, cfg.lambda_gp,
                                                    alpha_s=alpha_s, alpha_u=alpha_u)
                check_finite(crit, "train_regressor", epoch, b)
                adamw_step(opt_d, critic.D_r, -g["D_r"])
                if cfg.lambda_r:
                    _, d_fs = generator_side(critic.D_r, pred_s)
                    _, d_fu = generator_side(critic.D_r, pred_u)
                    g_s, _ = mlp2_grads(m.R, cache_s, cfg.lambda_r * d_fs)
                    g_u, _ = mlp2_grads(m.R, cache_u, cfg.lambda_r * d_fu)
                    gR = gR + g_s + g_u
            adamw_step(opt_r, m.R, gR)
            sums["mse"] += mse
            sums["critic"] += crit
            nb += 1
        traces["mse"].append(sums["mse"] / nb)
        traces["critic"].append(sums["critic"] / nb)
        full, _ = mlp2_forward(m.R, emb_s)
        traces["seen_mae"].append(semantic_mae(full, targets_s))
    m.traces = traces
    m.critic = critic
    return m.freeze()
