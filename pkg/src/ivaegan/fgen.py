"""Stage 3: conditional feature generation.

The generator ``G(z, a)`` is trained as the decoder of a conditional VAE on
seen classes and adversarially against three Wasserstein critics:

* ``D_s(x, a)``  - conditional seen critic,
* ``D_u(x)``     - unconditional unseen critic; its fake batch needs semantics
  sampled from an assumed unseen prior,
* ``D_u2(x, a~)`` - pseudo-conditional unseen critic; real and fake rows share
  the regressed condition ``a~ = R(x_u)``, so no prior is sampled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import as_train_view
from .numkit import (AdamWState, Mlp2Grads, Mlp2Params, UsageError, adamw_step, iter_minibatches,
                     mlp2_forward, mlp2_grads, spawn_rngs)
from .priors import ClassPrior, sample_classes
from .regress import RegressorModel, regress
from .ver import VerModel, check_finite, clamp_logvar, kl_std_normal, sum_sq_loss
from .wgan import critic_objective, generator_side

log = logging.getLogger(__name__)


@dataclass
class GeneratorConfig:
    epochs: int = 40
    batch_size: int = 64
    hidden: int = 64
    d_z: int | None = None
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.0
    lambda_gp: float = 10.0
    lambda_u1: float = 1.0
    lambda_u2: float = 0.09
    seed: int = 0


@dataclass(eq=False)
class GeneratorModel:
    E: Mlp2Params
    G: Mlp2Params
    traces: dict[str, list[float]] = field(default_factory=dict)

    @property
    def d_z(self) -> int:
        return self.E.d_out // 2

    @property
    def d_a(self) -> int:
        return self.G.d_in - self.d_z

    @property
    def d_x(self) -> int:
        return self.G.d_out

    @classmethod
    def init(cls, d_x: int, d_a: int, d_z: int, hidden: int, rng: np.random.Generator) -> "GeneratorModel":
        return cls(Mlp2Params.init(d_x + d_a, hidden, 2 * d_z, rng),
                   Mlp2Params.init(d_z + d_a, hidden, d_x, rng))


@dataclass(eq=False)
class CriticSet:
    D_s: Mlp2Params
    D_u: Mlp2Params
    D_u2: Mlp2Params

    @classmethod
    def init(cls, d_x: int, d_a: int, hidden: int, rng: np.random.Generator) -> "CriticSet":
        return cls(Mlp2Params.init(d_x + d_a, hidden, 1, rng),
                   Mlp2Params.init(d_x, hidden, 1, rng),
                   Mlp2Params.init(d_x + d_a, hidden, 1, rng))


@dataclass(frozen=True, eq=False)
class StagePriors:
    """``g_prior`` samples semantics for G's unseen fakes; ``d_prior`` for D_u's fakes."""

    g_prior: ClassPrior
    d_prior: ClassPrior

    def __post_init__(self):
        object.__setattr__(self, "g_prior", ClassPrior(np.asarray(self.g_prior)))
        object.__setattr__(self, "d_prior", ClassPrior(np.asarray(self.d_prior)))

    @classmethod
    def same(cls, prior) -> "StagePriors":
        return cls(prior, prior)


# --------------------------------------------------------------------------- building blocks


def generate(m: GeneratorModel, z: np.ndarray, a: np.ndarray):
    out, cache = mlp2_forward(m.G, np.hstack([z, a]))
    return out, cache


def backprop_generator(m: GeneratorModel, cache, d_out: np.ndarray) -> tuple[Mlp2Grads, np.ndarray]:
    """G parameter gradient and the gradient wrt the latent block."""
    g, d_in = mlp2_grads(m.G, cache, d_out)
    return g, d_in[:, :m.d_z]


@dataclass
class _SeenPass:
    mu: np.ndarray
    lv: np.ndarray
    mask: np.ndarray
    std: np.ndarray
    eps: np.ndarray
    fake: np.ndarray
    enc_cache: object
    gen_cache: object


def _seen_forward(m: GeneratorModel, xs, as_, eps) -> _SeenPass:
    enc, enc_cache = mlp2_forward(m.E, np.hstack([xs, as_]))
    mu, raw = enc[:, :m.d_z], enc[:, m.d_z:]
    lv, mask = clamp_logvar(raw)
    std = np.exp(0.5 * lv)
    fake, gen_cache = generate(m, mu + std * eps, as_)
    return _SeenPass(mu, lv, mask, std, eps, fake, enc_cache, gen_cache)


def _seen_backward(m: GeneratorModel, sp: _SeenPass, d_fake: np.ndarray,
                   dmu_extra=0.0, dlv_extra=0.0) -> tuple[Mlp2Grads, Mlp2Grads]:
    gG, dz = backprop_generator(m, sp.gen_cache, d_fake)
    dmu = dz + dmu_extra
    dlv = (dz * 0.5 * sp.std * sp.eps + dlv_extra) * sp.mask
    gE, _ = mlp2_grads(m.E, sp.enc_cache, np.hstack([dmu, dlv]))
    return gE, gG


def _seen_vae_terms(m: GeneratorModel, xs, as_, eps):
    sp = _seen_forward(m, xs, as_, eps)
    rec, d_rec = sum_sq_loss(sp.fake, xs)
    kl, (dmu_kl, dlv_kl) = kl_std_normal(sp.mu, sp.lv)
    return sp, kl + rec, d_rec, dmu_kl, dlv_kl


def pfa_conditions(reg: RegressorModel, ver: VerModel | None, Xu: np.ndarray) -> np.ndarray:
    """Pseudo-conditions ``R(x_u)``: a pure function of the unseen features."""
    if not reg.frozen:
        raise UsageError("PFA needs a frozen regressor")
    return regress(reg, ver, Xu)


# --------------------------------------------------------------------------- losses


def loss_vae_s(m: GeneratorModel, xs, as_, rng=None, eps=None):
    """Seen-class conditional VAE objective; returns ``(value, {"E": .., "G": ..})``."""
    if eps is None:
        eps = rng.standard_normal((len(xs), m.d_z))
    sp, value, d_rec, dmu_kl, dlv_kl = _seen_vae_terms(m, xs, as_, eps)
    gE, gG = _seen_backward(m, sp, d_rec, dmu_kl, dlv_kl)
    return value, {"E": gE, "G": gG}


def loss_gan_s(c: CriticSet, m: GeneratorModel, xs, as_, rng=None, lambda_gp: float = 10.0,
               eps=None, alpha=None):
    """Conditional seen critic; fakes are the VAE reconstructions ``G(z~, a)``.

    Returns ``(critic_objective, generator_objective, grads)`` with ``grads``
    keys ``D_s`` (critic objective) and ``E``/``G`` (generator objective).
    """
    if eps is None:
        eps = rng.standard_normal((len(xs), m.d_z))
    if alpha is None:
        alpha = rng.random(len(xs))
    sp = _seen_forward(m, xs, as_, eps)
    d_x = xs.shape[1]
    crit, gD = critic_objective(c.D_s, np.hstack([xs, as_]), np.hstack([sp.fake, as_]), alpha,
                                lambda_gp, cols=slice(0, d_x))
    gen, d_in = generator_side(c.D_s, np.hstack([sp.fake, as_]))
    gE, gG = _seen_backward(m, sp, d_in[:, :d_x])
    return crit, gen, {"D_s": gD, "E": gE, "G": gG}


def loss_gan_u1(c: CriticSet, m: GeneratorModel, xu, a_sampled, rng=None, lambda_gp: float = 10.0,
                z=None, alpha=None):
    """Unconditional unseen critic on real ``x_u`` versus ``G(z, a)`` with sampled semantics."""
    if z is None:
        z = rng.standard_normal((len(a_sampled), m.d_z))
    if alpha is None:
        alpha = rng.random(len(xu))
    fake, cache = generate(m, z, a_sampled)
    crit, gD = critic_objective(c.D_u, xu, fake, alpha, lambda_gp)
    gen, d_fake = generator_side(c.D_u, fake)
    gG, _ = backprop_generator(m, cache, d_fake)
    return crit, gen, {"D_u": gD, "G": gG}


def loss_gan_u2_pfa(c: CriticSet, m: GeneratorModel, reg: RegressorModel, ver: VerModel | None, xu,
                    rng=None, lambda_gp: float = 10.0, z=None, alpha=None, conditions=None):
    """Pseudo-conditional unseen critic: row i of real and fake share the condition ``R(x_u)[i]``."""
    cond = pfa_conditions(reg, ver, xu) if conditions is None else conditions
    if z is None:
        z = rng.standard_normal((len(xu), m.d_z))
    if alpha is None:
        alpha = rng.random(len(xu))
    fake, cache = generate(m, z, cond)
    d_x = xu.shape[1]
    crit, gD = critic_objective(c.D_u2, np.hstack([xu, cond]), np.hstack([fake, cond]), alpha,
                                lambda_gp, cols=slice(0, d_x))
    gen, d_in = generator_side(c.D_u2, np.hstack([fake, cond]))
    gG, _ = backprop_generator(m, cache, d_in[:, :d_x])
    return crit, gen, {"D_u2": gD, "G": gG}


# --------------------------------------------------------------------------- training


def train_generator(ds, ver: VerModel | None, reg: RegressorModel | None, priors: StagePriors,
                    cfg: GeneratorConfig | None = None) -> tuple[GeneratorModel, CriticSet]:
    """Per seen batch: one ascent step for each active critic, then one E,G descent step.

    Seen-side and unseen-side randomness use separate streams, so with
    ``lambda_u1 == lambda_u2 == 0`` the E,G trajectory does not depend on the
    unseen pool at all.
    """
    cfg = cfg or GeneratorConfig()
    tv = as_train_view(ds)
    use_u1 = cfg.lambda_u1 > 0 and len(tv.Xu) > 0
    use_u2 = cfg.lambda_u2 > 0 and len(tv.Xu) > 0
    if use_u2 and (reg is None or not reg.frozen):
        raise UsageError("train_generator needs a frozen regressor when lambda_u2 > 0")
    d_z = cfg.d_z or -(-tv.d_a // 2)
    rng_gen, rng_crit, rng_seen, rng_unseen = spawn_rngs(cfg.seed, 4)
    m = GeneratorModel.init(tv.d_x, tv.d_a, d_z, cfg.hidden, rng_gen)
    c = CriticSet.init(tv.d_x, tv.d_a, cfg.hidden, rng_crit)
    hyper = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay)
    opt = {name: AdamWState.for_params(p, **hyper)
           for name, p in (("E", m.E), ("G", m.G), ("D_s", c.D_s), ("D_u", c.D_u), ("D_u2", c.D_u2))}
    cond_all = pfa_conditions(reg, ver, tv.Xu) if use_u2 else None
    a_s_all = tv.As[tv.Ys]
    d_x = tv.d_x
    feat = slice(0, d_x)
    traces = {k: [] for k in ("vae", "critic_s", "critic_u1", "critic_u2")}

    for epoch in range(cfg.epochs):
        sums = dict.fromkeys(traces, 0.0)
        nb = 0
        for b, idx in enumerate(iter_minibatches(len(tv.Xs), cfg.batch_size, rng_seen)):
            n = len(idx)
            xs, as_ = tv.Xs[idx], a_s_all[idx]
            eps = rng_seen.standard_normal((n, d_z))
            alpha_s = rng_seen.random(n)

            # critic steps
            sp = _seen_forward(m, xs, as_, eps)
            crit_s, gD = critic_objective(c.D_s, np.hstack([xs, as_]), np.hstack([sp.fake, as_]),
                                          alpha_s, cfg.lambda_gp, cols=feat)
            adamw_step(opt["D_s"], c.D_s, -gD)
            check_finite(crit_s, "train_generator", epoch, b)
            sums["critic_s"] += crit_s

            if use_u1 or use_u2:
                iu = rng_unseen.choice(len(tv.Xu), size=n, replace=len(tv.Xu) < n)
                xu = tv.Xu[iu]
            if use_u1:
                a_d = tv.Au[sample_classes(priors.d_prior, n, rng_unseen)]
                z_d = rng_unseen.standard_normal((n, d_z))
                fake_d, _ = generate(m, z_d, a_d)
                crit_u1, gD = critic_objective(c.D_u, xu, fake_d, rng_unseen.random(n), cfg.lambda_gp)
                adamw_step(opt["D_u"], c.D_u, -gD)
                check_finite(crit_u1, "train_generator", epoch, b)
                sums["critic_u1"] += crit_u1
            if use_u2:
                cond = cond_all[iu]
                z_c = rng_unseen.standard_normal((n, d_z))
                fake_c, _ = generate(m, z_c, cond)
                crit_u2, gD = critic_objective(c.D_u2, np.hstack([xu, cond]), np.hstack([fake_c, cond]),
                                               rng_unseen.random(n), cfg.lambda_gp, cols=feat)
                adamw_step(opt["D_u2"], c.D_u2, -gD)
                check_finite(crit_u2, "train_generator", epoch, b)
                sums["critic_u2"] += crit_u2

            # E, G step on L_vae + L_gan_s + lambda_u1 L_u1 + lambda_u2 L_u2
            sp, vae, d_rec, dmu_kl, dlv_kl = _seen_vae_terms(m, xs, as_, eps)
            check_finite(vae, "train_generator", epoch, b)
            _, d_in = generator_side(c.D_s, np.hstack([sp.fake, as_]))
            gE, gG = _seen_backward(m, sp, d_rec + d_in[:, feat], dmu_kl, dlv_kl)
            if use_u1:
                a_g = tv.Au[sample_classes(priors.g_prior, n, rng_unseen)]
                fake_g, cache = generate(m, rng_unseen.standard_normal((n, d_z)), a_g)
                _, d_fake = generator_side(c.D_u, fake_g)
                g, _ = backprop_generator(m, cache, cfg.lambda_u1 * d_fake)
                gG = gG + g
            if use_u2:
                fake_c, cache = generate(m, rng_unseen.standard_normal((n, d_z)), cond)
                _, d_in = generator_side(c.D_u2, np.hstack([fake_c, cond]))
                g, _ = backprop_generator(m, cache, cfg.lambda_u2 * d_in[:, feat])
                gG = gG + g
            adamw_step(opt["E"], m.E, gE)
            adamw_step(opt["G"], m.G, gG)
            sums["vae"] += vae
            nb += 1
        for k in traces:
            traces[k].append(sums[k] / nb)
        log.debug("generator epoch %d vae %.4f", epoch, traces["vae"][-1])
    m.traces = traces
    return m, c


def synthesize(m: GeneratorModel, a, n_per_row: int, rng: np.random.Generator) -> np.ndarray:
    """``n_per_row`` generated features for each semantic row, grouped by row."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    cond = np.repeat(a, n_per_row, axis=0)
    z = rng.standard_normal((len(cond), m.d_z))
    out, _ = generate(m, z, cond)
    return out
