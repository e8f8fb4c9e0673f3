"""Central finite-difference oracles for every analytic gradient in the package.

Each ``case_*`` function builds one random instance from ``rng``, compares the
analytic gradient against central differences with step ``H`` and returns the
relative error ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``.
Networks are tiny so the whole catalogue runs in seconds.
"""

from __future__ import annotations

import numpy as np

from ivaegan.fgen import CriticSet, GeneratorModel, loss_gan_s, loss_gan_u1, loss_gan_u2_pfa, loss_vae_s
from ivaegan.numkit import Mlp2Params, critic_input_gradient, gp_value_and_grads, mlp2_forward, mlp2_grads
from ivaegan.regress import SemanticCritic, mse_loss, semantic_critic_losses
from ivaegan.ver import VerModel, kl_std_normal, sum_sq_loss, vae_loss_and_grads
from ivaegan.wgan import critic_objective, generator_side

H = 1e-5


def fd(f, arr: np.ndarray) -> np.ndarray:
    """Central differences of the scalar ``f()`` wrt every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + H
        fp = f()
        arr[i] = old - H
        fm = f()
        arr[i] = old
        g[i] = (fp - fm) / (2 * H)
    return g


def rel_err(analytic, numeric) -> float:
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-10)
    return float(np.max(np.abs(a - n)) / scale)


def check_params(f, params: list[Mlp2Params], grads: list) -> float:
    analytic, numeric = [], []
    for p, g in zip(params, grads):
        for name, arr in p.arrays().items():
            analytic.append(g.arrays()[name])
            numeric.append(fd(f, arr))
    return rel_err(analytic, numeric)


def _net(rng, d_in, h, d_out, slope=0.2):
    return Mlp2Params.init(d_in, h, d_out, rng, slope)


# --------------------------------------------------------------------------- numkit


def case_mlp_params(rng) -> float:
    p = _net(rng, 3, 5, 2, slope=rng.uniform(0.05, 1.0))
    X = rng.standard_normal((4, 3))
    W = rng.standard_normal((4, 2))
    _, cache = mlp2_forward(p, X)
    g, _ = mlp2_grads(p, cache, W)
    return check_params(lambda: float(np.sum(W * mlp2_forward(p, X)[0])), [p], [g])


def case_mlp_inputs(rng) -> float:
    p = _net(rng, 3, 5, 2)
    X = rng.standard_normal((4, 3))
    W = rng.standard_normal((4, 2))
    _, cache = mlp2_forward(p, X)
    _, dX = mlp2_grads(p, cache, W)
    return rel_err([dX], [fd(lambda: float(np.sum(W * mlp2_forward(p, X)[0])), X)])


def case_critic_input_gradient(rng) -> float:
    p = _net(rng, 4, 6, 1)
    X = rng.standard_normal((3, 4))
    G = critic_input_gradient(p, X)
    return rel_err([G], [fd(lambda: float(np.sum(mlp2_forward(p, X)[0])), X)])


def case_gradient_penalty(rng) -> float:
    p = _net(rng, 5, 6, 1)
    X = rng.standard_normal((4, 5))
    cols = slice(0, 3) if rng.random() < 0.5 else None
    lam = rng.uniform(0.5, 10.0)
    _, g = gp_value_and_grads(p, X, lam, cols)
    return check_params(lambda: gp_value_and_grads(p, X, lam, cols)[0], [p], [g])


# --------------------------------------------------------------------------- elementary losses


def case_kl(rng) -> float:
    mu = rng.standard_normal((4, 3))
    lv = rng.uniform(-2, 2, (4, 3))
    _, (dmu, dlv) = kl_std_normal(mu, lv)
    f = lambda: kl_std_normal(mu, lv)[0]  # noqa: E731
    return rel_err([dmu, dlv], [fd(f, mu), fd(f, lv)])


def case_mse(rng) -> float:
    pred = rng.standard_normal((5, 3))
    tgt = rng.standard_normal((5, 3))
    _, d1 = mse_loss(pred, tgt)
    _, d2 = sum_sq_loss(pred, tgt)
    return max(rel_err([d1], [fd(lambda: mse_loss(pred, tgt)[0], pred)]),
               rel_err([d2], [fd(lambda: sum_sq_loss(pred, tgt)[0], pred)]))


def case_ver_vae(rng) -> float:
    m = VerModel.init(4, 2, 5, rng)
    X = rng.standard_normal((3, 4))
    eps = rng.standard_normal((3, 2))
    _, _, gE, gF = vae_loss_and_grads(m, X, eps)
    return check_params(lambda: vae_loss_and_grads(m, X, eps)[0], [m.E_pre, m.F_pre], [gE, gF])


# --------------------------------------------------------------------------- adversarial losses


def case_critic_objective(rng) -> float:
    D = _net(rng, 4, 5, 1)
    real, fake = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    alpha = rng.random(3)
    cols = slice(0, 2) if rng.random() < 0.5 else None
    _, g = critic_objective(D, real, fake, alpha, 10.0, cols)
    return check_params(lambda: critic_objective(D, real, fake, alpha, 10.0, cols)[0], [D], [g])


def case_generator_side(rng) -> float:
    D = _net(rng, 4, 5, 1)
    fake = rng.standard_normal((3, 4))
    _, d = generator_side(D, fake)
    return rel_err([d], [fd(lambda: generator_side(D, fake)[0], fake)])


def _gen_setup(rng, d_x=3, d_a=2, d_z=2, h=4):
    m = GeneratorModel.init(d_x, d_a, d_z, h, rng)
    c = CriticSet.init(d_x, d_a, h, rng)
    return m, c


def case_loss_vae_s(rng) -> float:
    m, _ = _gen_setup(rng)
    xs, as_ = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    eps = rng.standard_normal((3, m.d_z))
    _, g = loss_vae_s(m, xs, as_, eps=eps)
    return check_params(lambda: loss_vae_s(m, xs, as_, eps=eps)[0], [m.E, m.G], [g["E"], g["G"]])


def case_loss_gan_s(rng) -> float:
    m, c = _gen_setup(rng)
    xs, as_ = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    eps, alpha = rng.standard_normal((3, m.d_z)), rng.random(3)
    run = lambda: loss_gan_s(c, m, xs, as_, lambda_gp=10.0, eps=eps, alpha=alpha)  # noqa: E731
    _, _, g = run()
    return max(check_params(lambda: run()[0], [c.D_s], [g["D_s"]]),
               check_params(lambda: run()[1], [m.E, m.G], [g["E"], g["G"]]))


def case_loss_gan_u1(rng) -> float:
    m, c = _gen_setup(rng)
    xu, a = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    z, alpha = rng.standard_normal((3, m.d_z)), rng.random(3)
    run = lambda: loss_gan_u1(c, m, xu, a, lambda_gp=10.0, z=z, alpha=alpha)  # noqa: E731
    _, _, g = run()
    return max(check_params(lambda: run()[0], [c.D_u], [g["D_u"]]),
               check_params(lambda: run()[1], [m.G], [g["G"]]))


def case_loss_gan_u2(rng) -> float:
    m, c = _gen_setup(rng)
    xu, cond = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    z, alpha = rng.standard_normal((3, m.d_z)), rng.random(3)
    run = lambda: loss_gan_u2_pfa(c, m, None, None, xu, lambda_gp=10.0, z=z, alpha=alpha,  # noqa: E731
                                  conditions=cond)
    _, _, g = run()
    return max(check_params(lambda: run()[0], [c.D_u2], [g["D_u2"]]),
               check_params(lambda: run()[1], [m.G], [g["G"]]))


def case_semantic_critic(rng) -> float:
    c = SemanticCritic(_net(rng, 3, 5, 1))
    ars, afs, aru, afu = (rng.standard_normal((4, 3)) for _ in range(4))
    al_s, al_u = rng.random(4), rng.random(4)
    run = lambda: semantic_critic_losses(c, ars, afs, aru, afu, 10.0, alpha_s=al_s, alpha_u=al_u)  # noqa: E731
    _, _, g = run()
    return max(check_params(lambda: run()[0], [c.D_r], [g["D_r"]]),
               rel_err([g["fake_s"], g["fake_u"]], [fd(lambda: run()[1], afs), fd(lambda: run()[1], afu)]))


CASES = {
    "mlp params": case_mlp_params,
    "mlp inputs": case_mlp_inputs,
    "critic input gradient": case_critic_input_gradient,
    "gradient penalty params": case_gradient_penalty,
    "KL": case_kl,
    "MSE": case_mse,
    "VER VAE": case_ver_vae,
    "critic objective": case_critic_objective,
    "generator side": case_generator_side,
    "seen VAE": case_loss_vae_s,
    "seen GAN": case_loss_gan_s,
    "unseen unconditional GAN": case_loss_gan_u1,
    "unseen PFA GAN": case_loss_gan_u2,
    "semantic critic": case_semantic_critic,
}


def worst_errors(n_cases: int = 100, seed: int = 0) -> dict[str, float]:
    """Largest relative error of each case family over ``n_cases`` random instances."""
    out = {}
    for k, (name, fn) in enumerate(CASES.items()):
        rng = np.random.default_rng([seed, k])
        out[name] = max(fn(rng) for _ in range(n_cases))
    return out
