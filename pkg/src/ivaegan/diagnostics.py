"""Accumulated prior error (APE) checks and the prior experiment harnesses.

The discrete part evaluates e(x, y) exactly on small enumerable toys by two
routes: directly from the class conditionals, and from posteriors and priors
via Bayes' rule. The two agree whenever the real and generated marginals
match. The Gaussian part estimates per-class APE for a trained generator on a
synthetic benchmark, where the real densities are known exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .data import DensityOracle, SplitDataset
from .fgen import GeneratorModel, StagePriors, synthesize
from .numkit import make_rng
from .priors import ClassPrior, prior_bias

log = logging.getLogger(__name__)

SIMPLEX_ATOL = 1e-12
VAR_FLOOR = 1e-6


class ApeContractError(ValueError):
    """The marginal-match premise of the APE identity does not hold."""


# --------------------------------------------------------------------------- discrete toys


@dataclass(eq=False)
class DiscreteToy:
    """Real and generated joint distributions over ``k`` classes and ``m`` outcomes.

    Attributes:
        pr_y: Real class prior, shape (k,).
        pg_y: Generator class prior, shape (k,).
        pr_x_y: Real conditionals, row ``y`` is p_r(x | y), shape (k, m).
        pg_x_y: Generated conditionals, shape (k, m).
    """

    pr_y: np.ndarray
    pg_y: np.ndarray
    pr_x_y: np.ndarray
    pg_x_y: np.ndarray

    def __post_init__(self):
        self.pr_y = np.asarray(self.pr_y, dtype=np.float64)
        self.pg_y = np.asarray(self.pg_y, dtype=np.float64)
        self.pr_x_y = np.atleast_2d(np.asarray(self.pr_x_y, dtype=np.float64))
        self.pg_x_y = np.atleast_2d(np.asarray(self.pg_x_y, dtype=np.float64))
        k, m = self.pr_x_y.shape
        if self.pg_x_y.shape != (k, m) or self.pr_y.shape != (k,) or self.pg_y.shape != (k,):
            raise ValueError("toy shapes disagree")
        for name in ("pr_y", "pg_y", "pr_x_y", "pg_x_y"):
            arr = np.atleast_2d(getattr(self, name))
            if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=1) - 1.0) > SIMPLEX_ATOL):
                raise ValueError(f"{name} rows must lie on the simplex")

    @property
    def k(self) -> int:
        return self.pr_x_y.shape[0]

    @property
    def m(self) -> int:
        return self.pr_x_y.shape[1]

    def marginal_r(self) -> np.ndarray:
        return self.pr_y @ self.pr_x_y

    def marginal_g(self) -> np.ndarray:
        return self.pg_y @ self.pg_x_y

    @property
    def marginals_match(self) -> bool:
        return bool(np.all(np.abs(self.marginal_r() - self.marginal_g()) <= SIMPLEX_ATOL))


@dataclass
class ApeReport:
    """Per-class APE aggregated over the outcome space, by both routes.

    For discrete toys the aggregate is a sum over outcomes. For the Gaussian
    estimator it is a Monte-Carlo mean over x drawn from p_r(x), and
    ``stderr_*`` hold the matching standard errors.
    """

    e_conditional: np.ndarray
    e_posterior: np.ndarray
    discrepancy: float
    stderr_conditional: np.ndarray | None = None
    stderr_posterior: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def class_mean(self) -> float:
        return float(np.mean(self.e_conditional))

    def to_dict(self) -> dict:
        out = {"e_conditional": self.e_conditional.tolist(), "e_posterior": self.e_posterior.tolist(),
               "discrepancy": self.discrepancy, "class_mean": self.class_mean}
        if self.stderr_conditional is not None:
            out["stderr_conditional"] = self.stderr_conditional.tolist()
            out["stderr_posterior"] = self.stderr_posterior.tolist()
        out.update(self.extra)
        return out


def _posterior(prior: np.ndarray, cond: np.ndarray, px: np.ndarray) -> np.ndarray:
    """p(y | x) with shape (k, m); zero where p(x) vanishes."""
    joint = prior[:, None] * cond
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(px > 0, joint / np.where(px > 0, px, 1.0), 0.0)


def ape_tables(toy: DiscreteToy) -> tuple[np.ndarray, np.ndarray]:
    """e(x, y) for every class and outcome by the conditional and posterior routes."""
    px_r, px_g = toy.marginal_r(), toy.marginal_g()
    cond = np.abs(toy.pr_x_y - toy.pg_x_y)
    post_r = _posterior(toy.pr_y, toy.pr_x_y, px_r)
    post_g = _posterior(toy.pg_y, toy.pg_x_y, px_g)
    num = np.abs(post_r * toy.pg_y[:, None] - post_g * toy.pr_y[:, None])
    post = num / (toy.pr_y * toy.pg_y)[:, None] * px_r
    return cond, post


def ape_identity_check(toy: DiscreteToy) -> float:
    """Largest gap between the two APE routes over all outcomes and classes.

    Raises:
        ApeContractError: if the real and generated marginals differ at some
            outcome by more than 1e-12.
    """
    gap = np.abs(toy.marginal_r() - toy.marginal_g())
    bad = np.flatnonzero(gap > SIMPLEX_ATOL)
    if bad.size:
        i = int(bad[0])
        raise ApeContractError(f"marginals differ at outcome x{i}: p_r={toy.marginal_r()[i]!r}, "
                               f"p_g={toy.marginal_g()[i]!r}")
    if np.any(toy.pr_y <= 0) or np.any(toy.pg_y <= 0):
        raise ApeContractError("posterior route needs strictly positive class priors")
    cond, post = ape_tables(toy)
    return float(np.max(np.abs(cond - post)))


def ape_discrete(toy: DiscreteToy) -> ApeReport:
    cond, post = ape_tables(toy)
    return ApeReport(cond.sum(axis=1), post.sum(axis=1), float(np.max(np.abs(cond - post))))


def worked_toy() -> DiscreteToy:
    """Three outcomes, two classes, both marginals equal to [0.5, 0.3, 0.2]."""
    return DiscreteToy(pr_y=[0.5, 0.5], pg_y=[0.6, 0.4],
                       pr_x_y=[[0.8, 0.2, 0.0], [0.2, 0.4, 0.4]],
                       pg_x_y=[[0.7, 0.2, 0.1], [0.2, 0.45, 0.35]])


def random_matched_toy(rng: np.random.Generator, m: int = 5, k: int = 3, spread: float = 0.3,
                       max_tries: int = 1000) -> DiscreteToy:
    """Random toy whose generated marginal equals the real one.

    The real side and the generated prior are Dirichlet draws. All but the last
    generated conditional are perturbations of the real marginal; the last row
    is solved so the marginals match, and the draw is rejected if that row
    leaves the simplex.
    """
    for _ in range(max_tries):
        pr_y = rng.dirichlet(np.ones(k))
        pr_x_y = rng.dirichlet(np.ones(m), size=k)
        q = pr_y @ pr_x_y
        pg_y = rng.dirichlet(np.ones(k))
        t = rng.uniform(0.0, spread)
        free = (1.0 - t) * q + t * rng.dirichlet(np.ones(m), size=k - 1)
        last = (q - pg_y[:-1] @ free) / pg_y[-1]
        if np.all(last >= 0):
            last = last / last.sum()
            pg_x_y = np.vstack([free, last])
            toy = DiscreteToy(pr_y, pg_y, pr_x_y, pg_x_y)
            if toy.marginals_match and np.all(pr_y > 0) and np.all(pg_y > 0):
                return toy
    raise RuntimeError("could not build a marginal-matched toy; lower spread")


def ratio_toy() -> DiscreteToy:
    """Toy meeting the posterior-ratio condition, so e vanishes everywhere.

    The first two classes share one conditional, which lets the generator move
    prior mass between them without changing the marginal.
    """
    row = [0.5, 0.3, 0.2]
    cond = [row, row, [0.1, 0.2, 0.7]]
    return DiscreteToy(pr_y=[0.3, 0.3, 0.4], pg_y=[0.5, 0.1, 0.4], pr_x_y=cond, pg_x_y=cond)


# --------------------------------------------------------------------------- Gaussian estimator


@dataclass
class DiagGaussian:
    mean: np.ndarray
    var: np.ndarray

    def log_pdf(self, X: np.ndarray) -> np.ndarray:
        return -0.5 * np.sum((X - self.mean) ** 2 / self.var + np.log(2 * np.pi * self.var), axis=1)


def fit_diag_gaussian(S: np.ndarray) -> DiagGaussian:
    """Maximum-likelihood diagonal Gaussian; variances are floored at 1e-6."""
    mean = S.mean(axis=0)
    var = S.var(axis=0)
    if np.any(var < VAR_FLOOR):
        log.warning("fitted variance below %g in %d dimensions; floored", VAR_FLOOR, int(np.sum(var < VAR_FLOOR)))
        var = np.maximum(var, VAR_FLOOR)
    return DiagGaussian(mean, var)


def generator_sampler(gen: GeneratorModel, Au: np.ndarray):
    """``sampler(c, n, rng)`` drawing generated features for unseen class ``c``."""
    return lambda c, n, rng: synthesize(gen, Au[c:c + 1], n, rng)


def oracle_sampler(oracle: DensityOracle):
    """Sampler that draws from the real class conditionals."""
    def draw(c, n, rng):
        return oracle.unseen_means[c] + oracle.noise_std * rng.standard_normal((n, oracle.d_x))
    return draw


def ape_gaussian(oracle: DensityOracle, sampler, n_fit: int = 2000, mc: int = 4000,
                 g_prior=None, seed: int = 0) -> ApeReport:
    """Monte-Carlo APE of a generator against the exact real densities.

    Each unseen class gets a diagonal Gaussian fitted to ``n_fit`` generated
    samples. The conditional-route error |p_r(x|y) - p_g(x|y)| is averaged over
    ``mc`` draws of x from p_r(x). The posterior route uses ``g_prior`` as the
    generator's class prior (the real prior when omitted); its gap to the
    conditional route measures how far the fitted marginal is from the real one.

    Args:
        oracle: Exact densities of a synthetic benchmark.
        sampler: ``sampler(c, n, rng) -> (n, d_x)``, e.g. from ``generator_sampler``.
        n_fit: Generated samples per class for the Gaussian fit.
        mc: Monte-Carlo sample size.
        g_prior: Class prior assumed by the generator.
        seed: Seeds both the generated samples and the Monte-Carlo draws.
    """
    k = len(oracle.unseen_prior)
    rng_fit, rng_mc = make_rng(seed), make_rng(seed + 1)
    fits = [fit_diag_gaussian(sampler(c, n_fit, rng_fit)) for c in range(k)]
    X, _ = oracle.sample_unseen(mc, rng_mc)
    pr_y = np.asarray(oracle.unseen_prior, dtype=np.float64)
    pg_y = pr_y if g_prior is None else np.asarray(g_prior, dtype=np.float64)

    log_r = np.stack([oracle.class_log_pdf(X, c) for c in range(k)])
    log_g = np.stack([f.log_pdf(X) for f in fits])
    # a common scale keeps the tiny high-dimensional densities representable
    shift = log_r.max()
    pr = np.exp(log_r - shift)
    pg = np.exp(log_g - shift)
    px_r = pr_y @ pr
    px_g = pg_y @ pg
    cond = np.abs(pr - pg)
    post_r = _posterior(pr_y, pr, px_r)
    post_g = _posterior(pg_y, pg, px_g)
    post = np.abs(post_r * pg_y[:, None] - post_g * pr_y[:, None]) / (pr_y * pg_y)[:, None] * px_r
    scale = np.exp(shift)
    e_c, e_p = cond.mean(axis=1) * scale, post.mean(axis=1) * scale
    se_c = cond.std(axis=1, ddof=1) / np.sqrt(mc) * scale
    se_p = post.std(axis=1, ddof=1) / np.sqrt(mc) * scale
    return ApeReport(e_c, e_p, float(np.max(np.abs(e_c - e_p))), se_c, se_p,
                     extra={"fit_means": [f.mean.tolist() for f in fits]})


# --------------------------------------------------------------------------- experiment harnesses

CHAIN_COLUMNS = ("g_prior", "d_prior", "T1", "PB_g", "PB_d")
SWEEP_COLUMNS = ("prior", "PB", "T1")
LAMBDA_COLUMNS = ("lambda_u2", "T1", "ape_class_mean")


def chain_experiment(ds: SplitDataset, oracle: DensityOracle | None, ver, reg, cfg: ExperimentConfig,
                     grid=("uniform", "cpe", "gt"), prior_ctx=None) -> list[dict]:
    """Stage-3 runs over every (g_prior, d_prior) pair sharing stages 1-2 and seeds.

    Returns one row per cell, ``CHAIN_COLUMNS`` as keys, accuracies as fractions.
    """
    from .pipeline import PriorContext, run_classifier, run_stage3

    ctx = prior_ctx or PriorContext(ds, oracle, cfg, ver)
    gt = ctx.resolve("gt") if ds.Yu_hidden is not None else None
    rows = []
    for g in grid:
        for d in grid:
            priors = StagePriors(ctx.resolve(g), ctx.resolve(d))
            gen, _ = run_stage3(ds, ver, reg, priors, cfg)
            rep = run_classifier(gen, reg, ver, ds, cfg)
            rows.append({"g_prior": g, "d_prior": d, "T1": rep.T1,
                         "PB_g": prior_bias(priors.g_prior, gt) if gt is not None else float("nan"),
                         "PB_d": prior_bias(priors.d_prior, gt) if gt is not None else float("nan")})
            log.info("chain cell g=%s d=%s T1=%.4f", g, d, rep.T1)
    return rows


def prior_sweep(ds: SplitDataset, oracle: DensityOracle | None, cfg: ExperimentConfig,
                priors=("gt", "cpe", "uniform"), ver=None, prior_ctx=None) -> list[dict]:
    """Full pipeline with one prior used by the regressor critic and both generator sides."""
    from .pipeline import PriorContext, run_all, run_stage1

    if ver is None and cfg.use_ver:
        ver = run_stage1(ds, cfg)
    ctx = prior_ctx or PriorContext(ds, oracle, cfg, ver)
    gt = ctx.resolve("gt")
    rows = []
    for name in priors:
        res = run_all(cfg.replace(g_prior=name, d_prior=name, r_prior=name), ds, oracle, ver=ver, prior_ctx=ctx)
        rows.append({"prior": name, "PB": prior_bias(ctx.resolve(name), gt), "T1": res.report.T1})
        log.info("prior sweep %s PB=%.2f T1=%.4f", name, rows[-1]["PB"], res.report.T1)
    return rows


def lambda_u2_sweep(ds: SplitDataset, oracle: DensityOracle | None, ver, reg, cfg: ExperimentConfig,
                    values=None, prior_ctx=None) -> list[dict]:
    """Stage-3 and classifier runs over a grid of PFA weights; APE is added when densities are known."""
    from .pipeline import PriorContext, run_classifier, run_stage3

    if values is None:
        values = [float(v) for v in cfg.sweep_lambda_u2.split(",")]
    ctx = prior_ctx or PriorContext(ds, oracle, cfg, ver)
    priors = StagePriors(ctx.resolve(cfg.g_prior), ctx.resolve(cfg.d_prior))
    rows = []
    for lam in values:
        c = cfg.replace(lambda_u2=float(lam))
        gen, _ = run_stage3(ds, ver, reg, priors, c)
        rep = run_classifier(gen, reg, ver, ds, c)
        ape = float("nan")
        if oracle is not None:
            ape = ape_gaussian(oracle, generator_sampler(gen, ds.Au), cfg.ape_n_fit, cfg.ape_mc,
                               g_prior=priors.g_prior, seed=cfg.seed).class_mean
        rows.append({"lambda_u2": float(lam), "T1": rep.T1, "ape_class_mean": ape})
        log.info("lambda_u2=%g T1=%.4f APE=%.3g", lam, rep.T1, ape)
    return rows


def pfa_ape_comparison(ds: SplitDataset, oracle: DensityOracle, ver, reg, cfg: ExperimentConfig,
                       prior: ClassPrior, lambda_u2: float = 0.09) -> dict:
    """Class-mean APE with and without the PFA critic under one prior and one seed."""
    from .pipeline import run_stage3

    out = {}
    for key, lam in (("pfa", lambda_u2), ("baseline", 0.0)):
        gen, _ = run_stage3(ds, ver, reg, StagePriors.same(prior), cfg.replace(lambda_u2=lam))
        out[key] = ape_gaussian(oracle, generator_sampler(gen, ds.Au), cfg.ape_n_fit, cfg.ape_mc,
                                g_prior=prior, seed=cfg.seed)
    return out
