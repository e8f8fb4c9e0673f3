"""Stage orchestration shared by the CLI and the diagnostic harnesses."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from .config import ConfigError, ExperimentConfig, derive_seed
from .data import DensityOracle, SplitDataset
from .fgen import CriticSet, GeneratorConfig, GeneratorModel, StagePriors, train_generator
from .numkit import make_rng
from .priors import (ClassPrior, anchors_from_generator, anchors_from_semantics, estimate_prior_cpe,
                     uniform_prior)
from .regress import RegressorConfig, RegressorModel, regress, train_regressor
from .ver import VerConfig, VerModel, pretrain_ver
from .zsl_eval import ClassifierConfig, EvalReport, evaluate, train_fzsl

log = logging.getLogger(__name__)


def load_data(cfg: ExperimentConfig) -> tuple[SplitDataset, DensityOracle | None]:
    """Build or read the dataset; a seen holdout is attached in TGZSL mode."""
    if cfg.dataset == "synthetic":
        overrides = {"seed": cfg.syn_seed}
        if cfg.syn_noise_std >= 0:
            overrides["noise_std"] = cfg.syn_noise_std
        if cfg.syn_samples_per_class > 0:
            overrides["samples_per_class"] = cfg.syn_samples_per_class
        ds, oracle = data_mod.make_synthetic(data_mod.preset(cfg.syn_preset, **overrides))
    else:
        ds, oracle = data_mod.load_dataset(cfg.dataset), None
    if cfg.mode == "TGZSL" and ds.Xs_test is None:
        ds = data_mod.holdout_seen(ds, cfg.holdout_fraction, derive_seed(cfg.seed, "holdout"))
    return ds, oracle


def ground_truth_prior(ds: SplitDataset) -> ClassPrior:
    """Actual class proportions of the unlabeled pool.

    Only the controlled prior experiments call this; it reads evaluation labels.
    """
    if ds.Yu_hidden is None:
        raise ConfigError("a 'gt' prior needs hidden unseen labels")
    counts = np.bincount(ds.Yu_hidden, minlength=ds.Au.shape[0]).astype(float)
    return ClassPrior(counts / counts.sum())


def ver_config(cfg: ExperimentConfig) -> VerConfig:
    return VerConfig(epochs=cfg.n_pre, batch_size=cfg.batch_size, hidden=cfg.hidden, d_z=cfg.d_z or None,
                     lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay,
                     seed=derive_seed(cfg.seed, "ver"))


def regressor_config(cfg: ExperimentConfig) -> RegressorConfig:
    return RegressorConfig(epochs=cfg.n_r, batch_size=cfg.batch_size, hidden=cfg.hidden, lr=cfg.lr,
                           beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay,
                           lambda_r=cfg.lambda_r, lambda_gp=cfg.lambda_gp, seed=derive_seed(cfg.seed, "reg"))


def generator_config(cfg: ExperimentConfig) -> GeneratorConfig:
    return GeneratorConfig(epochs=cfg.n_g, batch_size=cfg.batch_size, hidden=cfg.hidden, d_z=cfg.d_z or None,
                           lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, weight_decay=cfg.weight_decay,
                           lambda_gp=cfg.lambda_gp, lambda_u1=cfg.lambda_u1, lambda_u2=cfg.lambda_u2,
                           seed=derive_seed(cfg.seed, "gen"))


def classifier_config(cfg: ExperimentConfig) -> ClassifierConfig:
    return ClassifierConfig(epochs=cfg.n_clf, batch_size=cfg.batch_size, lr=cfg.lr, beta1=cfg.beta1,
                            beta2=cfg.beta2, seed=derive_seed(cfg.seed, "clf"))


@dataclass
class PriorContext:
    """What is needed to turn a prior name into a vector."""

    ds: SplitDataset
    oracle: DensityOracle | None
    cfg: ExperimentConfig
    ver: VerModel | None = None
    _cpe: ClassPrior | None = None

    def resolve(self, spec: str) -> ClassPrior:
        s = spec.strip().lower()
        if s == "uniform":
            return uniform_prior(self.ds.Au.shape[0])
        if s == "gt":
            return ground_truth_prior(self.ds)
        if s == "cpe":
            if self._cpe is None:
                self._cpe = cpe_prior(self.ds, self.ver, self.cfg)
            return self._cpe
        try:
            vals = [float(v) for v in spec.split(",")]
        except ValueError:
            raise ConfigError(f"unrecognised prior {spec!r}") from None
        if len(vals) != self.ds.Au.shape[0]:
            raise ConfigError(f"prior {spec!r} has {len(vals)} entries, expected {self.ds.Au.shape[0]}")
        return ClassPrior(vals)


def cpe_prior(ds: SplitDataset, ver: VerModel | None, cfg: ExperimentConfig) -> ClassPrior:
    """Clustering prior estimate from a bootstrap model that samples no unseen prior.

    The bootstrap regressor uses a uniform prior for its semantic critic; the
    bootstrap generator drops the unconditional unseen critic (lambda_u1 = 0)
    so its class anchors are not dragged by a wrong prior. Anchors are
    per-class centroids of generated features, or of the pool rows whose
    regressed semantics are nearest to each class semantic.
    """
    uni = uniform_prior(ds.Au.shape[0])
    if ver is None and cfg.use_ver:
        ver = pretrain_ver(ds.train_view(), ver_config(cfg))
    reg = train_regressor(ds.train_view(), ver, uni, regressor_config(cfg), use_ver=cfg.use_ver)
    if cfg.cpe_anchor == "semantic":
        anchors = anchors_from_semantics(ds.Xu, regress(reg, ver, ds.Xu), ds.Au)
    else:
        boot = dataclasses.replace(generator_config(cfg), lambda_u1=0.0)
        gen, _ = train_generator(ds.train_view(), ver, reg, StagePriors.same(uni), boot)
        anchors = anchors_from_generator(gen, ds.Au, cfg.cpe_n_anchor, make_rng(derive_seed(cfg.seed, "cpe")))
    return estimate_prior_cpe(ds.Xu, anchors, cfg.cpe_iters)


@dataclass
class RunResult:
    ver: VerModel | None
    reg: RegressorModel
    gen: GeneratorModel
    critics: CriticSet
    priors: StagePriors
    r_prior: ClassPrior
    report: EvalReport


def run_stage1(ds: SplitDataset, cfg: ExperimentConfig) -> VerModel | None:
    return pretrain_ver(ds.train_view(), ver_config(cfg)) if cfg.use_ver else None


def run_stage2(ds, ver, prior, cfg: ExperimentConfig) -> RegressorModel:
    return train_regressor(ds.train_view(), ver, prior, regressor_config(cfg), use_ver=cfg.use_ver)


def run_stage3(ds, ver, reg, priors: StagePriors, cfg: ExperimentConfig):
    return train_generator(ds.train_view(), ver, reg, priors, generator_config(cfg))


def run_classifier(gen, reg, ver, ds, cfg: ExperimentConfig) -> EvalReport:
    clf = train_fzsl(gen, reg, ver, ds, cfg.n_syn, cfg.mode, classifier_config(cfg))
    return evaluate(clf, reg, ver, ds, cfg.mode)


def run_all(cfg: ExperimentConfig, ds: SplitDataset | None = None, oracle: DensityOracle | None = None,
            ver: VerModel | None = None, reg: RegressorModel | None = None,
            prior_ctx: PriorContext | None = None) -> RunResult:
    """Three training stages then evaluation; pre-trained stages may be passed in."""
    if ds is None:
        ds, oracle = load_data(cfg)
    if ver is None and cfg.use_ver:
        ver = run_stage1(ds, cfg)
    ctx = prior_ctx or PriorContext(ds, oracle, cfg, ver)
    r_prior = ctx.resolve(cfg.r_prior)
    if reg is None:
        reg = run_stage2(ds, ver, r_prior, cfg)
    priors = StagePriors(ctx.resolve(cfg.g_prior), ctx.resolve(cfg.d_prior))
    gen, critics = run_stage3(ds, ver, reg, priors, cfg)
    report = run_classifier(gen, reg, ver, ds, cfg)
    return RunResult(ver, reg, gen, critics, priors, r_prior, report)
