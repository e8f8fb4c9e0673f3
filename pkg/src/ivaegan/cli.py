"""Command-line experiment runner.

Every subcommand reads a flat config (``--config``, then ``--set key=value``
overrides, then ``--seed`` and ``--out``), works inside the output directory,
and writes checkpoints and reports there. Stage subcommands read their
upstream outputs from the same directory and fail with a dependency error
when one is missing.

Exit status is 0 on success. Failures print one JSON line
``{"status": "error", "kind": ..., "message": ...}`` to stderr and exit with
2 (bad config or arguments), 3 (missing upstream output) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checkpoints as ckpt
from . import report
from .config import ConfigError, ExperimentConfig
from .container import ContainerError
from .data import DatasetError, import_csv, load_dataset, save_dataset
from .diagnostics import (CHAIN_COLUMNS, LAMBDA_COLUMNS, SWEEP_COLUMNS, ApeContractError, ape_gaussian,
                          chain_experiment, generator_sampler, lambda_u2_sweep, oracle_sampler, prior_sweep)
from .fgen import StagePriors
from .numkit import DimensionError, UsageError
from .pipeline import PriorContext, load_data, run_classifier, run_stage1, run_stage2, run_stage3
from .priors import PriorError
from .ver import TrainingDiverged
from .zsl_eval import EvaluationError

log = logging.getLogger("ivaegan")

DATASET, VER, REG, GEN = "dataset.ivgn", "ver.ivgn", "regressor.ivgn", "generator.ivgn"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DEPENDENCY = 0, 1, 2, 3


class Run:
    """Resolved config, output directory and provenance for one invocation."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.prov = {"fingerprint": cfg.fingerprint(), "seed": cfg.seed}
        cfg.save(self.out / "config.txt")
        self._ds = None
        self._oracle = None

    def path(self, name: str) -> Path:
        return self.out / name

    # ---------------------------------------------------------------- upstream loaders

    def dataset(self):
        if self._ds is None:
            p = self.path(DATASET)
            if not p.exists():
                raise ckpt.DependencyError(f"missing upstream dataset {p}; run synth-data or import-csv first")
            self._ds = load_dataset(p)
        return self._ds

    def oracle(self):
        if self.cfg.dataset != "synthetic":
            raise UsageError("APE needs exact densities, available only for dataset = synthetic")
        if self._oracle is None:
            _, self._oracle = load_data(self.cfg)
        return self._oracle

    def ver(self):
        if not self.cfg.use_ver:
            return None
        m, meta = ckpt.load_ver(self.path(VER))
        self._check(meta, VER)
        return m

    def regressor(self):
        m, meta = ckpt.load_regressor(self.path(REG))
        self._check(meta, REG)
        if m.use_ver != self.cfg.use_ver:
            raise UsageError(f"{REG} was trained with use_ver={m.use_ver}, config says {self.cfg.use_ver}")
        return m

    def generator(self):
        m, _, meta = ckpt.load_generator(self.path(GEN))
        self._check(meta, GEN)
        return m

    def _check(self, meta: dict, name: str) -> None:
        if meta.get("fingerprint") != self.prov["fingerprint"]:
            log.warning("%s was written under config %s, current config is %s", name,
                        meta.get("fingerprint"), self.prov["fingerprint"])

    def prior_ctx(self, ver=None) -> PriorContext:
        oracle = self.oracle() if self.cfg.dataset == "synthetic" else None
        return PriorContext(self.dataset(), oracle, self.cfg, ver)


# --------------------------------------------------------------------------- subcommands


def cmd_synth_data(run: Run, args) -> dict:
    ds, _ = load_data(run.cfg)
    save_dataset(ds, run.path(DATASET), run.prov)
    return {"dataset": str(run.path(DATASET)), "n_s": int(ds.Xs.shape[0]), "n_u": int(ds.Xu.shape[0])}


def cmd_import_csv(run: Run, args) -> dict:
    unseen = [int(v) for v in args.unseen.split(",") if v.strip()]
    ds = import_csv(args.samples, args.semantics, unseen)
    if run.cfg.mode == "TGZSL" and ds.Xs_test is None:
        from .config import derive_seed
        from .data import holdout_seen
        ds = holdout_seen(ds, run.cfg.holdout_fraction, derive_seed(run.cfg.seed, "holdout"))
    save_dataset(ds, run.path(DATASET), run.prov)
    return {"dataset": str(run.path(DATASET)), "n_s": int(ds.Xs.shape[0]), "n_u": int(ds.Xu.shape[0])}


def cmd_pretrain(run: Run, args) -> dict:
    ds = run.dataset()
    if not run.cfg.use_ver:
        log.info("use_ver is off; nothing to pre-train")
        return {"ver": None}
    ver = run_stage1(ds, run.cfg)
    ckpt.save_ver(ver, run.path(VER), run.prov)
    report.write_traces_csv(run.path("ver_traces.csv"), {"loss": ver.loss_trace}, run.prov)
    report.plot_traces(run.path("ver_traces.png"), {"loss": ver.loss_trace}, "stage 1: VER", run.prov)
    return {"ver": str(run.path(VER)), "final_loss": ver.loss_trace[-1]}


def cmd_train_regressor(run: Run, args) -> dict:
    ds = run.dataset()
    ver = run.ver()
    prior = run.prior_ctx(ver).resolve(run.cfg.r_prior)
    reg = run_stage2(ds, ver, prior, run.cfg)
    ckpt.save_regressor(reg, run.path(REG), {**run.prov, "r_prior": list(prior.p)})
    report.write_traces_csv(run.path("regressor_traces.csv"), reg.traces, run.prov)
    report.plot_traces(run.path("regressor_traces.png"), reg.traces, "stage 2: regressor", run.prov)
    return {"regressor": str(run.path(REG)), "seen_mae": reg.traces["seen_mae"][-1]}


def cmd_train_generator(run: Run, args) -> dict:
    ds = run.dataset()
    ver = run.ver()
    reg = run.regressor()
    ctx = run.prior_ctx(ver)
    priors = StagePriors(ctx.resolve(run.cfg.g_prior), ctx.resolve(run.cfg.d_prior))
    gen, critics = run_stage3(ds, ver, reg, priors, run.cfg)
    ckpt.save_generator(gen, critics, run.path(GEN),
                        {**run.prov, "g_prior": list(priors.g_prior.p), "d_prior": list(priors.d_prior.p)})
    report.write_traces_csv(run.path("generator_traces.csv"), gen.traces, run.prov)
    report.plot_traces(run.path("generator_traces.png"), gen.traces, "stage 3: generator", run.prov)
    return {"generator": str(run.path(GEN))}


def cmd_evaluate(run: Run, args) -> dict:
    ds = run.dataset()
    ver = run.ver()
    reg = run.regressor()
    gen = run.generator()
    rep = run_classifier(gen, reg, ver, ds, run.cfg)
    report.write_json(run.path("eval.json"), rep.to_dict(), run.prov)
    report.write_confusion_csv(run.path("confusion.csv"), rep.classes, rep.confusion, run.prov)
    report.plot_confusion(run.path("confusion.png"), rep.classes, rep.confusion, run.prov)
    report.plot_per_class(run.path("per_class.png"), rep.classes, rep.per_class_acc, run.prov)
    out = {"T1": rep.T1}
    if rep.H is not None:
        out.update(U=rep.U, S=rep.S, H=rep.H)
    return out


def cmd_all(run: Run, args) -> dict:
    cmd_synth_data(run, args)
    cmd_pretrain(run, args)
    cmd_train_regressor(run, args)
    cmd_train_generator(run, args)
    return cmd_evaluate(run, args)


def cmd_ape(run: Run, args) -> dict:
    oracle = run.oracle()
    ds = run.dataset()
    gen = run.generator()
    ctx = run.prior_ctx()
    g_prior = ctx.resolve(run.cfg.g_prior)
    reps = {"generator": ape_gaussian(oracle, generator_sampler(gen, ds.Au), run.cfg.ape_n_fit,
                                      run.cfg.ape_mc, g_prior=g_prior, seed=run.cfg.seed),
            "oracle": ape_gaussian(oracle, oracle_sampler(oracle), run.cfg.ape_n_fit, run.cfg.ape_mc,
                                   seed=run.cfg.seed)}
    rows = []
    for name, rep in reps.items():
        for c in range(len(rep.e_conditional)):
            rows.append({"source": name, "class": c, "ape": rep.e_conditional[c],
                         "stderr": rep.stderr_conditional[c], "ape_posterior_route": rep.e_posterior[c]})
    report.write_csv(run.path("ape.csv"), ["source", "class", "ape", "stderr", "ape_posterior_route"], rows,
                     run.prov)
    report.write_json(run.path("ape.json"), {k: v.to_dict() for k, v in reps.items()}, run.prov)
    report.plot_ape(run.path("ape.png"), reps, run.prov)
    return {"ape_class_mean": reps["generator"].class_mean, "oracle_class_mean": reps["oracle"].class_mean}


def cmd_chain(run: Run, args) -> dict:
    ds = run.dataset()
    ver = run.ver()
    reg = run.regressor()
    grid = tuple(g.strip() for g in args.grid.split(","))
    ctx = run.prior_ctx(ver)
    rows = chain_experiment(ds, ctx.oracle, ver, reg, run.cfg, grid=grid, prior_ctx=ctx)
    report.write_csv(run.path("chain.csv"), CHAIN_COLUMNS, rows, run.prov)
    report.write_json(run.path("chain.json"), {"cells": rows}, run.prov)
    report.plot_chain(run.path("chain.png"), rows, run.prov)
    return {"cells": len(rows)}


def cmd_sweep(run: Run, args) -> dict:
    ds = run.dataset()
    if args.kind == "prior":
        ver = run.ver() if run.path(VER).exists() else None
        names = tuple(p.strip() for p in args.priors.split(","))
        ctx = run.prior_ctx(ver)
        rows = prior_sweep(ds, ctx.oracle, run.cfg, priors=names, ver=ver, prior_ctx=ctx)
        report.write_csv(run.path("sweep_prior.csv"), SWEEP_COLUMNS, rows, run.prov)
        report.write_json(run.path("sweep_prior.json"), {"rows": rows}, run.prov)
        report.plot_prior_sweep(run.path("sweep_prior.png"), rows, run.prov)
    else:
        ver = run.ver()
        reg = run.regressor()
        ctx = run.prior_ctx(ver)
        rows = lambda_u2_sweep(ds, ctx.oracle, ver, reg, run.cfg, prior_ctx=ctx)
        report.write_csv(run.path("sweep_lambda_u2.csv"), LAMBDA_COLUMNS, rows, run.prov)
        report.write_json(run.path("sweep_lambda_u2.json"), {"rows": rows}, run.prov)
        report.plot_lambda_sweep(run.path("sweep_lambda_u2.png"), rows, run.prov)
    return {"rows": len(rows)}


COMMANDS = {
    "synth-data": (cmd_synth_data, "build the dataset named by the config and write dataset.ivgn"),
    "import-csv": (cmd_import_csv, "build dataset.ivgn from feature and semantic CSV files"),
    "pretrain": (cmd_pretrain, "stage 1: train the VER autoencoder"),
    "train-regressor": (cmd_train_regressor, "stage 2: train the semantic regressor"),
    "train-generator": (cmd_train_generator, "stage 3: train the feature generator"),
    "evaluate": (cmd_evaluate, "train the final classifier and write eval.json"),
    "ape": (cmd_ape, "per-class APE of the trained generator (synthetic data only)"),
    "chain": (cmd_chain, "stage-3 runs over every (g_prior, d_prior) pair"),
    "sweep": (cmd_sweep, "prior sweep or lambda_u2 sweep"),
    "all": (cmd_all, "synth-data, the three stages and evaluate in one go"),
}


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--out", help="output directory override")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ivaegan", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, parents=[common], help=text) for name, (_, text) in COMMANDS.items()}
    p = parsers["import-csv"]
    p.add_argument("--samples", required=True, help="CSV: feature columns then class id")
    p.add_argument("--semantics", required=True, help="CSV: class id then semantic vector")
    p.add_argument("--unseen", required=True, help="comma-separated unseen class ids")
    parsers["chain"].add_argument("--grid", default="uniform,cpe,gt", help="priors tried on each side")
    p = parsers["sweep"]
    p.add_argument("--kind", choices=("prior", "lambda_u2"), default="prior")
    p.add_argument("--priors", default="gt,cpe,uniform", help="priors for --kind prior")
    return parser


def resolve_config(args) -> ExperimentConfig:
    text = Path(args.config).read_text() if args.config else ""
    source = args.config or "<defaults>"
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        text += "\n" + item
    cfg = ExperimentConfig.from_text(text, source)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, ckpt.DependencyError):
        return EXIT_DEPENDENCY
    return EXIT_FAIL


KNOWN_ERRORS = (ConfigError, ckpt.DependencyError, ContainerError, DatasetError, PriorError, UsageError,
                DimensionError, EvaluationError, TrainingDiverged, ApeContractError, FileNotFoundError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = Run(resolve_config(args))
        fn, _ = COMMANDS[args.command]
        summary = fn(run, args)
    except KNOWN_ERRORS as exc:
        print(json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return _exit_code(exc)
    print(json.dumps({"status": "ok", "command": args.command, **report._clean(summary)}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
