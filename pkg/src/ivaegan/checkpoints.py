"""Stage checkpoints stored in the shared binary container.

Each network is flattened into ``<net>.W1``, ``<net>.b1``, ``<net>.W2`` and
``<net>.b2`` matrices; the LeakyReLU slope and the provenance (config
fingerprint, master seed) travel in the header metadata.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .container import ContainerError, read_container, write_container
from .fgen import CriticSet, GeneratorModel
from .numkit import Mlp2Params
from .regress import RegressorModel, SemanticCritic
from .ver import VerModel

VER_KIND, REG_KIND, GEN_KIND = "ver", "regressor", "generator"


class DependencyError(RuntimeError):
    """An upstream stage output is missing."""


def _flatten(nets: dict[str, Mlp2Params]) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    mats, slopes = {}, {}
    for name, p in nets.items():
        for key, arr in p.arrays().items():
            mats[f"{name}.{key}"] = arr
        slopes[name] = p.slope
    return mats, slopes


def _unflatten(mats: dict[str, np.ndarray], slopes: dict, name: str, path) -> Mlp2Params:
    try:
        parts = {k: np.array(mats[f"{name}.{k}"]) for k in ("W1", "b1", "W2", "b2")}
    except KeyError as exc:
        raise ContainerError(f"{path}: checkpoint lacks matrix {exc.args[0]}") from None
    return Mlp2Params(slope=float(slopes[name]), **parts)


def _traces_meta(traces: dict) -> dict:
    return {k: [float(v) for v in vals] for k, vals in traces.items()}


def save_ver(m: VerModel, path, provenance: dict) -> None:
    mats, slopes = _flatten({"E_pre": m.E_pre, "F_pre": m.F_pre})
    write_container(path, VER_KIND, mats, {**provenance, "slopes": slopes,
                                           "traces": {"loss": [float(v) for v in m.loss_trace]}})


def load_ver(path) -> tuple[VerModel, dict]:
    mats, meta = read_stage(path, VER_KIND)
    s = meta["slopes"]
    m = VerModel(_unflatten(mats, s, "E_pre", path), _unflatten(mats, s, "F_pre", path),
                 loss_trace=list(meta.get("traces", {}).get("loss", [])))
    return m.freeze(), meta


def save_regressor(m: RegressorModel, path, provenance: dict) -> None:
    nets = {"R": m.R}
    if m.critic is not None:
        nets["D_r"] = m.critic.D_r
    mats, slopes = _flatten(nets)
    write_container(path, REG_KIND, mats, {**provenance, "slopes": slopes, "use_ver": bool(m.use_ver),
                                           "traces": _traces_meta(m.traces)})


def load_regressor(path) -> tuple[RegressorModel, dict]:
    mats, meta = read_stage(path, REG_KIND)
    s = meta["slopes"]
    critic = SemanticCritic(_unflatten(mats, s, "D_r", path)) if "D_r" in s else None
    m = RegressorModel(_unflatten(mats, s, "R", path), use_ver=bool(meta["use_ver"]),
                       traces=meta.get("traces", {}), critic=critic)
    return m.freeze(), meta


def save_generator(m: GeneratorModel, critics: CriticSet, path, provenance: dict) -> None:
    mats, slopes = _flatten({"E": m.E, "G": m.G, "D_s": critics.D_s, "D_u": critics.D_u,
                             "D_u2": critics.D_u2})
    write_container(path, GEN_KIND, mats, {**provenance, "slopes": slopes, "traces": _traces_meta(m.traces)})


def load_generator(path) -> tuple[GeneratorModel, CriticSet, dict]:
    mats, meta = read_stage(path, GEN_KIND)
    s = meta["slopes"]
    m = GeneratorModel(_unflatten(mats, s, "E", path), _unflatten(mats, s, "G", path),
                       traces=meta.get("traces", {}))
    c = CriticSet(*(_unflatten(mats, s, n, path) for n in ("D_s", "D_u", "D_u2")))
    return m, c, meta


def read_stage(path, kind: str):
    if not Path(path).exists():
        raise DependencyError(f"missing upstream checkpoint {path}")
    return read_container(path, kind=kind)
