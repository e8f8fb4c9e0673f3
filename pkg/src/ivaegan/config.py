"""Flat ``key = value`` experiment configuration with a strict schema."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # data
    dataset: str = "synthetic"          # "synthetic" or a path to a dataset container
    syn_preset: str = "default"         # default | skewed | uniform
    syn_seed: int = 0
    syn_noise_std: float = -1.0         # < 0 keeps the preset value
    syn_samples_per_class: int = 0      # 0 keeps the preset value
    mode: str = "TZSL"                  # TZSL | TGZSL
    holdout_fraction: float = 0.2
    # architecture
    hidden: int = 64
    d_z: int = 0                        # 0 -> ceil(d_a / 2)
    use_ver: bool = True
    # epochs
    n_pre: int = 30
    n_r: int = 60
    n_g: int = 60
    n_clf: int = 50
    batch_size: int = 64
    # optimiser (shared by every network)
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 0.0
    # loss weights
    lambda_r: float = 0.01
    lambda_u1: float = 1.0
    lambda_u2: float = 0.09
    lambda_gp: float = 10.0
    # priors: gt | uniform | cpe | comma-separated probabilities
    g_prior: str = "gt"
    d_prior: str = "gt"
    r_prior: str = "gt"
    cpe_anchor: str = "generated"       # generated | semantic
    cpe_iters: int = 10
    cpe_n_anchor: int = 200
    # classifier / diagnostics
    n_syn: int = 200
    ape_n_fit: int = 2000
    ape_mc: int = 50000
    sweep_lambda_u2: str = "0,0.01,0.03,0.09,0.3,1"
    # run
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("lambda_r", "lambda_u1", "lambda_u2", "lambda_gp", "weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("n_pre", "n_r", "n_g", "n_clf", "batch_size", "hidden", "cpe_iters", "cpe_n_anchor"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_syn < 1:
            raise ConfigError("n_syn must be >= 1")
        if self.mode not in ("TZSL", "TGZSL"):
            raise ConfigError(f"mode must be TZSL or TGZSL, got {self.mode!r}")
        if self.cpe_anchor not in ("generated", "semantic"):
            raise ConfigError(f"cpe_anchor must be 'generated' or 'semantic', got {self.cpe_anchor!r}")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")

    # ------------------------------------------------------------------ text form

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
            values[key] = _parse(val, types[key], f"{source}:{lineno}")
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), str(path))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    def replace(self, **changes) -> "ExperimentConfig":
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return dataclasses.replace(self, **changes)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical text form, excluding the output directory."""
        text = self.replace(out="").to_text()
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse(val: str, typ: str, where: str):
    try:
        if typ == "bool":
            low = val.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {val!r} as {typ}") from None
    return val


def derive_seed(master: int, *names) -> int:
    """Stable 63-bit child seed for a named stage."""
    h = hashlib.sha256(str(int(master)).encode())
    for n in names:
        h.update(b"/" + str(n).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1
