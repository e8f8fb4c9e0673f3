"""Split datasets, the synthetic Gaussian benchmark with exact densities, and file I/O."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .container import ContainerError, read_container, write_container
from .numkit import make_rng

log = logging.getLogger(__name__)

DEFAULT_HOLDOUT_FRACTION = 0.2


class DatasetError(ValueError):
    """A dataset violates one of its structural invariants."""


@dataclass(frozen=True, eq=False)
class TrainView:
    """Everything a training stage may see: no unseen labels exist here."""

    Xs: np.ndarray
    Ys: np.ndarray
    Xu: np.ndarray
    As: np.ndarray
    Au: np.ndarray

    @property
    def d_x(self) -> int:
        return self.Xs.shape[1]

    @property
    def d_a(self) -> int:
        return self.As.shape[1]

    @property
    def n_seen_classes(self) -> int:
        return self.As.shape[0]

    @property
    def n_unseen_classes(self) -> int:
        return self.Au.shape[0]


@dataclass(frozen=True, eq=False)
class SplitDataset:
    """Labeled seen features, unlabeled unseen features and class semantics.

    ``Ys`` indexes rows of ``As`` and ``Yu_hidden`` indexes rows of ``Au``;
    ``seen_classes``/``unseen_classes`` hold the global class ids of those rows.
    """

    Xs: np.ndarray
    Ys: np.ndarray
    Xu: np.ndarray
    As: np.ndarray
    Au: np.ndarray
    Yu_hidden: np.ndarray | None = None
    Xs_test: np.ndarray | None = None
    Ys_test: np.ndarray | None = None
    seen_classes: np.ndarray | None = None
    unseen_classes: np.ndarray | None = None

    def __post_init__(self):
        conv = {
            "Xs": np.asarray(self.Xs, dtype=np.float64),
            "Xu": np.asarray(self.Xu, dtype=np.float64),
            "As": np.asarray(self.As, dtype=np.float64),
            "Au": np.asarray(self.Au, dtype=np.float64),
            "Ys": np.asarray(self.Ys, dtype=np.int64).ravel(),
        }
        if self.Yu_hidden is not None:
            conv["Yu_hidden"] = np.asarray(self.Yu_hidden, dtype=np.int64).ravel()
        if self.Xs_test is not None:
            conv["Xs_test"] = np.asarray(self.Xs_test, dtype=np.float64)
            conv["Ys_test"] = np.asarray(self.Ys_test, dtype=np.int64).ravel()
        n_s, n_u = conv["As"].shape[0], conv["Au"].shape[0]
        conv["seen_classes"] = (np.arange(n_s) if self.seen_classes is None
                                else np.asarray(self.seen_classes, dtype=np.int64).ravel())
        conv["unseen_classes"] = (np.arange(n_s, n_s + n_u) if self.unseen_classes is None
                                  else np.asarray(self.unseen_classes, dtype=np.int64).ravel())
        for k, v in conv.items():
            object.__setattr__(self, k, v)
        self.validate()

    def validate(self) -> None:
        Xs, Xu, As, Au = self.Xs, self.Xu, self.As, self.Au
        if Xs.ndim != 2 or Xu.ndim != 2 or As.ndim != 2 or Au.ndim != 2:
            raise DatasetError("feature and semantic matrices must be 2-D")
        if Xs.shape[1] != Xu.shape[1]:
            raise DatasetError(f"shape mismatch: seen features have {Xs.shape[1]} columns, unseen {Xu.shape[1]}")
        if As.shape[1] != Au.shape[1]:
            raise DatasetError(f"shape mismatch: seen semantics have {As.shape[1]} columns, unseen {Au.shape[1]}")
        if len(self.Ys) != Xs.shape[0]:
            raise DatasetError(f"shape mismatch: {Xs.shape[0]} seen samples but {len(self.Ys)} labels")
        if len(self.seen_classes) != As.shape[0] or len(self.unseen_classes) != Au.shape[0]:
            raise DatasetError("class id lists must match the semantic matrices")
        if len(set(self.seen_classes.tolist())) != len(self.seen_classes) or \
                len(set(self.unseen_classes.tolist())) != len(self.unseen_classes):
            raise DatasetError("duplicate class ids")
        common = set(self.seen_classes.tolist()) & set(self.unseen_classes.tolist())
        if common:
            raise DatasetError(f"class sets intersect: {sorted(common)}")
        _check_labels(self.Ys, As.shape[0], "Ys")
        if self.Yu_hidden is not None:
            if len(self.Yu_hidden) != Xu.shape[0]:
                raise DatasetError(f"shape mismatch: {Xu.shape[0]} unseen samples but {len(self.Yu_hidden)} labels")
            _check_labels(self.Yu_hidden, Au.shape[0], "Yu_hidden")
        if self.Xs_test is not None:
            if self.Xs_test.ndim != 2 or self.Xs_test.shape[1] != Xs.shape[1]:
                raise DatasetError("shape mismatch: seen test features")
            if len(self.Ys_test) != self.Xs_test.shape[0]:
                raise DatasetError("shape mismatch: seen test labels")
            _check_labels(self.Ys_test, As.shape[0], "Ys_test")
        for name in ("Xs", "Xu", "As", "Au"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DatasetError(f"{name} contains non-finite values")

    def train_view(self) -> TrainView:
        return TrainView(self.Xs, self.Ys, self.Xu, self.As, self.Au)

    @property
    def d_x(self) -> int:
        return self.Xs.shape[1]

    @property
    def d_a(self) -> int:
        return self.As.shape[1]


def _check_labels(y: np.ndarray, n_classes: int, name: str) -> None:
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise DatasetError(f"{name} contains ids outside [0, {n_classes})")


def as_train_view(ds) -> TrainView:
    return ds.train_view() if isinstance(ds, SplitDataset) else ds


# --------------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticSpec:
    d_x: int = 16
    d_a: int = 8
    d_z: int | None = None
    N_s: int = 8
    N_u: int = 4
    samples_per_class: int = 200
    semantic_map_scale: float = 6.0
    noise_std: float = 0.5
    unseen_prior: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("d_x", "d_a", "N_s", "N_u", "samples_per_class"):
            if getattr(self, name) < 1:
                raise DatasetError(f"{name} must be >= 1")
        if self.d_z is not None and self.d_z < 1:
            raise DatasetError("d_z must be >= 1")
        if self.noise_std < 0 or self.semantic_map_scale <= 0:
            raise DatasetError("noise_std must be >= 0 and semantic_map_scale > 0")
        prior = self.prior_vector()
        if np.any(prior < 0):
            raise DatasetError("degenerate prior: negative entry in unseen_prior")
        if len(prior) != self.N_u:
            raise DatasetError(f"unseen_prior has {len(prior)} entries, expected N_u={self.N_u}")
        if abs(prior.sum() - 1.0) > 1e-12:
            raise DatasetError(f"unseen_prior sums to {prior.sum()!r}, expected 1")

    def prior_vector(self) -> np.ndarray:
        if self.unseen_prior is None:
            return np.full(self.N_u, 1.0 / self.N_u)
        return np.asarray(self.unseen_prior, dtype=np.float64)

    @property
    def latent_dim(self) -> int:
        return self.d_z if self.d_z is not None else math.ceil(self.d_a / 2)


@dataclass(frozen=True, eq=False)
class DensityOracle:
    """Exact class-conditional Gaussians ``N(mean_c, noise_std^2 I)`` and class priors."""

    seen_means: np.ndarray
    unseen_means: np.ndarray
    noise_std: float
    unseen_prior: np.ndarray
    seen_prior: np.ndarray = field(default=None)

    @property
    def d_x(self) -> int:
        return self.unseen_means.shape[1]

    def class_log_pdf(self, X: np.ndarray, c: int, unseen: bool = True) -> np.ndarray:
        mu = (self.unseen_means if unseen else self.seen_means)[c]
        var = max(self.noise_std, 1e-300) ** 2
        sq = np.sum((np.atleast_2d(X) - mu) ** 2, axis=1)
        return -0.5 * sq / var - 0.5 * self.d_x * np.log(2 * np.pi * var)

    def class_pdf(self, X: np.ndarray, c: int, unseen: bool = True) -> np.ndarray:
        return np.exp(self.class_log_pdf(X, c, unseen))

    def marginal_pdf(self, X: np.ndarray, unseen: bool = True) -> np.ndarray:
        prior = self.unseen_prior if unseen else self.seen_prior
        return sum(prior[c] * self.class_pdf(X, c, unseen) for c in range(len(prior)))

    def posterior(self, X: np.ndarray) -> np.ndarray:
        """Real unseen-class posterior, one row per sample."""
        logs = np.stack([self.class_log_pdf(X, c) for c in range(len(self.unseen_prior))], axis=1)
        with np.errstate(divide="ignore"):
            logs = logs + np.log(self.unseen_prior)
        logs -= logs.max(axis=1, keepdims=True)
        p = np.exp(logs)
        return p / p.sum(axis=1, keepdims=True)

    def sample_unseen(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        y = rng.choice(len(self.unseen_prior), size=n, p=self.unseen_prior)
        x = self.unseen_means[y] + self.noise_std * rng.standard_normal((n, self.d_x))
        return x, y


def _random_map(d_x: int, d_a: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d_x, d_a))
    if d_x >= d_a:
        q, r = np.linalg.qr(g)
        return q * np.sign(np.diag(r))
    return g / np.sqrt(d_x)


def make_synthetic(spec: SyntheticSpec) -> tuple[SplitDataset, DensityOracle]:
    """Isotropic Gaussian classes whose means are a fixed linear map of unit-norm semantics."""
    rng = make_rng(spec.seed)
    n_cls = spec.N_s + spec.N_u
    A = rng.standard_normal((n_cls, spec.d_a))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    M = spec.semantic_map_scale * _random_map(spec.d_x, spec.d_a, rng)
    means = A @ M.T
    As, Au = A[:spec.N_s], A[spec.N_s:]
    mu_s, mu_u = means[:spec.N_s], means[spec.N_s:]

    Ys = np.repeat(np.arange(spec.N_s), spec.samples_per_class)
    Ys = Ys[rng.permutation(len(Ys))]
    Xs = mu_s[Ys] + spec.noise_std * rng.standard_normal((len(Ys), spec.d_x))

    prior = spec.prior_vector()
    n_u = spec.N_u * spec.samples_per_class
    Yu = rng.choice(spec.N_u, size=n_u, p=prior)
    Xu = mu_u[Yu] + spec.noise_std * rng.standard_normal((n_u, spec.d_x))

    ds = SplitDataset(Xs=Xs, Ys=Ys, Xu=Xu, As=As, Au=Au, Yu_hidden=Yu)
    oracle = DensityOracle(
        seen_means=mu_s, unseen_means=mu_u, noise_std=spec.noise_std,
        unseen_prior=prior, seen_prior=np.full(spec.N_s, 1.0 / spec.N_s),
    )
    return ds, oracle


SKEWED_PRIOR = (0.55, 0.25, 0.12, 0.08)

# "skewed" and "uniform" share one geometry with overlapping classes, so the
# unseen prior matters; "default" is the well separated benchmark.
PRESETS = {
    "default": SyntheticSpec(),
    "skewed": SyntheticSpec(noise_std=1.0, unseen_prior=SKEWED_PRIOR),
    "uniform": SyntheticSpec(noise_std=1.0),
}


def preset(name: str, **overrides) -> SyntheticSpec:
    try:
        base = PRESETS[name]
    except KeyError:
        raise DatasetError(f"unknown synthetic preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(base, **overrides)


# --------------------------------------------------------------------------- splits


def holdout_seen(ds: SplitDataset, fraction: float = DEFAULT_HOLDOUT_FRACTION, seed: int = 0) -> SplitDataset:
    """Stratified train/test split of the seen samples (``ceil(fraction * n_c)`` test rows per class)."""
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"holdout fraction must lie in (0, 1), got {fraction}")
    rng = make_rng(seed)
    train_idx, test_idx = [], []
    for c in range(ds.As.shape[0]):
        idx = np.flatnonzero(ds.Ys == c)
        if len(idx) == 0:
            continue
        if len(idx) < 2:
            raise DatasetError(f"seen class {int(ds.seen_classes[c])} has {len(idx)} sample(s); need >= 2 to split")
        idx = idx[rng.permutation(len(idx))]
        n_test = min(max(math.ceil(fraction * len(idx)), 1), len(idx) - 1)
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    return replace(ds, Xs=ds.Xs[tr], Ys=ds.Ys[tr], Xs_test=ds.Xs[te], Ys_test=ds.Ys[te])


# --------------------------------------------------------------------------- file I/O


def save_dataset(ds: SplitDataset, path, meta: dict | None = None) -> None:
    mats = {"Xs": ds.Xs, "Ys": ds.Ys, "Xu": ds.Xu, "As": ds.As, "Au": ds.Au,
            "seen_classes": ds.seen_classes, "unseen_classes": ds.unseen_classes}
    if ds.Yu_hidden is not None:
        mats["Yu_hidden"] = ds.Yu_hidden
    if ds.Xs_test is not None:
        mats["Xs_test"] = ds.Xs_test
        mats["Ys_test"] = ds.Ys_test
    meta = {"n_s": int(ds.Xs.shape[0]), "n_u": int(ds.Xu.shape[0]), "d_x": ds.d_x, "d_a": ds.d_a,
            "N_s": int(ds.As.shape[0]), "N_u": int(ds.Au.shape[0]), **(meta or {})}
    write_container(path, "dataset", mats, meta)


def _labels(m: np.ndarray, name: str) -> np.ndarray:
    v = m.ravel()
    if m.shape[1] != 1 or not np.all(v == np.round(v)):
        raise DatasetError(f"{name} must be a column of integer ids")
    return v.astype(np.int64)


def load_dataset(path) -> SplitDataset:
    mats, _ = read_container(path, kind="dataset")
    missing = {"Xs", "Ys", "Xu", "As", "Au"} - set(mats)
    if missing:
        raise ContainerError(f"{path}: missing matrices {sorted(missing)}")
    kw = {k: mats[k] for k in ("Xs", "Xu", "As", "Au")}
    kw["Ys"] = _labels(mats["Ys"], "Ys")
    for name in ("Yu_hidden", "Ys_test", "seen_classes", "unseen_classes"):
        if name in mats:
            kw[name] = _labels(mats[name], name)
    if "Xs_test" in mats:
        kw["Xs_test"] = mats["Xs_test"]
    return SplitDataset(**kw)


def import_csv(samples_path, semantics_path, unseen_classes) -> SplitDataset:
    """Build a split from user features.

    ``samples_path``: one row per sample, feature columns then the integer class id.
    ``semantics_path``: one row per class, class id first then the semantic vector.
    Samples of ``unseen_classes`` become the unlabeled pool (labels kept hidden for evaluation).
    """
    def rows(path):
        with open(path, newline="") as fh:
            out = []
            for i, r in enumerate(csv.reader(fh), start=1):
                if not r or r[0].lstrip().startswith("#"):
                    continue
                try:
                    out.append([float(v) for v in r])
                except ValueError:
                    if i == 1:  # header row
                        continue
                    raise DatasetError(f"{path}:{i}: non-numeric value") from None
            return out

    sem = rows(semantics_path)
    smp = rows(samples_path)
    if not sem or not smp:
        raise DatasetError("empty CSV input")
    if len({len(r) for r in sem}) != 1 or len({len(r) for r in smp}) != 1:
        raise DatasetError("ragged CSV rows")
    sem = np.asarray(sem)
    smp = np.asarray(smp)
    class_ids = sem[:, 0].astype(np.int64)
    unseen = np.asarray(sorted(set(int(c) for c in unseen_classes)), dtype=np.int64)
    unknown = set(unseen.tolist()) - set(class_ids.tolist())
    if unknown:
        raise DatasetError(f"unseen classes without semantics: {sorted(unknown)}")
    seen = np.asarray([c for c in class_ids if c not in set(unseen.tolist())], dtype=np.int64)
    row_of = {int(c): i for i, c in enumerate(class_ids)}
    X, y = smp[:, :-1], smp[:, -1].astype(np.int64)
    bad = set(y.tolist()) - set(row_of)
    if bad:
        raise DatasetError(f"samples reference classes without semantics: {sorted(bad)}")
    s_index = {int(c): i for i, c in enumerate(seen)}
    u_index = {int(c): i for i, c in enumerate(unseen)}
    is_u = np.isin(y, unseen)
    return SplitDataset(
        Xs=X[~is_u], Ys=np.array([s_index[int(c)] for c in y[~is_u]], dtype=np.int64),
        Xu=X[is_u], Yu_hidden=np.array([u_index[int(c)] for c in y[is_u]], dtype=np.int64),
        As=sem[[row_of[int(c)] for c in seen], 1:], Au=sem[[row_of[int(c)] for c in unseen], 1:],
        seen_classes=seen, unseen_classes=unseen,
    )
