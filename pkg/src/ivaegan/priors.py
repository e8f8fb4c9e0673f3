"""Unseen-class priors: construction, sampling, clustering-based estimation and prior bias."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-9


class PriorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClassPrior:
    """Probability vector over the unseen classes."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.p, dtype=np.float64).reshape(-1).copy()
        if arr.size == 0:
            raise PriorError("empty prior")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise PriorError(f"prior entries must be finite and non-negative: {arr}")
        if abs(arr.sum() - 1.0) > SIMPLEX_TOL:
            raise PriorError(f"prior sums to {arr.sum()!r}, expected 1")
        arr.flags.writeable = False
        object.__setattr__(self, "p", arr)

    def __array__(self, dtype=None, copy=None):
        return self.p if dtype is None else self.p.astype(dtype)

    def __len__(self) -> int:
        return len(self.p)

    def __getitem__(self, i):
        return self.p[i]

    def __repr__(self) -> str:
        return f"ClassPrior({np.array2string(self.p, precision=4)})"


def uniform_prior(n_unseen: int) -> ClassPrior:
    if n_unseen < 1:
        raise PriorError("need at least one unseen class")
    return ClassPrior(np.full(n_unseen, 1.0 / n_unseen))


def prior_bias(p_est, p_gt) -> float:
    """Class-averaged absolute prior error, in percent."""
    p_est = np.asarray(p_est, dtype=np.float64)
    p_gt = np.asarray(p_gt, dtype=np.float64)
    if p_est.shape != p_gt.shape:
        raise PriorError(f"prior length mismatch: {p_est.shape} vs {p_gt.shape}")
    return float(100.0 * np.mean(np.abs(p_est - p_gt)))


def sample_classes(p, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. categorical draws by inverse CDF (one uniform per draw)."""
    cdf = np.cumsum(np.asarray(p, dtype=np.float64))
    u = rng.random(n) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(cdf) - 1)


def estimate_prior_cpe(Xu: np.ndarray, anchors: np.ndarray, iters: int = 10) -> ClassPrior:
    """Anchor-initialised k-means over the unlabeled pool; returns the cluster proportions.

    Cluster k stays tied to unseen class k. A cluster that loses all its
    points keeps its previous centre and reports proportion 0.
    """
    Xu = np.asarray(Xu, dtype=np.float64)
    centres = np.array(anchors, dtype=np.float64, copy=True)
    if iters < 1:
        raise PriorError("iters must be >= 1")
    if centres.ndim != 2 or centres.shape[1] != Xu.shape[1]:
        raise PriorError(f"anchors shape {centres.shape} incompatible with features {Xu.shape}")
    k = centres.shape[0]
    assign = None
    for it in range(iters):
        d2 = (np.sum(Xu**2, axis=1)[:, None] - 2.0 * Xu @ centres.T + np.sum(centres**2, axis=1)[None, :])
        assign = np.argmin(d2, axis=1)
        if it == iters - 1:
            break
        for c in range(k):
            members = assign == c
            if members.any():
                centres[c] = Xu[members].mean(axis=0)
    counts = np.bincount(assign, minlength=k).astype(np.float64)
    return ClassPrior(counts / counts.sum())


def anchors_from_generator(gen, Au: np.ndarray, n_anchor: int, rng: np.random.Generator) -> np.ndarray:
    """Per-class centroids of generated unseen features."""
    from .fgen import synthesize

    fake = synthesize(gen, Au, n_anchor, rng)
    return fake.reshape(Au.shape[0], n_anchor, -1).mean(axis=1)


def anchors_from_semantics(Xu: np.ndarray, a_pred: np.ndarray, Au: np.ndarray) -> np.ndarray:
    """Centroids of the pool rows whose regressed semantics are nearest to each class semantic.

    Classes that attract no rows fall back to the pool mean.
    """
    d2 = np.sum((a_pred[:, None, :] - Au[None, :, :]) ** 2, axis=2)
    nearest = np.argmin(d2, axis=1)
    out = np.empty((Au.shape[0], Xu.shape[1]))
    for c in range(Au.shape[0]):
        members = nearest == c
        out[c] = Xu[members].mean(axis=0) if members.any() else Xu.mean(axis=0)
    return out
