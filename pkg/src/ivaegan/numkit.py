"""Dense numeric kernel: seeded randomness, two-layer perceptrons with
analytic first- and second-order gradients, and AdamW.

Every matrix is a 2-D float64 ``numpy.ndarray``; batches are rows.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

DEFAULT_SLOPE = 0.2
DEFAULT_LAMBDA_GP = 10.0
GRAD_NORM_FLOOR = 1e-12

PARAM_NAMES = ("W1", "b1", "W2", "b2")


class DimensionError(ValueError):
    """Raised when matrix shapes do not fit together."""


class UsageError(RuntimeError):
    """Raised when an object is used outside its contract (stale cache, frozen model...)."""


def as_matrix(x, cols: int | None = None, name: str = "X") -> np.ndarray:
    """Coerce ``x`` to a finite 2-D float64 array, optionally checking its width."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionError(f"{name} has {m.shape[1]} columns, expected {cols}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` statistically independent generators derived from one master seed."""
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def leaky_relu(h: np.ndarray, slope: float) -> np.ndarray:
    return np.where(h > 0, h, slope * h)


def leaky_relu_deriv(h: np.ndarray, slope: float) -> np.ndarray:
    return np.where(h > 0, 1.0, slope)


@dataclass(eq=False)
class Mlp2Params:
    """Weights of ``y = W2 . phi(W1 . x + b1) + b2`` with phi = LeakyReLU(slope).

    ``version`` is bumped by every in-place update so forward caches can be
    checked for staleness.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    slope: float = DEFAULT_SLOPE
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(1, -1)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64).reshape(1, -1)
        h, _ = self.W1.shape
        if self.b1.shape[1] != h or self.W2.shape[1] != h or self.b2.shape[1] != self.W2.shape[0]:
            raise DimensionError(
                f"inconsistent MLP shapes W1{self.W1.shape} b1{self.b1.shape} "
                f"W2{self.W2.shape} b2{self.b2.shape}"
            )
        if not 0.0 < self.slope <= 1.0:
            raise ValueError(f"LeakyReLU slope must lie in (0, 1], got {self.slope}")

    @classmethod
    def init(cls, d_in: int, hidden: int, d_out: int, rng: np.random.Generator,
             slope: float = DEFAULT_SLOPE) -> "Mlp2Params":
        """He-style uniform initialisation with zero biases."""
        lim1 = np.sqrt(6.0 / d_in) / np.sqrt(1.0 + slope**2)
        lim2 = np.sqrt(3.0 / hidden)
        return cls(
            W1=rng.uniform(-lim1, lim1, size=(hidden, d_in)),
            b1=np.zeros((1, hidden)),
            W2=rng.uniform(-lim2, lim2, size=(d_out, hidden)),
            b2=np.zeros((1, d_out)),
            slope=slope,
        )

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def d_out(self) -> int:
        return self.W2.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "Mlp2Params":
        return Mlp2Params(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy(), self.slope)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in PARAM_NAMES:
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        h.update(np.float64(self.slope).tobytes())
        return h.hexdigest()


@dataclass(eq=False)
class Mlp2Grads:
    """Gradient with the same layout as :class:`Mlp2Params`."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def zeros_like(cls, p: Mlp2Params) -> "Mlp2Grads":
        return cls(np.zeros_like(p.W1), np.zeros_like(p.b1), np.zeros_like(p.W2), np.zeros_like(p.b2))

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def __add__(self, other: "Mlp2Grads") -> "Mlp2Grads":
        return Mlp2Grads(self.W1 + other.W1, self.b1 + other.b1, self.W2 + other.W2, self.b2 + other.b2)

    def __sub__(self, other: "Mlp2Grads") -> "Mlp2Grads":
        return self + other * -1.0

    def __mul__(self, c: float) -> "Mlp2Grads":
        return Mlp2Grads(self.W1 * c, self.b1 * c, self.W2 * c, self.b2 * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Mlp2Grads":
        return self * -1.0


@dataclass
class Mlp2Cache:
    X: np.ndarray
    pre: np.ndarray
    act: np.ndarray
    version: int
    owner: int


def mlp2_forward(p: Mlp2Params, X) -> tuple[np.ndarray, Mlp2Cache]:
    """Row-wise forward pass; returns the output and a cache for :func:`mlp2_grads`."""
    X = as_matrix(X, p.d_in)
    pre = X @ p.W1.T + p.b1
    act = leaky_relu(pre, p.slope)
    Y = act @ p.W2.T + p.b2
    return Y, Mlp2Cache(X, pre, act, p.version, id(p))


def mlp2_hidden(p: Mlp2Params, X) -> np.ndarray:
    """Post-activation output of the first layer."""
    X = as_matrix(X, p.d_in)
    return leaky_relu(X @ p.W1.T + p.b1, p.slope)


def mlp2_grads(p: Mlp2Params, cache: Mlp2Cache, dY) -> tuple[Mlp2Grads, np.ndarray]:
    """Gradients of ``sum(dY * Y)`` with respect to every parameter and to X."""
    if cache.owner != id(p) or cache.version != p.version:
        raise UsageError("stale forward cache: parameters changed since mlp2_forward")
    dY = np.asarray(dY, dtype=np.float64)
    if dY.shape != (cache.X.shape[0], p.d_out):
        raise DimensionError(f"dY shape {dY.shape} does not match output {(cache.X.shape[0], p.d_out)}")
    dact = dY @ p.W2
    dpre = dact * leaky_relu_deriv(cache.pre, p.slope)
    grads = Mlp2Grads(
        W1=dpre.T @ cache.X,
        b1=dpre.sum(axis=0, keepdims=True),
        W2=dY.T @ cache.act,
        b2=dY.sum(axis=0, keepdims=True),
    )
    dX = dpre @ p.W1
    return grads, dX


def critic_input_gradient(p: Mlp2Params, X) -> np.ndarray:
    """Row i holds the gradient of the scalar critic output with respect to x_i."""
    if p.d_out != 1:
        raise DimensionError(f"critic must have a scalar output, got d_out={p.d_out}")
    X = as_matrix(X, p.d_in)
    s = leaky_relu_deriv(X @ p.W1.T + p.b1, p.slope)
    return (s * p.W2[0]) @ p.W1


def gp_value_and_grads(p: Mlp2Params, Xhat, lambda_gp: float = DEFAULT_LAMBDA_GP,
                       cols: slice | None = None) -> tuple[float, Mlp2Grads]:
    """Gradient penalty ``lambda * mean((|grad_x D(xhat)| - 1)^2)`` and its parameter gradient.

    ``cols`` restricts the penalised norm to a block of input columns (the
    feature block of a conditional critic). The activation derivative is
    piecewise constant, so only W1 and W2 receive gradient.
    """
    if p.d_out != 1:
        raise DimensionError(f"critic must have a scalar output, got d_out={p.d_out}")
    Xhat = as_matrix(Xhat, p.d_in, "Xhat")
    cols = slice(None) if cols is None else cols
    n = Xhat.shape[0]
    s = leaky_relu_deriv(Xhat @ p.W1.T + p.b1, p.slope)   # n x h
    U = s * p.W2[0]                                        # n x h
    W1f = p.W1[:, cols]                                    # h x f
    G = U @ W1f                                            # n x f
    norms = np.maximum(np.sqrt(np.sum(G * G, axis=1)), GRAD_NORM_FLOOR)
    dev = norms - 1.0
    penalty = float(lambda_gp * np.mean(dev * dev))

    c = (2.0 * lambda_gp / n) * dev / norms
    CG = G * c[:, None]                                    # dP/dG
    dW1 = np.zeros_like(p.W1)
    dW1[:, cols] = U.T @ CG
    dU = CG @ W1f.T
    dW2 = np.sum(dU * s, axis=0, keepdims=True)
    grads = Mlp2Grads(dW1, np.zeros_like(p.b1), dW2, np.zeros_like(p.b2))
    return penalty, grads


@dataclass(eq=False)
class AdamWState:
    """First/second moment buffers for one parameter set."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, p: Mlp2Params, **hyper) -> "AdamWState":
        arrs = p.arrays()
        return cls(
            m={k: np.zeros_like(a) for k, a in arrs.items()},
            v={k: np.zeros_like(a) for k, a in arrs.items()},
            **hyper,
        )


def adamw_step(s: AdamWState, p: Mlp2Params, g: Mlp2Grads) -> Mlp2Params:
    """One decoupled-weight-decay Adam update of ``p`` in place (minimisation)."""
    s.step += 1
    bc1 = 1.0 - s.beta1**s.step
    bc2 = 1.0 - s.beta2**s.step
    params = p.arrays()
    for name, grad in g.arrays().items():
        w = params[name]
        if grad.shape != w.shape:
            raise DimensionError(f"gradient {name} has shape {grad.shape}, parameter {w.shape}")
        m, v = s.m[name], s.v[name]
        m *= s.beta1
        m += (1.0 - s.beta1) * grad
        v *= s.beta2
        v += (1.0 - s.beta2) * grad * grad
        if s.weight_decay:
            w *= 1.0 - s.lr * s.weight_decay
        w -= s.lr * (m / bc1) / (np.sqrt(v / bc2) + s.eps)
    p.version += 1
    return p


def iter_minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Shuffled index batches covering ``range(n)`` once; the last batch may be short."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]
