"""Wasserstein critic objectives with gradient penalty, shared by stages 2 and 3."""

from __future__ import annotations

import numpy as np

from .numkit import DimensionError, Mlp2Grads, Mlp2Params, gp_value_and_grads, mlp2_forward, mlp2_grads


def interpolate(real: np.ndarray, fake: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Row-wise ``alpha * real + (1 - alpha) * fake``."""
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1, 1)
    return alpha * real + (1.0 - alpha) * fake


def critic_objective(D: Mlp2Params, real: np.ndarray, fake: np.ndarray, alpha: np.ndarray,
                     lambda_gp: float, cols: slice | None = None) -> tuple[float, Mlp2Grads]:
    """``E[D(real)] - E[D(fake)] - GP(xhat)`` and its gradient wrt the critic parameters.

    Real and fake rows are paired for interpolation; for conditional critics
    both carry the same condition block, so only the feature block moves.
    """
    if real.shape != fake.shape:
        raise DimensionError(f"real {real.shape} and fake {fake.shape} batches must match")
    n = real.shape[0]
    d_real, c_real = mlp2_forward(D, real)
    d_fake, c_fake = mlp2_forward(D, fake)
    g_real, _ = mlp2_grads(D, c_real, np.full((n, 1), 1.0 / n))
    g_fake, _ = mlp2_grads(D, c_fake, np.full((n, 1), -1.0 / n))
    penalty, g_pen = gp_value_and_grads(D, interpolate(real, fake, alpha), lambda_gp, cols)
    value = float(d_real.mean() - d_fake.mean()) - penalty
    return value, g_real + g_fake - g_pen


def generator_side(D: Mlp2Params, fake: np.ndarray) -> tuple[float, np.ndarray]:
    """``-E[D(fake)]`` and its gradient wrt the fake rows (all columns)."""
    n = fake.shape[0]
    out, cache = mlp2_forward(D, fake)
    _, d_fake = mlp2_grads(D, cache, np.full((n, 1), -1.0 / n))
    return -float(out.mean()), d_fake
