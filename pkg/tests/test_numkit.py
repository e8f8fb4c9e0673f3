import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import gradcases
from ivaegan.numkit import (AdamWState, DimensionError, Mlp2Grads, Mlp2Params, UsageError, adamw_step,
                            as_matrix, critic_input_gradient, gp_value_and_grads, iter_minibatches,
                            leaky_relu, make_rng, mlp2_forward, mlp2_grads, spawn_rngs)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_identity_network():
    p = Mlp2Params(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), slope=1.0)
    y, _ = mlp2_forward(p, [[1.0, 2.0]])
    np.testing.assert_array_equal(y, [[1.0, 2.0]])


def test_single_leaky_unit():
    p = Mlp2Params([[1.0]], [0.0], [[1.0]], [0.0], slope=0.2)
    y, _ = mlp2_forward(p, [[-1.0]])
    assert y[0, 0] == pytest.approx(-0.2)


def test_forward_matches_scalar_loop(rng):
    p = Mlp2Params.init(3, 4, 2, rng)
    X = rng.standard_normal((5, 3))
    Y, _ = mlp2_forward(p, X)
    for i in range(5):
        for o in range(2):
            acc = p.b2[0, o]
            for j in range(4):
                h = p.b1[0, j] + sum(p.W1[j, k] * X[i, k] for k in range(3))
                acc += p.W2[o, j] * (h if h > 0 else 0.2 * h)
            assert Y[i, o] == pytest.approx(acc, abs=1e-12)


def test_shape_mismatch_raises(rng):
    p = Mlp2Params.init(3, 4, 2, rng)
    with pytest.raises(DimensionError):
        mlp2_forward(p, np.zeros((2, 5)))
    with pytest.raises(DimensionError):
        Mlp2Params(np.zeros((4, 3)), np.zeros(5), np.zeros((2, 4)), np.zeros(2))


def test_bad_slope_rejected():
    with pytest.raises(ValueError):
        Mlp2Params(np.zeros((1, 1)), np.zeros(1), np.zeros((1, 1)), np.zeros(1), slope=0.0)


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])


def test_stale_cache_rejected(rng):
    p = Mlp2Params.init(3, 4, 2, rng)
    X = rng.standard_normal((2, 3))
    _, cache = mlp2_forward(p, X)
    adamw_step(AdamWState.for_params(p), p, Mlp2Grads.zeros_like(p))
    with pytest.raises(UsageError):
        mlp2_grads(p, cache, np.ones((2, 2)))


def test_cache_of_other_params_rejected(rng):
    p, q = Mlp2Params.init(3, 4, 2, rng), Mlp2Params.init(3, 4, 2, rng)
    _, cache = mlp2_forward(p, rng.standard_normal((2, 3)))
    with pytest.raises(UsageError):
        mlp2_grads(q, cache, np.ones((2, 2)))


@pytest.mark.parametrize("name", list(gradcases.CASES))
def test_gradients_match_finite_differences(name):
    rng = np.random.default_rng(7)
    worst = max(gradcases.CASES[name](rng) for _ in range(10))
    assert worst <= 1e-4


def test_zero_penalty_at_unit_norm():
    # critic D(x) = w . x with |w| = 1 on the positive side of every unit
    p = Mlp2Params(np.eye(2), np.full(2, 100.0), [[0.6, 0.8]], [0.0])
    val, g = gp_value_and_grads(p, np.zeros((3, 2)))
    assert val == pytest.approx(0.0, abs=1e-20)
    assert np.allclose(g.W1, 0) and np.allclose(g.W2, 0)


def test_penalty_cols_ignores_condition_block(rng):
    p = Mlp2Params.init(5, 6, 1, rng)
    X = rng.standard_normal((4, 5))
    G = critic_input_gradient(p, X)[:, :3]
    expect = 10.0 * np.mean((np.linalg.norm(G, axis=1) - 1.0) ** 2)
    val, g = gp_value_and_grads(p, X, 10.0, slice(0, 3))
    assert val == pytest.approx(expect)
    assert np.all(g.W1[:, 3:] == 0)
    assert np.all(g.b1 == 0) and np.all(g.b2 == 0)


def test_adamw_matches_scalar_oracle():
    p = Mlp2Params([[1.0]], [0.5], [[-2.0]], [0.1])
    s = AdamWState.for_params(p, lr=0.01, beta1=0.5, beta2=0.999, eps=1e-8, weight_decay=0.1)
    grads = [0.3, -0.2, 0.7]
    w, m, v = 1.0, 0.0, 0.0
    for t, gval in enumerate(grads, start=1):
        g = Mlp2Grads(np.array([[gval]]), np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
        adamw_step(s, p, g)
        m = 0.5 * m + 0.5 * gval
        v = 0.999 * v + 0.001 * gval * gval
        w *= 1 - 0.01 * 0.1
        w -= 0.01 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert p.W1[0, 0] == pytest.approx(w, abs=1e-15)
    assert s.step == 3 and p.version == 3


def test_adamw_zero_gradient_no_decay_is_noop(rng):
    p = Mlp2Params.init(2, 3, 1, rng)
    before = p.copy()
    adamw_step(AdamWState.for_params(p), p, Mlp2Grads.zeros_like(p))
    for k, a in before.arrays().items():
        np.testing.assert_array_equal(a, p.arrays()[k])


def test_same_seed_same_stream():
    np.testing.assert_array_equal(make_rng(5).random(10), make_rng(5).random(10))
    a, b = spawn_rngs(5, 2)
    assert not np.array_equal(a.random(4), b.random(4))
    np.testing.assert_array_equal(spawn_rngs(5, 2)[1].random(3), spawn_rngs(5, 2)[1].random(3))


@given(n=st.integers(1, 300), bs=st.integers(1, 70), seed=st.integers(0, 2**32))
def test_minibatches_cover_each_index_once(n, bs, seed):
    batches = list(iter_minibatches(n, bs, make_rng(seed)))
    np.testing.assert_array_equal(np.sort(np.concatenate(batches)), np.arange(n))
    assert all(len(b) <= bs for b in batches)


@given(arrays(np.float64, (3, 4), elements=finite), st.floats(0.01, 1.0))
def test_leaky_relu_properties(h, slope):
    y = leaky_relu(h, slope)
    assert np.all(y[h > 0] == h[h > 0])
    np.testing.assert_allclose(y[h <= 0], slope * h[h <= 0])
    assert np.all(np.abs(y) <= np.abs(h))


@given(st.integers(0, 10_000))
def test_outputs_finite(seed):
    r = np.random.default_rng(seed)
    p = Mlp2Params.init(4, 8, 3, r)
    Y, _ = mlp2_forward(p, r.standard_normal((6, 4)) * 10)
    assert np.all(np.isfinite(Y))
