import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ivaegan.data import SyntheticSpec, make_synthetic
from ivaegan.numkit import UsageError
from ivaegan.ver import (LOGVAR_MIN, VerConfig, VerModel, kl_std_normal, pretrain_ver, reconstruction_mse,
                         reparameterize, ver_embed)

finite = st.floats(-5, 5, allow_nan=False)


def test_kl_closed_forms():
    assert kl_std_normal(np.zeros((3, 2)), np.zeros((3, 2)))[0] == 0.0
    assert kl_std_normal([[1.0]], [[0.0]])[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        kl_std_normal(np.zeros((2, 2)), np.zeros((2, 3)))


@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (4, 3), elements=finite))
def test_kl_nonnegative(mu, lv):
    assert kl_std_normal(mu, lv)[0] >= 0.0


def test_reparameterize_floor_and_seed():
    mu = np.arange(6.0).reshape(3, 2)
    z = reparameterize(mu, np.full((3, 2), -1e6), np.random.default_rng(0))
    np.testing.assert_allclose(z, mu, atol=np.exp(0.5 * LOGVAR_MIN) * 6)
    a = reparameterize(mu, np.zeros((3, 2)), np.random.default_rng(4))
    b = reparameterize(mu, np.zeros((3, 2)), np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)


def test_reparameterize_moments():
    n = 100_000
    z = reparameterize(np.zeros((n, 1)), np.zeros((n, 1)), np.random.default_rng(1)).ravel()
    assert abs(z.mean()) < 3 / np.sqrt(n)
    # var of the sample variance of N(0,1) is 2/n
    assert abs(z.var() - 1.0) < 3 * np.sqrt(2 / n)


def test_pretrain_improves_reconstruction_and_freezes(tiny):
    ds, _ = tiny
    X = np.vstack([ds.Xs, ds.Xu])
    untrained = VerModel.init(ds.d_x, 2, 16, np.random.default_rng(1)).freeze()
    m = pretrain_ver(ds.train_view(), VerConfig(epochs=40, hidden=16, seed=1))
    assert m.frozen and m.d_z == 2
    assert reconstruction_mse(m, X) < reconstruction_mse(untrained, X)
    assert all(np.isfinite(m.loss_trace))
    ma = np.convolve(m.loss_trace, np.ones(10) / 10, mode="valid")
    assert ma[-1] <= ma[0]
    with pytest.raises(ValueError):
        m.E_pre.W1[0, 0] = 1.0


def test_capacity_sanity_at_low_noise():
    spec = SyntheticSpec(d_x=6, d_a=6, N_s=4, N_u=3, samples_per_class=60, noise_std=1e-3, seed=5)
    ds, _ = make_synthetic(spec)
    X = np.vstack([ds.Xs, ds.Xu])
    m = pretrain_ver(X, VerConfig(epochs=150, hidden=32, d_z=6, seed=0))
    assert reconstruction_mse(m, X) < 0.1 * np.sum(X.var(axis=0))


def test_embed_contract(tiny_models, tiny):
    ver = tiny_models[0]
    X = tiny[0].Xu[:7]
    E = ver_embed(ver, X)
    assert E.shape == (7, ver.d_x + 2 * ver.d_z)
    np.testing.assert_array_equal(E[:, :ver.d_x], X)
    np.testing.assert_array_equal(E, ver_embed(ver, X))


def test_embed_requires_frozen():
    m = VerModel.init(3, 2, 4, np.random.default_rng(0))
    with pytest.raises(UsageError):
        ver_embed(m, np.zeros((1, 3)))


def test_pretrain_reads_features_only(tiny):
    ds, _ = tiny
    pooled = np.vstack([ds.Xs, ds.Xu])
    a = pretrain_ver(ds, VerConfig(epochs=2, hidden=8, d_z=2, seed=3))
    b = pretrain_ver(pooled, VerConfig(epochs=2, hidden=8, d_z=2, seed=3))
    assert a.checksum() == b.checksum()
