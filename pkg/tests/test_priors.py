import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivaegan.priors import (ClassPrior, PriorError, anchors_from_semantics, estimate_prior_cpe, prior_bias,
                            sample_classes, uniform_prior)

simplex = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=8).map(lambda v: np.asarray(v) / np.sum(v))


def test_validation():
    with pytest.raises(PriorError):
        ClassPrior([0.5, 0.6])
    with pytest.raises(PriorError):
        ClassPrior([1.2, -0.2])
    p = ClassPrior([0.25, 0.75])
    with pytest.raises(ValueError):
        p.p[0] = 0.5
    assert len(p) == 2 and p[1] == 0.75


def test_prior_bias_examples():
    assert prior_bias([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert prior_bias([0.25] * 4, [0.55, 0.25, 0.12, 0.08]) == pytest.approx(15.0)


@given(simplex, simplex)
def test_prior_bias_is_a_scaled_metric(p, q):
    if len(p) != len(q):
        return
    assert prior_bias(p, q) == pytest.approx(prior_bias(q, p))
    assert 0 <= prior_bias(p, q) <= 200.0 / len(p)


@given(simplex, st.integers(0, 10_000))
def test_sampling_frequencies(p, seed):
    y = sample_classes(p, 4000, np.random.default_rng(seed))
    freq = np.bincount(y, minlength=len(p)) / 4000
    sigma = np.sqrt(p * (1 - p) / 4000)
    assert np.all(np.abs(freq - p) <= 5 * sigma + 1e-12)


def test_zero_mass_class_never_sampled():
    y = sample_classes([0.5, 0.0, 0.5], 10_000, np.random.default_rng(0))
    assert not np.any(y == 1)


def test_cpe_recovers_separated_mixture():
    rng = np.random.default_rng(0)
    centres = np.array([[0, 0], [10, 0], [0, 10]], float)
    y = rng.choice(3, size=3000, p=[0.6, 0.3, 0.1])
    X = centres[y] + rng.standard_normal((3000, 2))
    est = estimate_prior_cpe(X, centres + rng.normal(0, 1, (3, 2)))
    truth = np.bincount(y, minlength=3) / 3000
    np.testing.assert_allclose(est.p, truth, atol=1e-3)


def test_cpe_empty_cluster_keeps_zero():
    X = np.zeros((10, 2))
    est = estimate_prior_cpe(X, np.array([[0.0, 0.0], [50.0, 50.0]]))
    np.testing.assert_array_equal(est.p, [1.0, 0.0])


def test_uniform():
    np.testing.assert_allclose(uniform_prior(4).p, 0.25)
    with pytest.raises(PriorError):
        uniform_prior(0)


def test_semantic_anchors():
    Xu = np.array([[0.0], [1.0], [10.0]])
    a_pred = np.array([[0.0], [0.1], [1.0]])
    Au = np.array([[0.0], [1.0], [5.0]])
    out = anchors_from_semantics(Xu, a_pred, Au)
    np.testing.assert_allclose(out[:, 0], [0.5, 10.0, np.mean([0, 1, 10])])
