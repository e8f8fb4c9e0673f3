import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ivaegan.data import SyntheticSpec, make_synthetic
from ivaegan.fgen import GeneratorConfig, StagePriors, train_generator
from ivaegan.priors import uniform_prior
from ivaegan.regress import RegressorConfig, train_regressor
from ivaegan.ver import VerConfig, pretrain_ver

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TINY = SyntheticSpec(d_x=6, d_a=4, N_s=4, N_u=3, samples_per_class=40, semantic_map_scale=4.0,
                     noise_std=0.3, unseen_prior=(0.5, 0.3, 0.2), seed=3)


@pytest.fixture(scope="session")
def tiny():
    """Small synthetic split and its density oracle."""
    return make_synthetic(TINY)


@pytest.fixture(scope="session")
def tiny_models(tiny):
    """Briefly trained VER, regressor and generator on the tiny split."""
    ds, _ = tiny
    ver = pretrain_ver(ds.train_view(), VerConfig(epochs=3, hidden=16, seed=1))
    prior = uniform_prior(ds.Au.shape[0])
    reg = train_regressor(ds.train_view(), ver, prior, RegressorConfig(epochs=3, hidden=16, seed=2))
    gen, critics = train_generator(ds.train_view(), ver, reg, StagePriors.same(prior),
                                   GeneratorConfig(epochs=2, hidden=16, seed=3))
    return ver, reg, gen, critics


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
