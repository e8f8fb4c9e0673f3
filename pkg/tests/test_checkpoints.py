import numpy as np
import pytest

from ivaegan import checkpoints as ckpt
from ivaegan.container import ContainerError, write_container

PROV = {"fingerprint": "abc123", "seed": 7}


def _same(p, q):
    return all(np.array_equal(a, b) for a, b in zip(p.arrays().values(), q.arrays().values())) and p.slope == q.slope


def test_roundtrips(tmp_path, tiny_models):
    ver, reg, gen, critics = tiny_models
    ckpt.save_ver(ver, tmp_path / "v", PROV)
    ckpt.save_regressor(reg, tmp_path / "r", PROV)
    ckpt.save_generator(gen, critics, tmp_path / "g", PROV)
    v, meta = ckpt.load_ver(tmp_path / "v")
    assert v.frozen and _same(v.E_pre, ver.E_pre) and _same(v.F_pre, ver.F_pre)
    assert meta["fingerprint"] == "abc123" and meta["seed"] == 7
    assert v.loss_trace == ver.loss_trace
    r, _ = ckpt.load_regressor(tmp_path / "r")
    assert r.frozen and r.use_ver == reg.use_ver and _same(r.R, reg.R) and _same(r.critic.D_r, reg.critic.D_r)
    g, c, _ = ckpt.load_generator(tmp_path / "g")
    assert _same(g.E, gen.E) and _same(g.G, gen.G)
    for name in ("D_s", "D_u", "D_u2"):
        assert _same(getattr(c, name), getattr(critics, name))


def test_missing_checkpoint_is_dependency_error(tmp_path):
    with pytest.raises(ckpt.DependencyError):
        ckpt.load_ver(tmp_path / "absent")


def test_wrong_kind_and_missing_matrix(tmp_path, tiny_models):
    ckpt.save_ver(tiny_models[0], tmp_path / "v", PROV)
    with pytest.raises(ContainerError):
        ckpt.load_regressor(tmp_path / "v")
    write_container(tmp_path / "bad", "ver", {"E_pre.W1": np.zeros((2, 2))}, {"slopes": {"E_pre": 0.2, "F_pre": 0.2}})
    with pytest.raises(ContainerError, match="lacks matrix"):
        ckpt.load_ver(tmp_path / "bad")
