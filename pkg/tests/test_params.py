import numpy as np
import pytest

from metric_rec import params as params_mod


def test_init_mdr_tensor_sets():
    rng = np.random.default_rng(0)
    ups = params_mod.init_mdr(3, 4, 5, 2, rng)
    assert set(ups.tensors) == {"S", "U", "P", "B1", "B2", "theta"}
    assert ups.tensors["S"].shape == (6, 2)  # padding row included
    us = params_mod.init_mdr(3, 4, 5, 2, rng, variant="us", use_bias=False)
    assert set(us.tensors) == {"S", "U", "B1"}
    ps = params_mod.init_mdr(3, 4, 5, 2, rng, variant="ps")
    assert set(ps.tensors) == {"S", "P", "B2", "theta"}
    with pytest.raises(ValueError):
        params_mod.init_mdr(3, 4, 5, 2, rng, variant="up")


def test_init_mdr_metric_starts_euclidean():
    rng = np.random.default_rng(0)
    p = params_mod.init_mdr(2, 2, 3, 4, rng)
    np.testing.assert_array_equal(p.tensors["B1"], np.ones(4))
    np.testing.assert_array_equal(p.tensors["theta"], np.zeros(4))
    assert np.all(p.tensors["S"][0] == 0.0)


@pytest.mark.parametrize("attention,extra", [
    ("mem_metric", {"S_a", "U_a", "W2", "b2", "B4"}),
    ("mem_dot", {"S_a", "U_a", "W2", "b2"}),
    ("nonmem_metric", {"B4"}),
    ("nonmem_dot", set()),
])
def test_init_mass_tensor_sets(attention, extra):
    rng = np.random.default_rng(1)
    p = params_mod.init_mass(3, 4, 5, 2, 6, rng, variant="us", attention=attention)
    assert set(p.tensors) == {"S", "U", "W1", "b1", "B3", "song_bias"} | extra
    assert p.tensors["W1"].shape == (4, 2)


def test_init_mass_ups_query_width():
    rng = np.random.default_rng(2)
    p = params_mod.init_mass(3, 4, 5, 2, 6, rng, variant="ups")
    assert p.tensors["W1"].shape == (6, 2)
    assert "P" in p.tensors and "P_a" in p.tensors
    with pytest.raises(ValueError):
        params_mod.init_mass(3, 4, 5, 2, 6, rng, attention="softmax")


def test_copy_is_deep():
    rng = np.random.default_rng(3)
    p = params_mod.init_mdr(2, 2, 3, 2, rng)
    q = p.copy()
    q.tensors["S"][1, 0] = 99.0
    assert p.tensors["S"][1, 0] != 99.0


def test_zero_like_and_check_finite():
    rng = np.random.default_rng(4)
    p = params_mod.init_mdr(2, 2, 3, 2, rng)
    z = p.zero_like()
    assert set(z) == set(p.tensors)
    assert all(np.all(v == 0) for v in z.values())
    p.check_finite()
    p.tensors["U"][0, 0] = np.nan
    with pytest.raises(FloatingPointError, match="U"):
        p.check_finite()


def test_zero_padding_rows_on_target():
    rng = np.random.default_rng(5)
    p = params_mod.init_mass(2, 2, 3, 2, 2, rng)
    grads = {k: np.ones_like(v) for k, v in p.tensors.items()}
    p.zero_padding_rows(grads)
    for name in ("S", "S_a", "song_bias"):
        assert np.all(grads[name][0] == 0.0)
    assert np.all(grads["W1"] == 1.0)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    p = params_mod.init_mass(3, 4, 5, 2, 6, rng, variant="ups", attention="mem_dot")
    path = str(tmp_path / "ckpt.json")
    hyper = {"learning_rate": 1e-3, "epochs": 5}
    params_mod.save_checkpoint(p, path, hyper, seed=7)
    back, h, seed = params_mod.load_checkpoint(path)
    assert (back.kind, back.variant, back.attention) == ("mass", "ups", "mem_dot")
    assert back.dim == p.dim and back.max_members == p.max_members
    assert h == hyper and seed == 7
    assert set(back.tensors) == set(p.tensors)
    for name in p.tensors:
        np.testing.assert_array_equal(back.tensors[name], p.tensors[name])


def test_load_checkpoint_rejects_foreign_json(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "something-else"}', encoding="utf-8")
    with pytest.raises(ValueError, match="not a model checkpoint"):
        params_mod.load_checkpoint(str(path))
