import numpy as np
import pytest

from icnn_lift.ad import Tape
from icnn_lift.hypernet import HyperConfig, canonical_order, emission_variance, emit, emit_many, hyper_param_count, init_hyper


def _random_body(seed=0, d=7, dim=2):
    cfg = HyperConfig(dim, d)
    return cfg, init_hyper(cfg, np.random.default_rng(seed), final_scale=1.0)


def test_permutation_invariance_bitwise():
    cfg, P = _random_body()
    X = np.random.default_rng(1).standard_normal((9, 2))
    ref_np = emit_many(cfg, P, X[None])[0]
    ref_tape = np.asarray(emit(cfg, P, X))
    rng = np.random.default_rng(2)
    for _ in range(20):
        Xp = X[rng.permutation(9)]
        assert np.array_equal(emit_many(cfg, P, Xp[None])[0], ref_np)
        assert np.array_equal(np.asarray(emit(cfg, P, Xp)), ref_tape)


def test_canonical_order_handles_ties_and_stacks():
    X = np.array([[[1.0, 2.0], [1.0, -1.0], [0.0, 5.0]], [[3.0, 0.0], [3.0, 0.0], [-2.0, 1.0]]])
    out = canonical_order(X)
    np.testing.assert_array_equal(out[0], [[0.0, 5.0], [1.0, -1.0], [1.0, 2.0]])
    np.testing.assert_array_equal(out[1], [[-2.0, 1.0], [3.0, 0.0], [3.0, 0.0]])


def test_single_point_and_duplicates():
    cfg, P = _random_body(5)
    x = np.random.default_rng(6).standard_normal((1, 2))
    c = np.tanh(np.tanh(x @ P["h1_W0"] + P["h1_b0"]) @ P["h1_W1"] + P["h1_b1"])
    manual = np.tanh(c @ P["h2_W0"] + P["h2_b0"]) @ P["h2_Wout"]
    np.testing.assert_array_equal(np.asarray(emit(cfg, P, x)), manual[0])
    for n in (2, 4, 8):
        np.testing.assert_allclose(np.asarray(emit(cfg, P, np.repeat(x, n, 0))), manual[0], rtol=1e-15, atol=1e-15)


def test_emit_taped_matches_numpy_and_differentiates():
    cfg, P = _random_body(7)
    X = np.random.default_rng(8).standard_normal((3, 2))
    t = Tape()
    V = {k: t.var(v) for k, v in P.items()}
    e = emit(cfg, V, X)
    np.testing.assert_allclose(e.value, emit_many(cfg, P, X[None])[0], rtol=1e-14)
    g = t.backward(e @ np.ones(cfg.emission_dim), [V["h2_Wout"]])[0]
    assert g.shape == P["h2_Wout"].shape


def test_empty_batch_rejected_and_config_checks():
    cfg, P = _random_body()
    with pytest.raises(ValueError):
        emit(cfg, P, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        HyperConfig(1, 4, n_cond=0)
    assert hyper_param_count(HyperConfig(1, 10)) == (1 * 64 + 64) + (64 * 64 + 64) + (64 * 96 + 96) + 96 * 10


def test_variance_zero_body():
    cfg = HyperConfig(1, 5)
    P = init_hyper(cfg, np.random.default_rng(0), final_scale=0.0)
    v = emission_variance(cfg, P, lambda m, r: r.standard_normal(m), 4, 100, np.random.default_rng(1))
    assert np.all(v == 0.0)


def test_variance_of_mean_is_one_over_n():
    # a linear body: mean of the raw points, read out directly
    rng = np.random.default_rng(2)
    for n in (1, 4, 16):
        X = rng.standard_normal((10_000, n))
        v = X.mean(axis=1).var(ddof=1)
        assert abs(v * n - 1.0) < 0.1


def test_variance_shrinks_with_conditioning_size():
    cfg, P = _random_body(9, d=12, dim=1)
    sampler = lambda m, r: r.standard_normal(m)
    v1 = emission_variance(cfg, P, sampler, 1, 4000, np.random.default_rng(3))
    v64 = emission_variance(cfg, P, sampler, 64, 4000, np.random.default_rng(4))
    assert v1.sum() / v64.sum() >= 10
    with pytest.raises(ValueError):
        emission_variance(cfg, P, sampler, 1, 1, np.random.default_rng(0))
