import warnings

import numpy as np
import pytest

from icnn_lift import kernels
from icnn_lift.ad import Tape
from icnn_lift.backends import ADMM, ADMM_SCHEDULES, PGD, RhoSchedule, make_backend, threshold_from_sigma
from icnn_lift.hypernet import HyperConfig, emit_many
from icnn_lift.optim import AdamState, adam_step
from icnn_lift.training import Experiment, RunConfig, train


def _step_grads(ex, P, batch, X_cond):
    tape = Tape()
    V = {k: tape.var(v) for k, v in P.items()}
    tt = ex.backend.pre_readout(V, X_cond)
    L = ex.loss(ex.net_from(V, ex.backend.readout(tt)), batch)
    names = list(P)
    g = tape.backward(L, [V[k] for k in names] + [tt])
    return float(L.value), dict(zip(names, g[:-1])), g[-1]


def test_direct_zero_theta_gives_ln2():
    be = make_backend("direct_softplus", 5, 1)
    w = be.deployable({"theta": np.zeros(5)})
    assert np.all(w == np.log(2.0))


def test_lift_collapses_to_direct_bitwise():
    base = RunConfig(target="gumbel", iterations=0, seed=3, train_size=512, val_size=64, test_size=64)
    exd = Experiment(base.replace(backend="direct_softplus"))
    exl = Experiment(base.replace(backend="lift"))
    Pd, Pl = exd.initial_params(), exl.initial_params()
    assert np.array_equal(Pd["theta"], Pl["slack"])
    batch = exd.train_x[:128]
    Ld, gd, ttd = _step_grads(exd, Pd, batch, None)
    Ll, gl, ttl = _step_grads(exl, Pl, batch, exl.train_x[5:6])
    assert Ld == Ll
    assert np.array_equal(ttd, ttl)
    assert np.array_equal(gd["theta"], gl["slack"])
    for k in exd.store.free:
        assert np.array_equal(gd[k], gl[k])


def test_lift_and_direct_trajectories_match_for_one_step():
    base = RunConfig(target="gumbel", iterations=1, seed=0, train_size=512, val_size=64, test_size=64,
                     snapshot_stride=1, probe_pairs=10, diag_batches=2)
    rd = train(base.replace(backend="direct_softplus"))
    rl = train(base.replace(backend="lift"))
    assert rd.rows[1]["train_loss"] == rl.rows[1]["train_loss"]
    assert np.array_equal(rd.history[0], rl.history[0])


def test_lift_fluctuation_is_emission_difference():
    hyper = HyperConfig(1, 6)
    be = make_backend("lift", 6, 1, hyper)
    rng = np.random.default_rng(0)
    P = be.init_params(np.full(6, 0.5), rng)
    P["h2_Wout"] = rng.standard_normal(P["h2_Wout"].shape)
    X1, X2 = rng.standard_normal((1, 1)), rng.standard_normal((1, 1))
    t1 = np.asarray(be.pre_readout(P, X1))
    t2 = np.asarray(be.pre_readout(P, X2))
    assert not np.array_equal(t1, t2)
    de = emit_many(hyper, P, X1[None])[0] - emit_many(hyper, P, X2[None])[0]
    np.testing.assert_allclose(t1 - t2, de, atol=1e-14)
    assert np.array_equal(be.deployable(P, X1), be.deployable(P, X1))


def test_body_backends_need_conditioning():
    be = make_backend("lift", 4, 1)
    P = be.init_params(np.ones(4), np.random.default_rng(0))
    with pytest.raises(ValueError):
        be.pre_readout(P, None)
    with pytest.raises(ValueError):
        make_backend("softmax", 4, 1)


def test_pgd_projection_and_interior_step():
    be = PGD(1, 1)
    P = {"theta": np.array([0.5])}
    st = AdamState(lr=0.7)
    adam_step(st, P, {"theta": np.array([1.0])}, ["theta"])
    be.after_step(P, 1)
    assert P["theta"][0] == 0.0  # 0.5 - 0.7 projected
    P = {"theta": np.array([0.5])}
    adam_step(AdamState(lr=0.1), P, {"theta": np.array([0.0])}, ["theta"])
    be.after_step(P, 1)
    assert P["theta"][0] == 0.5
    # far from the boundary the projection is inactive: PGD equals plain Adam
    P1, P2 = {"theta": np.array([5.0, 7.0])}, {"theta": np.array([5.0, 7.0])}
    s1, s2 = AdamState(lr=1e-2), AdamState(lr=1e-2)
    for k in range(20):
        g = {"theta": np.array([np.sin(k), np.cos(k)])}
        adam_step(s1, P1, dict(g), ["theta"])
        be.after_step(P1, k)
        adam_step(s2, P2, dict(g), ["theta"])
    assert np.array_equal(P1["theta"], P2["theta"])


def test_admm_prox_penalty_and_readout():
    be = ADMM(1, 1)
    P = be.init_params(np.array([-1.0]), None)
    be.after_step(P, 1)
    assert be.z[0] == 0.0
    be = ADMM(2, 1)
    P = be.init_params(np.array([0.3, 0.4]), None)
    g = be.augment_grads(P, {"theta": np.array([0.1, -0.2])})
    np.testing.assert_array_equal(g["theta"], [0.1, -0.2])
    np.testing.assert_array_equal(be.deployable({"theta": np.array([-0.1, 0.3])}), [0.0, 0.3])


def _admm_toy(kind, iters=500, lr=0.05):
    be = ADMM(1, 1, schedule=RhoSchedule.default(kind))
    P = be.init_params(np.array([0.5]), None)
    st = AdamState(lr=lr)
    zmin = np.inf
    for it in range(1, iters + 1):
        g = be.augment_grads(P, {"theta": P["theta"] - 2.0})
        adam_step(st, P, g, ["theta"])
        logs = be.after_step(P, it)
        zmin = min(zmin, be.z.min())
    return P["theta"][0], be.z[0], logs, zmin


@pytest.mark.parametrize("kind", ADMM_SCHEDULES)
def test_admm_quadratic_toy_converges(kind):
    theta, z, logs, zmin = _admm_toy(kind)
    assert abs(theta - 2.0) < 1e-4 and abs(z - 2.0) < 1e-4
    assert zmin >= 0.0
    _, _, logs, _ = _admm_toy(kind, iters=1000)
    assert logs["primal_residual"] < 1e-6 and logs["dual_residual"] < 1e-6


def test_rho_schedules():
    s = RhoSchedule("residual_balance")
    assert s.update(10.0, 1, 100.0, 1.0) == 20.0
    assert s.update(10.0, 1, 1.0, 100.0) == 5.0
    assert s.update(10.0, 1, 1.0, 1.0) == 10.0
    d = RhoSchedule.default("doubling")
    assert d.rho0 == 1.0 and d.update(1.0, 500, 0, 0) == 2.0 and d.update(1.0, 499, 0, 0) == 1.0
    assert d.update(8e5, 1000, 0, 0) == 1e6
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert RhoSchedule("fixed").update(1e13, 1, 0, 0) == 1e12
    assert any("clamping" in str(x.message) for x in w)
    with pytest.raises(ValueError):
        RhoSchedule("cosine")


def test_threshold_matches_shoulder_width():
    t = threshold_from_sigma(0.05)
    assert t == pytest.approx(-2.9444389791664403, abs=1e-12)
    assert abs(kernels.logistic(t) - 0.05) < 1e-10
