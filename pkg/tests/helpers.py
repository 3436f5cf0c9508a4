"""Shared oracles for the test-suite."""

import numpy as np

from icnn_lift.ad import Tape, fn
from icnn_lift.diagnostics import TrailingWindow


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b, floor=1e-4):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / den)) if a.size else 0.0


ACTS = {"softplus": fn.softplus, "tanh": fn.tanh, "logistic": fn.logistic}


def random_net(rng):
    """A random small network ``f(params, x) -> scalar`` plus its parameter arrays.

    Mixes matmul, broadcasting adds, the smooth activations, mean-pooling,
    squares, exp/log and log-sum-exp so every smooth primitive is exercised.
    """
    n_in = int(rng.integers(1, 4))
    widths = [int(rng.integers(2, 6)) for _ in range(3)]
    acts = [list(ACTS)[int(rng.integers(0, 3))] for _ in range(3)]
    batch = int(rng.integers(2, 6))
    params = {}
    fan = n_in
    for i, w in enumerate(widths):
        params[f"W{i}"] = rng.standard_normal((fan, w)) / np.sqrt(fan)
        params[f"b{i}"] = 0.1 * rng.standard_normal(w)
        fan = w
    params["v"] = rng.standard_normal(fan)
    x = rng.standard_normal((batch, n_in))
    head = int(rng.integers(0, 3))

    def f(P):
        h = x
        for i in range(3):
            h = ACTS[acts[i]](h @ P[f"W{i}"] + P[f"b{i}"])
        s = h @ P["v"]
        if head == 0:
            return fn.logsumexp(s) + fn.mean(fn.square(s))
        if head == 1:
            return fn.sum(fn.exp(0.3 * s)) + fn.mean(h, axis=0).sum()
        return fn.log(fn.sum(fn.softplus(s)) + 1.0) - fn.mean(s * s * 0.5)

    return f, params


def grad_dict(f, P):
    tape = Tape()
    V = {k: tape.var(v) for k, v in P.items()}
    out = f(V)
    gs = tape.backward(out, list(V.values()))
    return dict(zip(P, gs))


def ad_fd_max_error(f, P, floor=1e-4):
    g = grad_dict(f, P)
    worst = 0.0
    for k in P:
        def fk(val, k=k):
            Q = dict(P)
            Q[k] = val
            return float(f(Q))

        worst = max(worst, rel_err(g[k], central_diff(fk, P[k]), floor))
    return worst


def decoupled_slope(Ts=(64, 256, 1024, 4096), d=4, reps=20, seed=0):
    """Fitted log-log slope of |Sigma|_F against T for independent streams."""
    rng = np.random.default_rng(seed)
    means = []
    for T in Ts:
        vals = []
        for _ in range(reps):
            w = TrailingWindow(T, d)
            th = rng.standard_normal((T, d))
            g = rng.standard_normal((T, d))
            for a, b in zip(th, g):
                w.record(a, b)
            vals.append(w.cross_cov()[1])
        means.append(np.mean(vals))
    return float(np.polyfit(np.log(Ts), np.log(means), 1)[0])
