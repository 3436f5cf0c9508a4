"""Input-convex energy networks and convex potentials.

Layout (``n_layers = L`` affine maps, kernels stored ``(fan_in, fan_out)``)::

    z1      = softplus(x @ U0 + b0)
    z_{l+1} = softplus(z_l @ W_l + x @ U_l + b_l)      l = 1 .. L-2
    E(x)    = z_{L-1} @ Wout + x @ Uout + bout + alpha/2 |x|^2

The ``W`` kernels are the positivity-flagged tensors. Their concatenation is
the constrained vector, of length ``(L-2) H^2 + H``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .ad import fn


@dataclass(frozen=True)
class ICNNConfig:
    input_dim: int = 1
    hidden_width: int = 32
    n_layers: int = 3
    strong_convexity: float = 0.0

    def __post_init__(self):
        if self.input_dim not in (1, 2):
            raise ValueError("input_dim must be 1 or 2")
        if self.n_layers < 2:
            raise ValueError("n_layers must be >= 2")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")
        if self.strong_convexity < 0:
            raise ValueError("strong_convexity must be >= 0")


def icnn_specs(cfg: ICNNConfig):
    """Ordered ``(name, shape, flagged)`` triples of the network's tensors."""
    H, n = cfg.hidden_width, cfg.input_dim
    specs = [("U0", (n, H), False), ("b0", (H,), False)]
    for layer in range(1, cfg.n_layers - 1):
        specs += [(f"W{layer}", (H, H), True), (f"U{layer}", (n, H), False), (f"b{layer}", (H,), False)]
    specs += [("Wout", (H, 1), True), ("Uout", (n, 1), False), ("bout", (1,), False)]
    return specs


class ParamStore:
    """Named tensors with per-tensor positivity flags.

    ``flatten_flagged``/``unflatten_flagged`` map between the flagged tensors
    and a single vector of length ``d``, in declaration order.
    """

    def __init__(self, specs, arrays=None):
        self.specs = [(name, tuple(shape), bool(flag)) for name, shape, flag in specs]
        self.arrays = {}
        for name, shape, _ in self.specs:
            a = np.zeros(shape) if arrays is None else np.array(arrays[name], dtype=np.float64)
            if a.shape != shape:
                raise ValueError(f"{name}: shape {a.shape} != declared {shape}")
            self.arrays[name] = a
        self._offsets = {}
        off = 0
        for name, shape, flag in self.specs:
            if flag:
                n = int(np.prod(shape))
                self._offsets[name] = (off, off + n)
                off += n
        self.d = off

    @property
    def names(self):
        return [s[0] for s in self.specs]

    @property
    def flagged(self):
        return [s[0] for s in self.specs if s[2]]

    @property
    def free(self):
        return [s[0] for s in self.specs if not s[2]]

    def shape(self, name):
        return next(s[1] for s in self.specs if s[0] == name)

    def copy(self):
        return ParamStore(self.specs, {k: v.copy() for k, v in self.arrays.items()})

    def flatten_flagged(self, arrays=None):
        arrays = self.arrays if arrays is None else arrays
        if not self.flagged:
            return np.zeros(0)
        return np.concatenate([np.ravel(arrays[n]) for n in self.flagged])

    def unflatten_flagged(self, vec):
        """Split a length-``d`` vector (array or tensor) into flagged tensors."""
        if vec.shape != (self.d,):
            raise ValueError(f"expected vector of length {self.d}, got {vec.shape}")
        out = {}
        for name in self.flagged:
            lo, hi = self._offsets[name]
            piece = vec[lo:hi]
            out[name] = piece.reshape(self.shape(name))
        return out

    def flat_offsets(self):
        return dict(self._offsets)

    def param_count(self):
        return int(sum(np.prod(s[1]) for s in self.specs))


def folded_normal_init(cfg: ICNNConfig, rng: np.random.Generator) -> ParamStore:
    """Flagged kernels ``|N(0, 1/fan_in)|``, input skips ``N(0, 1/fan_in)``, zero biases."""
    store = ParamStore(icnn_specs(cfg))
    for name, shape, flag in store.specs:
        if name.startswith("b"):
            continue
        w = rng.standard_normal(shape) / np.sqrt(shape[0])
        store.arrays[name] = np.abs(w) if flag else w
    return store


def softplus_inverse(v):
    return kernels.softplus_inv(v)


def _quadratic(x, alpha):
    if alpha == 0.0:
        return 0.0
    return 0.5 * alpha * fn.sum(fn.square(x), axis=1)


def energy(cfg: ICNNConfig, params, x):
    """Energy of each row of ``x``; ``params`` maps names to arrays or tensors."""
    z = fn.softplus(x @ params["U0"] + params["b0"])
    for layer in range(1, cfg.n_layers - 1):
        z = fn.softplus(z @ params[f"W{layer}"] + x @ params[f"U{layer}"] + params[f"b{layer}"])
    out = z @ params["Wout"] + x @ params["Uout"] + params["bout"]
    e = fn.reshape(out, (np.shape(x)[0],))
    return e + _quadratic(x, cfg.strong_convexity) if cfg.strong_convexity else e


def potential_jet(cfg: ICNNConfig, params, x):
    """Value, input gradient and input Hessian of the 2D potential per point.

    Propagates first and second input derivatives through each layer with
    ``softplus' = sigma`` and ``softplus'' = sigma (1 - sigma)``, so every
    quantity stays a taped function of the parameters. Returns
    ``(f, (g1, g2), (h11, h12, h22))`` with each entry of shape ``(n,)``.
    """
    if cfg.input_dim != 2:
        raise ValueError("potential_jet needs input_dim == 2")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    pairs = ((0, 0), (0, 1), (1, 1))

    def act(a, a_d, a_dd):
        s = fn.logistic(a)
        s1 = s - s * s
        z = fn.softplus(a)
        z_d = [s * ad for ad in a_d]
        z_dd = {}
        for (k, m) in pairs:
            term = s1 * (a_d[k] * a_d[m])
            z_dd[(k, m)] = term if a_dd is None else term + s * a_dd[(k, m)]
        return z, z_d, z_dd

    U0 = params["U0"]
    a = x @ U0 + params["b0"]
    a_d = [fn.reshape(U0[k], (1, -1)) for k in (0, 1)]
    z, z_d, z_dd = act(a, a_d, None)
    for layer in range(1, cfg.n_layers - 1):
        W, U = params[f"W{layer}"], params[f"U{layer}"]
        a = z @ W + x @ U + params[f"b{layer}"]
        a_d = [z_d[k] @ W + fn.reshape(U[k], (1, -1)) for k in (0, 1)]
        a_dd = {km: z_dd[km] @ W for km in pairs}
        z, z_d, z_dd = act(a, a_d, a_dd)
    Wout, Uout = params["Wout"], params["Uout"]
    alpha = cfg.strong_convexity
    f = fn.reshape(z @ Wout + x @ Uout + params["bout"], (n,))
    if alpha:
        f = f + 0.5 * alpha * np.sum(x * x, axis=1)
    g = [fn.reshape(z_d[k] @ Wout, (n,)) + (Uout[k, 0] + alpha * x[:, k]) for k in (0, 1)]
    h = {km: fn.reshape(z_dd[km] @ Wout, (n,)) for km in pairs}
    h11 = h[(0, 0)] + alpha
    h22 = h[(1, 1)] + alpha
    return f, tuple(g), (h11, h[(0, 1)], h22)


def convexity_probe(cfg: ICNNConfig, params, n_pairs: int, rng: np.random.Generator, box=5.0):
    """Largest midpoint-convexity violation ``E(m) - (E(x)+E(y))/2`` over random pairs."""
    lo, hi = (-box, box) if np.isscalar(box) else box
    x = rng.uniform(lo, hi, (n_pairs, cfg.input_dim))
    y = rng.uniform(lo, hi, (n_pairs, cfg.input_dim))
    arrays = {k: np.asarray(v) for k, v in params.items()}
    ex = energy(cfg, arrays, x)
    ey = energy(cfg, arrays, y)
    em = energy(cfg, arrays, 0.5 * (x + y))
    return float(np.max(em - 0.5 * (ex + ey)))
