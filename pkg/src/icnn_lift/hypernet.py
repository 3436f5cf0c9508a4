"""DeepSets emission ``h(X) = h2(mean_i h1(x_i))`` for body-bearing backends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ad import fn


@dataclass(frozen=True)
class HyperConfig:
    input_dim: int
    emission_dim: int
    point_sizes: tuple = (64, 64)  # h1 widths; the last is the code size
    pool_sizes: tuple = (96,)  # h2 hidden widths before the linear emission
    n_cond: int = 1

    def __post_init__(self):
        if self.n_cond < 1:
            raise ValueError("n_cond must be >= 1")
        if self.emission_dim < 1:
            raise ValueError("emission_dim must be >= 1")
        if not self.point_sizes:
            raise ValueError("point_sizes must be non-empty")


def hyper_specs(cfg: HyperConfig):
    specs = []
    fan = cfg.input_dim
    for i, w in enumerate(cfg.point_sizes):
        specs += [(f"h1_W{i}", (fan, w)), (f"h1_b{i}", (w,))]
        fan = w
    for i, w in enumerate(cfg.pool_sizes):
        specs += [(f"h2_W{i}", (fan, w)), (f"h2_b{i}", (w,))]
        fan = w
    specs.append(("h2_Wout", (fan, cfg.emission_dim)))
    return specs


def init_hyper(cfg: HyperConfig, rng: np.random.Generator, final_scale: float = 0.0):
    """Fan-in normal body; emission layer ``final_scale / sqrt(fan_in)`` normal (0 = zero-init)."""
    params = {}
    for name, shape in hyper_specs(cfg):
        if "_b" in name:
            params[name] = np.zeros(shape)
        elif name == "h2_Wout":
            params[name] = final_scale * rng.standard_normal(shape) / np.sqrt(shape[0]) if final_scale else np.zeros(shape)
        else:
            params[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
    return params


def hyper_param_count(cfg: HyperConfig) -> int:
    return int(sum(np.prod(s) for _, s in hyper_specs(cfg)))


def canonical_order(X):
    """Rows of ``X`` (..., n, dim) sorted lexicographically along the point axis.

    Float sums and BLAS row kernels depend on row order, so mean pooling alone
    is only permutation invariant up to rounding. Sorting first makes any
    permutation of a batch produce bit-identical emissions.
    """
    X = np.asarray(X, dtype=np.float64)
    keys = np.moveaxis(X, -1, 0)[::-1]
    idx = np.lexsort(keys, axis=-1)
    return np.take_along_axis(X, idx[..., None], axis=-2)


def emit(cfg: HyperConfig, params, X):
    """Emission vector of length ``emission_dim`` for conditioning points ``X`` (n, input_dim)."""
    if np.shape(X)[0] < 1:
        raise ValueError("conditioning batch must be non-empty")
    c = canonical_order(X)
    for i in range(len(cfg.point_sizes)):
        c = fn.tanh(c @ params[f"h1_W{i}"] + params[f"h1_b{i}"])
    c = fn.mean(c, axis=0, keepdims=True)
    for i in range(len(cfg.pool_sizes)):
        c = fn.tanh(c @ params[f"h2_W{i}"] + params[f"h2_b{i}"])
    out = c @ params["h2_Wout"]
    return fn.reshape(out, (cfg.emission_dim,))


def emit_many(cfg: HyperConfig, params, Xs):
    """Plain-numpy emissions for a stack of conditioning batches ``(reps, n, input_dim)``."""
    c = canonical_order(Xs)
    for i in range(len(cfg.point_sizes)):
        c = np.tanh(c @ params[f"h1_W{i}"] + params[f"h1_b{i}"])
    c = c.mean(axis=1)
    for i in range(len(cfg.pool_sizes)):
        c = np.tanh(c @ params[f"h2_W{i}"] + params[f"h2_b{i}"])
    return c @ params["h2_Wout"]


def emission_variance(cfg: HyperConfig, params, sampler, n: int, reps: int, rng, chunk: int = 2048):
    """Per-coordinate variance of the emission over ``reps`` fresh batches of size ``n``."""
    if reps < 2:
        raise ValueError("reps must be >= 2")
    outs = []
    left = reps
    while left > 0:
        m = min(chunk, left)
        X = np.asarray(sampler(m * n, rng), dtype=np.float64).reshape(m, n, cfg.input_dim)
        outs.append(emit_many(cfg, params, X))
        left -= m
    E = np.concatenate(outs, axis=0)
    return E.var(axis=0, ddof=1)
