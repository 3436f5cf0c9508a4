"""Euler–Maruyama simulation of the bias-channel escape SDE.

    dw = -softplus'(w) sigma_obj dW_obj + sigma_jac dW_jac,

started at ``w0`` and absorbed at the first step with ``w >= ws``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .rng import substream

DEFAULT_SIGMA_JAC_GRID = (0.0, 0.002, 0.005, 0.01, 0.015, 0.02, 0.022)


@dataclass(frozen=True)
class SDEConfig:
    w0: float = -16.0
    ws: float = -13.82
    replicates: int = 256
    max_steps: int = 20000
    dt: float = 1.0
    sigma_obj: float = 1.0
    sigma_jac_grid: tuple = DEFAULT_SIGMA_JAC_GRID
    chunk: int = 2000
    # Barrier height of the metastable regime. Documentation only: never simulated.
    barrier_height: float | None = None

    def __post_init__(self):
        if not self.w0 < self.ws:
            raise ValueError("w0 must be below ws (escape is upward)")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.max_steps < 1 or self.chunk < 1:
            raise ValueError("max_steps and chunk must be >= 1")
        if any(s < 0 for s in self.sigma_jac_grid):
            raise ValueError("sigma_jac values must be >= 0")


@dataclass
class EscapeResult:
    sigma_jac: float
    escapes: int
    rate: float
    mean_fpt: float  # nan when nothing escaped
    envelope: float
    fpt: np.ndarray = field(repr=False, default=None)  # -1 for replicates that never escaped


def envelope(cfg: SDEConfig, sigma_jac: float) -> float:
    """Diffusive envelope ``(ws - w0)^2 / sigma_jac^2`` in steps; ``inf`` at zero."""
    gap = cfg.ws - cfg.w0
    if sigma_jac == 0.0:
        return 0.0 if gap == 0.0 else float("inf")
    return float(gap * gap / (sigma_jac * sigma_jac) / cfg.dt)


def simulate_cell(cfg: SDEConfig, sigma_jac: float, seed: int) -> EscapeResult:
    """One sigma cell. Replicate ``r`` draws from its own stream ``(seed, r)``.

    Streams do not depend on ``sigma_jac``, so cells share their noise paths
    (common random numbers) and differ only through the noise scale.
    """
    R = cfg.replicates
    w = np.full(R, float(cfg.w0))
    fpt = np.full(R, -1, dtype=np.int64)
    gens = [substream(seed, "sde", r) for r in range(R)]
    done = 0
    while done < cfg.max_steps:
        n = min(cfg.chunk, cfg.max_steps - done)
        live = np.flatnonzero(fpt < 0)
        if live.size == 0:
            break
        n_obj = np.zeros((n, R))
        n_jac = np.zeros((n, R))
        for r in live:
            z = gens[r].standard_normal((2, n))
            n_obj[:, r] = z[0]
            n_jac[:, r] = z[1]
        kernels.sde_advance(w, fpt, n_obj, n_jac, done, cfg.sigma_obj, sigma_jac, cfg.ws, cfg.dt)
        done += n
    esc = fpt >= 0
    k = int(esc.sum())
    mean = float(np.mean(fpt[esc]) * cfg.dt) if k else float("nan")
    return EscapeResult(float(sigma_jac), k, k / R, mean, envelope(cfg, sigma_jac), fpt)


def simulate(cfg: SDEConfig, seed: int = 0):
    return [simulate_cell(cfg, s, seed) for s in cfg.sigma_jac_grid]


def fpt_slope(results, min_escapes: int = 10):
    """Fitted log-log slope of mean FPT against sigma over well-populated cells."""
    pts = [(r.sigma_jac, r.mean_fpt) for r in results if r.escapes >= min_escapes and r.sigma_jac > 0]
    if len(pts) < 2:
        return None
    s, t = np.log(np.array(pts)).T
    return float(np.polyfit(s, t, 1)[0])
