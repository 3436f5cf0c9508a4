"""Log-concave 1D targets, 2D point-cloud targets, quadrature grids, TV."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

TARGETS_1D = ("gumbel", "laplace", "gamma", "beta")
TARGETS_2D = ("gamma_mode", "eight_gaussians", "two_spirals")

_DEFAULT_PARAMS = {
    "gumbel": {"loc": 0.0, "scale": 1.0},
    "laplace": {"loc": 0.0, "scale": 1.0},
    "gamma": {"shape": 3.0, "scale": 1.0},
    "beta": {"a": 2.0, "b": 5.0},
    "gamma_mode": {"shape": 3.0, "scale": 1.0},
}

_DEFAULT_SUPPORT = {
    "gumbel": (-6.0, 12.0),
    "laplace": (-10.0, 10.0),
    "gamma": (1e-6, 25.0),
    "beta": (1e-6, 1.0 - 1e-6),
    "gamma_mode": (1e-6, 16.0),
}


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform tensor-product grid. ``nodes`` has shape ``(n, dim)``."""

    nodes: np.ndarray
    step: float
    dim: int

    @property
    def cell(self) -> float:
        """Volume element: ``step`` in 1D, ``step**2`` in 2D."""
        return self.step**self.dim

    @property
    def log_cell(self) -> float:
        return self.dim * float(np.log(self.step))

    def __len__(self):
        return self.nodes.shape[0]


def uniform_grid(lo: float, hi: float, *, step: float | None = None, n: int | None = None, dim: int = 1):
    if (step is None) == (n is None):
        raise ValueError("give exactly one of step or n")
    if step is not None:
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    else:
        step = (hi - lo) / (n - 1)
    axis = lo + step * np.arange(n)
    if dim == 1:
        nodes = axis[:, None]
    else:
        a, b = np.meshgrid(axis, axis, indexing="ij")
        nodes = np.stack([a.ravel(), b.ravel()], axis=1)
    return QuadratureGrid(nodes=nodes, step=float(step), dim=dim)


@dataclass(frozen=True)
class Target1D:
    kind: str
    params: dict = field(default_factory=dict)
    support: tuple = None

    def __post_init__(self):
        if self.kind not in TARGETS_1D:
            raise ValueError(f"unknown 1D target {self.kind!r}; expected one of {TARGETS_1D}")
        p = dict(_DEFAULT_PARAMS[self.kind])
        unknown = set(self.params) - set(p)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        p.update({k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "params", p)
        if self.support is None:
            object.__setattr__(self, "support", _DEFAULT_SUPPORT[self.kind])

    dim = 1

    def log_density(self, x):
        x = np.asarray(x, dtype=np.float64)
        p = self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "gumbel":
                z = (x - p["loc"]) / p["scale"]
                return -z - np.exp(-z) - np.log(p["scale"])
            if self.kind == "laplace":
                return -np.abs(x - p["loc"]) / p["scale"] - np.log(2.0 * p["scale"])
            if self.kind == "gamma":
                k, th = p["shape"], p["scale"]
                out = (k - 1.0) * np.log(x) - x / th - gammaln(k) - k * np.log(th)
                return np.where(x > 0, out, -np.inf)
            a, b = p["a"], p["b"]
            out = (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)
            return np.where((x > 0) & (x < 1), out, -np.inf)

    def sample(self, n: int, rng: np.random.Generator):
        if n < 1:
            raise ValueError("n must be >= 1")
        p = self.params
        if self.kind == "gumbel":
            u = rng.random(n)
            return p["loc"] - p["scale"] * np.log(-np.log(u))
        if self.kind == "laplace":
            u = rng.random(n) - 0.5
            return p["loc"] - p["scale"] * np.sign(u) * np.log1p(-2.0 * np.abs(u))
        if self.kind == "gamma":
            return rng.gamma(p["shape"], p["scale"], n)
        return rng.beta(p["a"], p["b"], n)

    def grid(self, step: float = 0.005) -> QuadratureGrid:
        lo, hi = self.support
        return uniform_grid(lo, hi, step=step)


def _eight_centers(scale=4.0):
    s = 1.0 / np.sqrt(2.0)
    c = np.array([(1, 0), (-1, 0), (0, 1), (0, -1), (s, s), (s, -s), (-s, s), (-s, -s)], dtype=np.float64)
    return scale * c


@dataclass(frozen=True)
class Target2D:
    kind: str
    params: dict = field(default_factory=dict)

    dim = 2

    def __post_init__(self):
        if self.kind not in TARGETS_2D:
            raise ValueError(f"unknown 2D target {self.kind!r}; expected one of {TARGETS_2D}")
        p = dict(_DEFAULT_PARAMS.get(self.kind, {}))
        unknown = set(self.params) - set(p)
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        p.update({k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "params", p)

    @property
    def centers(self):
        """Cluster centres of the 8-Gaussians target in output coordinates."""
        return _eight_centers() / 1.414

    def sample(self, n: int, rng: np.random.Generator):
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "gamma_mode":
            return rng.gamma(self.params["shape"], self.params["scale"], (n, 2))
        if self.kind == "eight_gaussians":
            idx = rng.integers(0, 8, n)
            pts = rng.standard_normal((n, 2)) * 0.5 + _eight_centers()[idx]
            return pts / 1.414
        half = n // 2
        m = np.sqrt(rng.random((n, 1))) * 540.0 * (2.0 * np.pi) / 360.0
        dx = -np.cos(m) * m + rng.random((n, 1)) * 0.5
        dy = np.sin(m) * m + rng.random((n, 1)) * 0.5
        sign = np.where(np.arange(n) < half, 1.0, -1.0)[:, None]
        x = np.hstack([dx, dy]) * sign / 3.0
        x += rng.standard_normal((n, 2)) * 0.1
        return x

    def log_density(self, x):
        """Analytic log-density; only the gamma-mode target has one."""
        if self.kind != "gamma_mode":
            raise NotImplementedError(f"{self.kind} is a sample-only target")
        x = np.asarray(x, dtype=np.float64)
        k, th = self.params["shape"], self.params["scale"]
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = (k - 1.0) * np.log(x) - x / th - gammaln(k) - k * np.log(th)
            lp = np.where(x > 0, lp, -np.inf)
        return lp.sum(axis=-1)

    def grid(self, n: int = 200) -> QuadratureGrid:
        if self.kind != "gamma_mode":
            raise NotImplementedError(f"{self.kind} has no quadrature grid")
        lo, hi = _DEFAULT_SUPPORT["gamma_mode"]
        return uniform_grid(lo, hi, n=n, dim=2)


def make_target(kind: str, params: dict | None = None):
    params = params or {}
    if kind in TARGETS_1D:
        return Target1D(kind, params)
    if kind in TARGETS_2D:
        return Target2D(kind, params)
    raise ValueError(f"unknown target {kind!r}; expected one of {TARGETS_1D + TARGETS_2D}")


def normalize_on_grid(log_p, grid: QuadratureGrid):
    """Density values normalized to unit mass on ``grid``, or None if degenerate."""
    log_p = np.asarray(log_p, dtype=np.float64).ravel()
    if np.any(np.isnan(log_p)) or np.any(log_p == np.inf):
        return None
    m = np.max(log_p)
    if not np.isfinite(m):
        return None
    w = np.exp(log_p - m)
    mass = w.sum() * grid.cell
    if not np.isfinite(mass) or mass <= 0:
        return None
    return w / mass


def tv_distance(model_log_p, target_log_p, grid: QuadratureGrid) -> float:
    """Half the L1 distance between two unnormalized log-densities on a grid.

    A degenerate density (all ``-inf``, any ``nan`` or ``+inf``) gives 1.
    """
    p = normalize_on_grid(model_log_p, grid)
    q = normalize_on_grid(target_log_p, grid)
    if p is None or q is None:
        return 1.0
    return float(min(1.0, 0.5 * np.abs(p - q).sum() * grid.cell))
