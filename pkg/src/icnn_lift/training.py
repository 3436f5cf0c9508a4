"""Losses, the training loop, validation checkpoints and test metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import kernels
from .ad import NumericalError, Tape, fn
from .backends import RhoSchedule, make_backend
from .diagnostics import SIGMA_S, TrailingWindow, noise_ratio, sigma_obj_sq
from .hypernet import HyperConfig, hyper_param_count
from .icnn import ICNNConfig, ParamStore, convexity_probe, energy, folded_normal_init, icnn_specs, potential_jet
from .optim import AdamState, adam_step
from .rng import substream
from .targets import Target1D, make_target, tv_distance

LOSSES = ("forward_kl", "cpflow_nll")
LOG_2PI = math.log(2.0 * math.pi)

RECORD_COLUMNS = (
    "iteration", "train_loss", "val_loss", "sigma_jac_sq", "sigma_obj_sq", "rho_ratio",
    "occupancy", "frob_cross_cov",
)
EXTRA_COLUMNS = ("trace_cross_cov", "min_pre_readout", "convexity_violation")
ADMM_COLUMNS = ("primal_residual", "dual_residual", "rho")


# ---------------------------------------------------------------------------
# losses


def forward_kl_loss(cfg: ICNNConfig, net, batch, grid):
    """Batch mean energy plus ``log Z`` by quadrature on ``grid``."""
    B = batch.shape[0]
    E = energy(cfg, net, np.vstack([batch, grid.nodes]))
    E = fn.check_finite(E, "energy")
    return fn.mean(E[:B]) + fn.logsumexp(-E[B:]) + grid.log_cell


def log_partition(cfg: ICNNConfig, net, grid):
    return float(fn.logsumexp(-energy(cfg, net, grid.nodes))) + grid.log_cell


def cpflow_terms(cfg: ICNNConfig, net, batch):
    """Per-point ``(0.5 |grad f|^2, det Hessian)`` as tensors or arrays."""
    _, (g1, g2), (h11, h12, h22) = potential_jet(cfg, net, batch)
    return 0.5 * (g1 * g1 + g2 * g2), h11 * h22 - h12 * h12


def cpflow_nll(cfg: ICNNConfig, net, batch):
    """Mean negative log-likelihood under the gradient map of the potential.

    Returns ``inf`` (a plain float) when any Hessian determinant is not positive.
    """
    quad, det = cpflow_terms(cfg, net, batch)
    d = det.value if hasattr(det, "value") else det
    if not np.all(d > 0):
        return float("inf")
    return fn.mean(quad - fn.log(det)) + LOG_2PI


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    backend: str = "direct_softplus"
    admm_schedule: str = "fixed"
    admm_rho: float | None = None
    target: str = "gumbel"
    target_params: dict = field(default_factory=dict)
    loss: str = "forward_kl"
    iterations: int = 3000
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0
    hidden_width: int | None = None  # 32 in 1D, 64 in 2D
    n_layers: int = 3
    strong_convexity: float | None = None  # 0.05 for the flow, else 0
    n_cond: int = 1
    hyper_point_sizes: tuple = (64, 64)
    hyper_pool_sizes: tuple = (96,)
    train_size: int = 8192
    val_size: int = 1024
    test_size: int = 1024
    val_every: int = 50
    window: int = 64
    history_stride: int = 10
    snapshot_stride: int = 0
    grid_step: float = 0.005
    train_grid_step: float | None = None
    grid_n_2d: int = 200
    init_jitter: float = 0.0
    diag_batches: int = 8
    probe_pairs: int = 1000
    sigma_s: float = SIGMA_S

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.window < 0 or self.history_stride < 0 or self.snapshot_stride < 0:
            raise ValueError("window and strides must be >= 0")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        self.hyper_point_sizes = tuple(int(v) for v in self.hyper_point_sizes)
        self.hyper_pool_sizes = tuple(int(v) for v in self.hyper_pool_sizes)

    def replace(self, **kw):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return RunConfig(**d)

    @property
    def input_dim(self):
        return make_target(self.target, self.target_params).dim

    def icnn_config(self):
        dim = self.input_dim
        width = self.hidden_width or (32 if dim == 1 else 64)
        alpha = self.strong_convexity
        if alpha is None:
            alpha = 0.05 if self.loss == "cpflow_nll" else 0.0
        return ICNNConfig(dim, width, self.n_layers, alpha)


# ---------------------------------------------------------------------------
# run state


@dataclass
class Checkpoint:
    iteration: int
    val_loss: float
    net: dict  # deployable network tensors (flagged ones non-negative)
    params: dict  # optimiser-visible parameters


@dataclass
class Snapshot:
    iteration: int
    params: dict
    constrained: np.ndarray  # ICNN parameters with flagged entries in pre-readout coordinates


@dataclass
class RunResult:
    config: RunConfig
    rows: list
    columns: tuple
    best: Checkpoint
    history: np.ndarray  # (S, d) pre-readout snapshots at history_stride
    history_iters: np.ndarray
    snapshots: list
    metrics: dict
    store: ParamStore
    anchor: np.ndarray | None

    def column(self, name):
        return np.array([r.get(name, np.nan) for r in self.rows], dtype=np.float64)


class Experiment:
    """Everything needed to evaluate or train one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.target = make_target(cfg.target, cfg.target_params)
        self.icfg = cfg.icnn_config()
        self.store = folded_normal_init(self.icfg, substream(cfg.seed, "init"))
        d = self.store.d
        hyper = HyperConfig(self.icfg.input_dim, d, cfg.hyper_point_sizes, cfg.hyper_pool_sizes, cfg.n_cond)
        schedule = None
        if cfg.backend == "admm":
            schedule = RhoSchedule.default(cfg.admm_schedule)
            if cfg.admm_rho is not None:
                schedule.rho0 = float(cfg.admm_rho)
        self.backend = make_backend(cfg.backend, d, self.icfg.input_dim, hyper, schedule)

        data = substream(cfg.seed, "data")
        self.train_x = self._as2d(self.target.sample(cfg.train_size, data))
        self.val_x = self._as2d(self.target.sample(cfg.val_size, data))
        self.test_x = self._as2d(self.target.sample(cfg.test_size, data))
        self.anchor = self.val_x[:1] if self.backend.has_body else None

        if cfg.loss == "forward_kl":
            if isinstance(self.target, Target1D):
                self.grid = self.target.grid(cfg.grid_step)
                self.train_grid = self.target.grid(cfg.train_grid_step or cfg.grid_step)
            else:
                self.grid = self.target.grid(cfg.grid_n_2d)
                self.train_grid = self.grid
        else:
            self.grid = self.train_grid = None
        self.probe_box = self._probe_box()

    def _as2d(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x[:, None] if x.ndim == 1 else x

    def _probe_box(self):
        if isinstance(self.target, Target1D):
            return tuple(self.target.support)
        lo = float(np.min(self.train_x)) - 1.0
        hi = float(np.max(self.train_x)) + 1.0
        return (lo, hi)

    # parameters ------------------------------------------------------------
    def initial_params(self):
        jitter = None
        if self.cfg.init_jitter:
            jitter = self.cfg.init_jitter * substream(self.cfg.seed, "jitter").standard_normal(self.store.d)
        v = self.store.flatten_flagged()
        P = {k: self.store.arrays[k].copy() for k in self.store.free}
        P.update(self.backend.init_params(v, substream(self.cfg.seed, "hyper"), jitter))
        return P

    def net_from(self, P, theta):
        net = {k: P[k] for k in self.store.free}
        net.update(self.store.unflatten_flagged(theta))
        return net

    def deployable_net(self, P):
        theta = self.backend.deployable(P, self.anchor)
        return self.net_from({k: np.asarray(P[k]) for k in self.store.free}, theta)

    def constrained_vector(self, P):
        """ICNN parameters with flagged entries as deterministic pre-readout values."""
        t = self.backend.effective_pre_readout(P, self.anchor)
        parts = []
        off = self.store.flat_offsets()
        for name, shape, flag in self.store.specs:
            if flag:
                lo, hi = off[name]
                parts.append(t[lo:hi])
            else:
                parts.append(np.ravel(P[name]))
        return np.concatenate(parts)

    def net_from_constrained(self, vec):
        """Inverse of :meth:`constrained_vector` for softplus-readout backends."""
        net, i = {}, 0
        for name, shape, flag in self.store.specs:
            n = int(np.prod(shape))
            piece = vec[i : i + n].reshape(shape)
            net[name] = kernels.softplus(piece) if flag else piece
            i += n
        return net

    # losses -------------------------------------------------------------------
    def loss(self, net, batch, grid=None):
        if self.cfg.loss == "forward_kl":
            return forward_kl_loss(self.icfg, net, batch, grid or self.train_grid)
        return cpflow_nll(self.icfg, net, batch)

    def eval_loss(self, net, x):
        if self.cfg.loss == "forward_kl":
            return float(forward_kl_loss(self.icfg, net, x, self.grid))
        return float(cpflow_nll(self.icfg, net, x))

    def tv(self, net):
        if self.cfg.loss != "forward_kl" or self.grid is None:
            return None
        E = energy(self.icfg, net, self.grid.nodes)
        lp_t = self.target.log_density(self.grid.nodes[:, 0] if self.icfg.input_dim == 1 else self.grid.nodes)
        return tv_distance(-np.asarray(E), lp_t, self.grid)

    def theta_grads(self, P, batch, X_cond):
        """Gradient of the loss wrt the read-out kernel vector ``theta``."""
        tape = Tape()
        V = {k: tape.var(v) for k, v in P.items()}
        th = self.backend.readout(self.backend.pre_readout(V, X_cond))
        if self.backend.softplus_readout:
            th_leaf = tape.var(np.asarray(th.value))  # cut: differentiate wrt theta itself
        else:
            th_leaf = th
        L = self.loss(self.net_from(V, th_leaf), batch)
        if not hasattr(L, "id"):
            return None
        return tape.backward(L, [th_leaf])[0]


# ---------------------------------------------------------------------------
# training


def train(cfg: RunConfig, *, snapshot_writer=None, progress=None) -> RunResult:
    """Train one backend on one target; see :class:`RunConfig` for the knobs."""
    ex = Experiment(cfg)
    be = ex.backend
    P = ex.initial_params()
    names = list(P)
    adam = AdamState(lr=cfg.lr)
    window = TrailingWindow(cfg.window, ex.store.d) if cfg.window else None  # 0 disables the estimator
    thr = math.log(cfg.sigma_s / (1.0 - cfg.sigma_s))
    batch_rng = substream(cfg.seed, "batch")
    cond_rng = substream(cfg.seed, "cond")
    diag_rng = substream(cfg.seed, "diag")
    probe_rng = substream(cfg.seed, "probe")
    N = ex.train_x.shape[0]

    columns = RECORD_COLUMNS + EXTRA_COLUMNS + (ADMM_COLUMNS if cfg.backend == "admm" else ())
    rows = []
    history, history_iters, snapshots = [], [], []

    def validate(it, row):
        net = ex.deployable_net(P)
        v = ex.eval_loss(net, ex.val_x)
        row["val_loss"] = v
        row["convexity_violation"] = convexity_probe(ex.icfg, net, cfg.probe_pairs, probe_rng, ex.probe_box)
        return v, net

    def snapshot(it):
        snap = Snapshot(it, {k: np.array(v, copy=True) for k, v in P.items()}, ex.constrained_vector(P))
        snapshots.append(snap)
        if snapshot_writer is not None:
            snapshot_writer(snap, ex)

    row0 = {"iteration": 0}
    v0, net0 = validate(0, row0)
    rows.append(row0)
    best = Checkpoint(0, v0, {k: np.array(a, copy=True) for k, a in net0.items()},
                      {k: np.array(a, copy=True) for k, a in P.items()})
    if cfg.snapshot_stride:
        snapshot(0)

    for it in range(1, cfg.iterations + 1):
        batch = ex.train_x[batch_rng.integers(0, N, cfg.batch_size)]
        X_cond = ex.train_x[cond_rng.integers(0, N, cfg.n_cond)] if be.has_body else None

        tape = Tape()
        V = {k: tape.var(P[k]) for k in names}
        tt = be.pre_readout(V, X_cond)
        th = be.readout(tt)
        try:
            L = ex.loss(ex.net_from(V, th), batch)
            if not hasattr(L, "id") or not np.isfinite(L.value):
                raise NumericalError(f"non-finite training loss at iteration {it}")
        except NumericalError as err:
            err.checkpoint = best
            err.iteration = it
            raise
        grads = tape.backward(L, [V[k] for k in names] + [tt])
        g_tt = grads[-1]
        G = be.augment_grads(P, dict(zip(names, grads[:-1])))
        tt_val = np.array(tt.value, copy=True)
        emis = be.emission(P, X_cond) if be.has_body else np.zeros(ex.store.d)

        adam_step(adam, P, G, names)
        logs = be.after_step(P, it)

        cc = None
        if window is not None:
            window.record(emis, g_tt)
            cc = window.cross_cov()
        row = {
            "iteration": it,
            "train_loss": float(L.value),
            "occupancy": float(np.mean(tt_val < thr)),
            "min_pre_readout": float(np.min(tt_val)),
        }
        if cc is not None:
            row["frob_cross_cov"] = cc[1]
            row["trace_cross_cov"] = cc[2]
            row["sigma_jac_sq"] = cc[2]
        row.update(logs)
        if cfg.history_stride and (it - 1) % cfg.history_stride == 0:
            history.append(tt_val)
            history_iters.append(it)

        if it % cfg.val_every == 0 or it == cfg.iterations:
            v, net = validate(it, row)
            gs = []
            for _ in range(cfg.diag_batches):
                b = ex.train_x[diag_rng.integers(0, N, cfg.batch_size)]
                g = ex.theta_grads(P, b, ex.anchor)
                if g is not None:
                    gs.append(g)
            if len(gs) >= 2:
                so = sigma_obj_sq(gs)
                row["sigma_obj_sq"] = so
                if cc is not None:
                    row["rho_ratio"] = noise_ratio(cc[2], so, cfg.sigma_s)
            if np.isfinite(v) and v < best.val_loss:
                best = Checkpoint(it, v, {k: np.array(a, copy=True) for k, a in net.items()},
                                  {k: np.array(a, copy=True) for k, a in P.items()})
            if progress is not None:
                progress(it, row)
        rows.append(row)
        if cfg.snapshot_stride and (it % cfg.snapshot_stride == 0 or it == cfg.iterations):
            snapshot(it)

    metrics = {"best_iteration": best.iteration, "best_val_loss": best.val_loss}
    if cfg.loss == "forward_kl":
        metrics["tv"] = ex.tv(best.net)
        metrics["test_loss"] = ex.eval_loss(best.net, ex.test_x)
    else:
        metrics["test_nll"] = ex.eval_loss(best.net, ex.test_x)
    hist = np.array(history) if history else np.zeros((0, ex.store.d))
    return RunResult(cfg, rows, columns, best, hist, np.array(history_iters, dtype=np.int64),
                     snapshots, metrics, ex.store, ex.anchor)


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def write_record_csv(result: RunResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(result.columns)
        for r in result.rows:
            w.writerow([format_value(r.get(c)) for c in result.columns])


def param_count(cfg: RunConfig) -> dict:
    """Parameter counts: deployed ICNN and everything the optimiser trains."""
    icfg = cfg.icnn_config()
    store = ParamStore(icnn_specs(icfg))
    icnn_total = store.param_count()
    free = icnn_total - store.d
    if cfg.backend in ("lift", "body_no_bias"):
        h = hyper_param_count(HyperConfig(icfg.input_dim, store.d, cfg.hyper_point_sizes, cfg.hyper_pool_sizes))
        trained = free + h + (store.d if cfg.backend == "lift" else 0)
    elif cfg.backend == "direct_with_bias":
        trained = icnn_total + store.d
    else:
        trained = icnn_total
    return {"icnn": icnn_total, "d": store.d, "trained": trained}
