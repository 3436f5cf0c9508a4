"""Multi-run experiments: ablation, paired sweeps, capacity, landscapes."""

from __future__ import annotations

import math

import numpy as np

from .diagnostics import SHOULDER_THRESHOLD, pooled_escape, shoulder_escape_stats
from .landscape import build_plane, evaluate_grid, project_trajectory
from .training import Experiment, RunConfig, param_count, train

ABLATION_ARCHS = ("direct_softplus", "direct_with_bias", "body_no_bias", "lift")


def shoulder_reading(result, threshold=SHOULDER_THRESHOLD):
    """Mean Frobenius cross-covariance over shoulder-occupied iterations.

    Iterations count as occupied when the smallest pre-readout entry is below
    ``threshold``. With no occupied iteration the mean runs over all
    iterations. Returns ``(reading, n_occupied, all_zero)``.
    """
    frob = result.column("frob_cross_cov")
    mins = result.column("min_pre_readout")
    ok = np.isfinite(frob)
    occ = ok & (mins < threshold)
    sel = occ if occ.any() else ok
    reading = float(frob[sel].mean()) if sel.any() else 0.0
    return reading, int(occ.sum()), bool(np.all(frob[ok] == 0.0))


def run_ablation(base: RunConfig, seeds, archs=ABLATION_ARCHS, include_pgd=True, on_result=None, trainer=train):
    archs = tuple(archs) + (("pgd",) if include_pgd and "pgd" not in archs else ())
    rows = []
    for seed in seeds:
        for arch in archs:
            res = trainer(base.replace(backend=arch, seed=seed))
            reading, n_occ, zero = shoulder_reading(res)
            rows.append({
                "architecture": arch,
                "seed": seed,
                "frob_shoulder_mean": reading,
                "shoulder_iterations": n_occ,
                "all_iterations_zero": int(zero),
                "tv": res.metrics.get("tv"),
            })
            if on_result is not None:
                on_result(res)
    return rows


def run_sweep(bases: dict, methods, seeds, on_result=None, trainer=train):
    """Paired runs: every seed runs every method on every target.

    ``bases`` maps a target name to its base :class:`RunConfig`. Returns
    ``(run_rows, median_rows, escape)`` where ``escape`` holds the pooled
    leave-rate and dwell fraction per ``(target, method)``. ``trainer`` lets a
    caller substitute a caching wrapper around :func:`train`.
    """
    rows, stats = [], {}
    for target, base in bases.items():
        metric = "tv" if base.loss == "forward_kl" else "test_nll"
        for seed in seeds:
            for m in methods:
                res = trainer(base.replace(backend=m, seed=seed))
                st = shoulder_escape_stats(res.history)
                stats.setdefault((target, m), []).append(st)
                rows.append({
                    "target": target, "method": m, "seed": seed, "kind": "run",
                    "metric": metric, "value": res.metrics[metric],
                    "leave_rate": st.leave_rate, "dwell_fraction": st.dwell_fraction,
                })
                if on_result is not None:
                    on_result(res)
    med = []
    for (target, m) in dict.fromkeys((r["target"], r["method"]) for r in rows):
        vals = [r["value"] for r in rows if r["target"] == target and r["method"] == m]
        metric = next(r["metric"] for r in rows if r["target"] == target)
        med.append({"target": target, "method": m, "seed": "", "kind": "median", "metric": metric,
                    "value": float(np.median(vals)), "leave_rate": "", "dwell_fraction": ""})
    escape = {k: pooled_escape(v) for k, v in stats.items()}
    return rows, med, escape


def matched_pool_width(lift: RunConfig, budget: int) -> int:
    """Post-pool width making the lift's trained parameter count closest to ``budget``."""
    best, best_gap = 1, math.inf
    lo, hi = 1, 1 << 16
    # parameter count is increasing in the width: binary search then check neighbours
    while lo < hi:
        mid = (lo + hi) // 2
        if param_count(lift.replace(hyper_pool_sizes=lift.hyper_pool_sizes[:-1] + (mid,)))["trained"] < budget:
            lo = mid + 1
        else:
            hi = mid
    for w in (lo - 1, lo):
        if w < 1:
            continue
        n = param_count(lift.replace(hyper_pool_sizes=lift.hyper_pool_sizes[:-1] + (w,)))["trained"]
        if abs(n - budget) < best_gap:
            best, best_gap = w, abs(n - budget)
    return best


def capacity_configs(base: RunConfig, wide_width=512, wide_layers=5):
    # the slack diagnostics are not read here; a 64 x 787k window would dominate the run time
    base = base.replace(window=0, history_stride=0)
    wide = base.replace(backend="direct_softplus", hidden_width=wide_width, n_layers=wide_layers)
    budget = param_count(wide)["trained"]
    lift = base.replace(backend="lift")
    w = matched_pool_width(lift, budget)
    lift = lift.replace(hyper_pool_sizes=lift.hyper_pool_sizes[:-1] + (w,))
    return wide, lift


def run_capacity(base: RunConfig, seeds, wide_width=512, wide_layers=5, on_result=None, trainer=train):
    wide, lift = capacity_configs(base, wide_width, wide_layers)
    counts = {"widened_direct": param_count(wide)["trained"], "lift": param_count(lift)["trained"]}
    rows = []
    for seed in seeds:
        for arm, cfg in (("widened_direct", wide), ("lift", lift)):
            res = trainer(cfg.replace(seed=seed))
            rows.append({"arm": arm, "seed": seed, "kind": "run", "params": counts[arm], "tv": res.metrics["tv"]})
            if on_result is not None:
                on_result(res)
    for arm in ("widened_direct", "lift"):
        rows.append({"arm": arm, "seed": "", "kind": "median", "params": counts[arm],
                     "tv": float(np.median([r["tv"] for r in rows if r["arm"] == arm and r["kind"] == "run"]))})
    return rows, counts


# landscapes -----------------------------------------------------------------


def constrained_blocks(store):
    blocks, i = [], 0
    for _, shape, _ in store.specs:
        n = int(np.prod(shape))
        blocks.append((i, i + n))
        i += n
    return blocks


def lifted_layout(P):
    blocks, i = [], 0
    for name in P:
        n = int(np.size(P[name]))
        blocks.append((i, i + n))
        i += n
    return blocks


def flatten_params(P):
    return np.concatenate([np.ravel(P[k]) for k in P])


def unflatten_params(vec, like):
    out, i = {}, 0
    for k, v in like.items():
        n = int(np.size(v))
        out[k] = vec[i : i + n].reshape(np.shape(v))
        i += n
    return out


def constrained_landscape(anchor_res, other_res, resolution=41, extent=1.5):
    """Slice in ICNN space through the anchor run's best checkpoint.

    Axis 1 points at the other run's best checkpoint; axis 2 is the top PCA
    direction of the anchor run's snapshots. Both runs must use softplus
    readouts so that their pre-readout coordinates are comparable.
    """
    ex_a = Experiment(anchor_res.config)
    ex_o = Experiment(other_res.config)
    anchor = ex_a.constrained_vector(anchor_res.best.params)
    other = ex_o.constrained_vector(other_res.best.params)
    snaps = np.array([s.constrained for s in anchor_res.snapshots]) if anchor_res.snapshots else None
    blocks = constrained_blocks(ex_a.store)
    plane = build_plane("constrained", anchor, other, snaps, blocks)

    def loss(v):
        return ex_a.eval_loss(ex_a.net_from_constrained(v), ex_a.test_x)

    a, b, L, feas = evaluate_grid(plane, loss, resolution, extent)
    traj = {}
    for res in (anchor_res, other_res):
        if res.snapshots:
            S = np.array([s.constrained for s in res.snapshots])
            traj[res.config.backend] = ([s.iteration for s in res.snapshots], project_trajectory(plane, S))
    return plane, (a, b, L, feas), traj


def lifted_landscape(res, resolution=41, extent=1.5):
    """Slice in the lift's own parameter space spanned by its top two trajectory PCs."""
    ex = Experiment(res.config)
    like = res.best.params
    anchor = flatten_params(like)
    snaps = np.array([flatten_params(s.params) for s in res.snapshots])
    plane = build_plane("lifted", anchor, None, snaps, lifted_layout(like))

    def loss(v):
        return ex.eval_loss(ex.deployable_net(unflatten_params(v, like)), ex.test_x)

    a, b, L, feas = evaluate_grid(plane, loss, resolution, extent)
    traj = {res.config.backend: ([s.iteration for s in res.snapshots], project_trajectory(plane, snaps))}
    return plane, (a, b, L, feas), traj


def random_landscape(res, resolution=41, extent=1.5, seed=0):
    """Slice through the best checkpoint along two random filter-normalized directions."""
    ex = Experiment(res.config)
    anchor = ex.constrained_vector(res.best.params)
    plane = build_plane("random", anchor, blocks=constrained_blocks(ex.store), rng=np.random.default_rng(seed))

    def loss(v):
        return ex.eval_loss(ex.net_from_constrained(v), ex.test_x)

    a, b, L, feas = evaluate_grid(plane, loss, resolution, extent)
    traj = {}
    if res.snapshots:
        S = np.array([s.constrained for s in res.snapshots])
        traj[res.config.backend] = ([s.iteration for s in res.snapshots], project_trajectory(plane, S))
    return plane, (a, b, L, feas), traj
