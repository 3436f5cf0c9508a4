"""Command-line entry point: ``icnn-lift <verb> --config FILE [--out DIR]``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .ad import NumericalError
from .backends import ADMM_SCHEDULES, BACKENDS
from .config import COMMANDS, ConfigError, load_config, require
from .experiments import ABLATION_ARCHS, constrained_landscape, lifted_landscape, random_landscape, run_ablation, run_capacity, run_sweep
from .sde_sim import simulate
from .snapshots import snapshot_name, write_snapshot
from .targets import make_target
from .training import format_value, train, write_record_csv

log = logging.getLogger("icnn_lift")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([v if isinstance(v, str) else format_value(v) for v in (r.get(c) for c in columns)])


def _check_run(cfg, section, run):
    try:
        make_target(run.target, run.target_params)
    except ValueError as err:
        raise cfg.error(section, "target", str(err)) from None
    if run.backend not in BACKENDS:
        raise cfg.error(section, "backend", f"unknown backend {run.backend!r}; expected one of {', '.join(BACKENDS)}")
    if run.admm_schedule not in ADMM_SCHEDULES:
        raise cfg.error(section, "admm_schedule", f"unknown ADMM schedule {run.admm_schedule!r}")
    return run


def _run_config(cfg, section, args, **kw):
    if args.seed is not None:
        kw.setdefault("seed", args.seed)
    return _check_run(cfg, section, cfg.run_config(section, **kw))


def _seeds(cfg, section, args, default):
    n = args.seeds if args.seeds is not None else cfg.section(section).get("seeds", default)
    start = args.seed if args.seed is not None else cfg.seed
    if n < 1:
        raise cfg.error(section, "seeds", "seed count must be >= 1")
    return list(range(start, start + n))


def _out_dir(cfg, args, command):
    out = Path(args.out or cfg.out or f"results/{command}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _snapshot_writer(directory):
    """ICNN tensors (flagged ones as pre-readout values) plus the backend's own parameters."""

    def write(snap, ex):
        directory.mkdir(parents=True, exist_ok=True)
        arrays, flags, i = {}, {}, 0
        for name, shape, flag in ex.store.specs:
            n = int(np.prod(shape))
            arrays[name] = snap.constrained[i : i + n].reshape(shape)
            flags[name] = flag
            i += n
        for k, v in snap.params.items():
            if k not in ex.store.arrays:
                arrays[f"backend/{k}"] = v
        meta = {"seed": ex.cfg.seed, "iteration": snap.iteration, "backend": ex.cfg.backend,
                "flagged_values": "pre_readout" if ex.backend.softplus_readout else "raw"}
        write_snapshot(directory / snapshot_name(ex.cfg.seed, snap.iteration), arrays, flags, meta)

    return write


def _save_run(res, directory):
    directory.mkdir(parents=True, exist_ok=True)
    write_record_csv(res, directory / f"run_{res.config.seed}.csv")
    with open(directory / f"metrics_{res.config.seed}.json", "w") as fh:
        json.dump({k: (None if v is None else float(v)) for k, v in res.metrics.items()}, fh, indent=2, sort_keys=True)


def _progress(res):
    m = ", ".join(f"{k}={v:.6g}" for k, v in res.metrics.items() if isinstance(v, float))
    log.info("%s seed %d: %s", res.config.backend, res.config.seed, m)


# commands ---------------------------------------------------------------------


def cmd_train(cfg, args):
    require(cfg, "train")
    out = _out_dir(cfg, args, "train")
    seeds = _seeds(cfg, "train", args, 1)
    for seed in seeds:
        run = _run_config(cfg, "train", args, seed=seed)
        writer = _snapshot_writer(out / "snapshots") if run.snapshot_stride else None
        try:
            res = train(run, snapshot_writer=writer)
        except NumericalError as err:
            ck = getattr(err, "checkpoint", None)
            if ck is not None:
                write_snapshot(out / f"checkpoint_{seed}.snap", ck.net, meta={"iteration": ck.iteration})
            raise
        _save_run(res, out)
        _progress(res)


def cmd_ablate(cfg, args):
    require(cfg, "ablate")
    sec = cfg.section("ablate")
    out = _out_dir(cfg, args, "ablate")
    base = _run_config(cfg, "ablate", args)
    archs = sec.get("architectures", ABLATION_ARCHS)
    for a in archs:
        if a not in BACKENDS:
            raise cfg.error("ablate", "architectures", f"unknown architecture {a!r}")

    def keep(res):
        _save_run(res, out / res.config.backend)
        _progress(res)

    rows = run_ablation(base, _seeds(cfg, "ablate", args, 3), archs, sec.get("include_pgd", True), keep)
    cols = ("architecture", "seed", "frob_shoulder_mean", "shoulder_iterations", "all_iterations_zero", "tv")
    write_rows(out / "ablation.csv", cols, rows)


def cmd_sde(cfg, args):
    require(cfg, "sde")
    out = _out_dir(cfg, args, "sde")
    seed = args.seed if args.seed is not None else cfg.seed
    res = simulate(cfg.sde_config(), seed)
    rows = [{"sigma_jac": r.sigma_jac, "escapes": r.escapes, "rate": r.rate, "mean_fpt": r.mean_fpt,
             "envelope": r.envelope} for r in res]
    write_rows(out / "sde.csv", ("sigma_jac", "escapes", "rate", "mean_fpt", "envelope"), rows)
    for r in res:
        log.info("sigma_jac=%g escapes=%d mean_fpt=%g envelope=%g", r.sigma_jac, r.escapes, r.mean_fpt, r.envelope)


def cmd_sweep(cfg, args):
    require(cfg, "sweep")
    sec = cfg.section("sweep")
    out = _out_dir(cfg, args, "sweep")
    base = _run_config(cfg, "sweep", args)
    targets = sec.get("targets", (base.target,))
    methods = sec.get("methods", ("direct_softplus", "lift"))
    for m in methods:
        if m not in BACKENDS:
            raise cfg.error("sweep", "methods", f"unknown method {m!r}")
    bases = {t: _check_run(cfg, "sweep", base.replace(target=t)) for t in targets}

    def keep(res):
        _save_run(res, out / res.config.target / res.config.backend)
        _progress(res)

    rows, med, escape = run_sweep(bases, methods, _seeds(cfg, "sweep", args, 5), keep)
    cols = ("target", "method", "seed", "kind", "metric", "value", "leave_rate", "dwell_fraction")
    write_rows(out / "sweep.csv", cols, rows + med)
    esc_rows = [{"target": t, "method": m, "leave_rate": lr, "dwell_fraction": dw} for (t, m), (lr, dw) in escape.items()]
    write_rows(out / "escape.csv", ("target", "method", "leave_rate", "dwell_fraction"), esc_rows)


def cmd_capacity(cfg, args):
    require(cfg, "capacity")
    sec = cfg.section("capacity")
    out = _out_dir(cfg, args, "capacity")
    base = _run_config(cfg, "capacity", args)

    def keep(res):
        _progress(res)

    rows, counts = run_capacity(base, _seeds(cfg, "capacity", args, 3), sec.get("wide_width", 512),
                                sec.get("wide_layers", 5), keep)
    write_rows(out / "capacity.csv", ("arm", "seed", "kind", "params", "tv"), rows)
    log.info("parameter counts: %s", counts)


def cmd_landscape(cfg, args):
    require(cfg, "landscape")
    sec = cfg.section("landscape")
    out = _out_dir(cfg, args, "landscape")
    base = _run_config(cfg, "landscape", args)
    if not base.snapshot_stride:
        base = base.replace(snapshot_stride=100)
    a_kind = sec.get("anchor_backend", "lift")
    o_kind = sec.get("other_backend", "direct_softplus")
    for k in (a_kind, o_kind):
        if k not in BACKENDS:
            raise cfg.error("landscape", None, f"unknown backend {k!r}")
    res_a = train(base.replace(backend=a_kind))
    res_o = train(base.replace(backend=o_kind))
    res_l = sec.get("resolution", 41)
    ext = sec.get("extent", 1.5)
    spaces = sec.get("spaces", ("constrained", "lifted"))
    for space in spaces:
        if space == "constrained":
            _, (a, b, L, feas), traj = constrained_landscape(res_a, res_o, res_l, ext)
        elif space == "lifted":
            _, (a, b, L, feas), traj = lifted_landscape(res_a, res_l, ext)
        elif space == "random":
            _, (a, b, L, feas), traj = random_landscape(res_a, res_l, ext, base.seed)
        else:
            raise cfg.error("landscape", "spaces", f"unknown space {space!r}")
        grid_rows = [{"a": a[i], "b": b[j], "loss": L[i, j], "feasible": int(feas[i, j])}
                     for i in range(a.size) for j in range(b.size)]
        write_rows(out / f"landscape_{space}.csv", ("a", "b", "loss", "feasible"), grid_rows)
        tr_rows = [{"method": m, "iteration": it, "a": c[0], "b": c[1]}
                   for m, (its, coords) in traj.items() for it, c in zip(its, coords)]
        write_rows(out / f"trajectory_{space}.csv", ("method", "iteration", "a", "b"), tr_rows)
        log.info("%s slice: %d/%d finite cells", space, int(feas.sum()), feas.size)


HANDLERS = {
    "train": cmd_train, "ablate": cmd_ablate, "sde": cmd_sde, "landscape": cmd_landscape,
    "sweep": cmd_sweep, "capacity": cmd_capacity,
}


def build_parser():
    p = argparse.ArgumentParser(prog="icnn-lift", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="INI experiment config")
        s.add_argument("--out", help="output directory (overrides [experiment] out)")
        s.add_argument("--seed", type=int, help="master seed (overrides the config)")
        s.add_argument("--seeds", type=int, help="number of consecutive seeds to run")
        s.add_argument("--quiet", action="store_true", help="only report warnings and errors")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        HANDLERS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        it = getattr(err, "iteration", None)
        where = f" at iteration {it}" if it is not None else ""
        print(f"numerical abort{where}: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
