"""Cached experiment runs shared by several acceptance criteria."""

import time
from functools import lru_cache
from pathlib import Path

from icnn_lift.config import load_config
from icnn_lift.experiments import run_ablation, run_capacity, run_sweep
from icnn_lift.training import train

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
REPORT = {}
RESULTS = {}  # repr(RunConfig) -> RunResult, every run made by the acceptance suite


def report(n, ok, detail, seconds, budget):
    status = "PASS" if ok else "FAIL"
    over = "" if seconds <= budget else " [over runtime budget]"
    REPORT[n] = f"criterion {n:>2}: {status}  {detail}  (runtime {seconds:.0f}s, budget {budget:.0f}s){over}"


def cached_train(cfg):
    key = repr(cfg)
    if key not in RESULTS:
        RESULTS[key] = train(cfg)
    return RESULTS[key]


def _base(name, section):
    return load_config(CONFIGS / name).run_config(section)


class Timed:
    """Wall time spent building a cached product, attributed to its first consumer."""

    def __init__(self, value, seconds):
        self.value, self.seconds = value, seconds


def _timed(fn, *a):
    t = time.perf_counter()
    v = fn(*a)
    return Timed(v, time.perf_counter() - t)


GUMBEL_SNAPSHOT_STRIDE = 100  # snapshots feed the landscape criterion; they do not change training


@lru_cache(None)
def gumbel_base():
    return _base("sweep_gumbel.ini", "sweep").replace(target="gumbel", snapshot_stride=GUMBEL_SNAPSHOT_STRIDE)


@lru_cache(None)
def ablation():
    base = _base("ablate.ini", "ablate").replace(snapshot_stride=GUMBEL_SNAPSHOT_STRIDE)
    assert repr(base.replace(backend="lift")) == repr(gumbel_base().replace(backend="lift"))
    return _timed(lambda: run_ablation(base, range(3), trainer=cached_train))


@lru_cache(None)
def gumbel_sweep():
    return _timed(lambda: run_sweep({"gumbel": gumbel_base()}, ("direct_softplus", "lift"), range(5),
                                    trainer=cached_train))


@lru_cache(None)
def cpflow_sweep():
    base = _base("sweep_cpflow.ini", "sweep").replace(target="eight_gaussians")
    return _timed(lambda: run_sweep({"eight_gaussians": base}, ("direct_softplus", "lift"), range(10),
                                    trainer=cached_train))


@lru_cache(None)
def capacity():
    cfg = load_config(CONFIGS / "capacity.ini")
    sec = cfg.section("capacity")
    base = cfg.run_config("capacity")
    return _timed(lambda: run_capacity(base, range(3), sec["wide_width"], sec["wide_layers"], trainer=cached_train))
