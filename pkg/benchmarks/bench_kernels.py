"""Compiled vs pure-numpy kernels: ``python benchmarks/bench_kernels.py``.

Times both implementations of the escape-SDE inner loop and the shoulder
scan on identical inputs and checks that they agree.
"""

import argparse
import time

import numpy as np

from icnn_lift import _fallback

try:
    from icnn_lift import _kernels as compiled
except ImportError:
    compiled = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def bench_sde(impl, R, steps, sigma_jac):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((steps, R))
    b = rng.standard_normal((steps, R))

    def run():
        w = np.full(R, -16.0)
        fpt = np.full(R, -1, dtype=np.int64)
        impl.sde_advance(w, fpt, a, b, 0, 1.0, sigma_jac, -13.82, 1.0)
        return w, fpt

    return run


def bench_scan(impl, S, d):
    H = np.random.default_rng(1).normal(-2.5, 1.0, (S, d))
    return lambda: impl.shoulder_scan(H, -2.9444389791664403)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args()
    if compiled is None:
        print("compiled extension not built; only the fallback can run")
    cases = [
        ("sde_advance R=256 steps=2000 sigma=0.02", lambda m: bench_sde(m, 256, 2000, 0.02)),
        ("sde_advance R=256 steps=2000 sigma=0.2", lambda m: bench_sde(m, 256, 2000, 0.2)),
        ("shoulder_scan 300 x 1056", lambda m: bench_scan(m, 300, 1056)),
        ("shoulder_scan 300 x 20000", lambda m: bench_scan(m, 300, 20000)),
    ]
    print(f"{'case':<44}{'python (ms)':>12}{'compiled (ms)':>15}{'speedup':>9}")
    for name, make in cases:
        tp, out_p = best_of(make(_fallback), args.repeats)
        if compiled is None:
            print(f"{name:<44}{tp * 1e3:>12.2f}{'-':>15}{'-':>9}")
            continue
        tc, out_c = best_of(make(compiled), args.repeats)
        for x, y in zip(out_p, out_c):
            if not np.allclose(np.asarray(x, dtype=float), np.asarray(y, dtype=float), rtol=0, atol=1e-12):
                raise SystemExit(f"{name}: implementations disagree")
        print(f"{name:<44}{tp * 1e3:>12.2f}{tc * 1e3:>15.2f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
