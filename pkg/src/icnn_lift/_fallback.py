"""Pure-numpy versions of the compiled loops in ``_kernels.pyx``."""

import numpy as np


def _logistic(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sde_advance(w, fpt, noise_obj, noise_jac, step_offset, sigma_obj, sigma_jac, ws, dt):
    sq = np.sqrt(dt)
    a = sigma_obj * sq
    b = sigma_jac * sq
    live = np.flatnonzero(fpt < 0)
    x = w[live]
    for t in range(noise_obj.shape[0]):
        if live.size == 0:
            break
        x = x - _logistic(x) * a * noise_obj[t, live] + b * noise_jac[t, live]
        hit = x >= ws
        if hit.any():
            w[live[hit]] = x[hit]
            fpt[live[hit]] = step_offset + t + 1
            keep = ~hit
            live = live[keep]
            x = x[keep]
    w[live] = x
    return int(live.size)


def shoulder_scan(history, threshold):
    history = np.asarray(history, dtype=np.float64)
    S, d = history.shape
    inside = history < threshold
    occupancy = inside.mean(axis=1) if d else np.zeros(S)
    if S == 0 or d == 0:
        return occupancy, 0, 0, np.zeros(d, np.int64), np.zeros(d, np.int64), np.zeros(d, bool)
    in_now = inside[:-1]
    in_steps = int(in_now.sum())
    leaves = int((in_now & ~inside[1:]).sum())
    entered_by = np.logical_or.accumulate(inside, axis=0)
    dwell_total = entered_by.sum(axis=0).astype(np.int64)
    dwell_in = inside.sum(axis=0).astype(np.int64)
    entered = entered_by[-1].copy()
    return occupancy, in_steps, leaves, dwell_in, dwell_total, entered
