# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled loops for the escape simulation and shoulder-transition scan.

Pure-numpy equivalents live in :mod:`icnn_lift._fallback`; both must agree.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()


cdef inline double _logistic(double v) noexcept nogil:
    cdef double e = exp(-fabs(v))
    if v >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


def sde_advance(double[::1] w, cnp.int64_t[::1] fpt,
                const double[:, ::1] noise_obj, const double[:, ::1] noise_jac,
                long step_offset, double sigma_obj, double sigma_jac,
                double ws, double dt):
    """Advance every live replicate through one noise chunk in place.

    ``fpt[r] < 0`` marks a live replicate; on absorption it receives the
    1-based step index. Returns the number of replicates still alive.
    """
    cdef Py_ssize_t n_steps = noise_obj.shape[0]
    cdef Py_ssize_t n_rep = w.shape[0]
    cdef Py_ssize_t t, r
    cdef double sq = sqrt(dt)
    cdef double a = sigma_obj * sq
    cdef double b = sigma_jac * sq
    cdef double x
    cdef long alive = 0
    with nogil:
        for r in range(n_rep):
            if fpt[r] >= 0:
                continue
            x = w[r]
            for t in range(n_steps):
                x = x - _logistic(x) * a * noise_obj[t, r] + b * noise_jac[t, r]
                if x >= ws:
                    fpt[r] = step_offset + t + 1
                    break
            w[r] = x
            if fpt[r] < 0:
                alive += 1
    return alive


def shoulder_scan(const double[:, ::1] history, double threshold):
    """Scan an (S, d) history of pre-readout snapshots.

    Returns ``(occupancy, in_steps, leaves, dwell_in, dwell_total, entered)``
    where ``occupancy[s]`` is the in-shoulder fraction at snapshot ``s``,
    ``in_steps``/``leaves`` count in-shoulder transitions s -> s+1 and exits,
    and the dwell arrays count, per coordinate, in-shoulder snapshots and all
    snapshots from its first entry onward.
    """
    cdef Py_ssize_t S = history.shape[0]
    cdef Py_ssize_t d = history.shape[1]
    cdef Py_ssize_t s, j
    occupancy = np.zeros(S, dtype=np.float64)
    dwell_in = np.zeros(d, dtype=np.int64)
    dwell_total = np.zeros(d, dtype=np.int64)
    entered = np.zeros(d, dtype=np.uint8)
    cdef double[::1] occ = occupancy
    cdef cnp.int64_t[::1] din = dwell_in
    cdef cnp.int64_t[::1] dtot = dwell_total
    cdef cnp.uint8_t[::1] ent = entered
    cdef long in_steps = 0
    cdef long leaves = 0
    cdef long count
    cdef bint now_in, next_in
    if S == 0 or d == 0:
        return occupancy, 0, 0, dwell_in, dwell_total, entered.astype(bool)
    with nogil:
        for s in range(S):
            count = 0
            for j in range(d):
                now_in = history[s, j] < threshold
                if now_in:
                    count += 1
                    ent[j] = 1
                if ent[j]:
                    dtot[j] += 1
                    if now_in:
                        din[j] += 1
                if now_in and s + 1 < S:
                    in_steps += 1
                    next_in = history[s + 1, j] < threshold
                    if not next_in:
                        leaves += 1
            occ[s] = count / <double>d
    return occupancy, in_steps, leaves, dwell_in, dwell_total, entered.astype(bool)
