"""Cross-covariance window, noise scalars and shoulder-escape statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .backends import threshold_from_sigma

SIGMA_S = 0.05
SHOULDER_THRESHOLD = threshold_from_sigma(SIGMA_S)


class TrailingWindow:
    """Ring buffer of the last ``T`` pairs ``(theta_tilde, g)``."""

    def __init__(self, capacity: int, d: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.T = int(capacity)
        self.d = int(d)
        self._th = np.zeros((self.T, self.d))
        self._g = np.zeros((self.T, self.d))
        self._n = 0
        self._head = 0

    def __len__(self):
        return self._n

    def record(self, theta, g):
        theta = np.asarray(theta, dtype=np.float64).ravel()
        g = np.asarray(g, dtype=np.float64).ravel()
        if theta.shape != (self.d,) or g.shape != (self.d,):
            raise ValueError(f"expected two vectors of length {self.d}, got {theta.shape} and {g.shape}")
        self._th[self._head] = theta
        self._g[self._head] = g
        self._head = (self._head + 1) % self.T
        self._n = min(self._n + 1, self.T)

    def contents(self):
        """Entries oldest first as ``(n, d)`` arrays."""
        if self._n < self.T:
            return self._th[: self._n].copy(), self._g[: self._n].copy()
        order = np.r_[self._head : self.T, 0 : self._head]
        return self._th[order], self._g[order]

    def deltas(self):
        th, g = self.contents()
        return th - th.mean(axis=0), g - g.mean(axis=0)

    def cross_cov(self, full: bool = False):
        """``(Sigma or None, frobenius, trace)``, or ``None`` with fewer than 2 entries.

        The Frobenius norm uses ``|S|_F^2 = sum((A A^T) * (B B^T)) / n^2`` so
        the ``d x d`` matrix is only formed when ``full`` is set.
        """
        if self._n < 2:
            return None
        n = self._n
        if n == self.T:
            th, g = self._th, self._g  # row order does not matter for the sums below
        else:
            th, g = self._th[:n], self._g[:n]
        A = th - th.mean(axis=0)
        B = g - g.mean(axis=0)
        trace = float(np.sum(A * B) / n)
        fro2 = float(np.sum((A @ A.T) * (B @ B.T))) / (n * n)
        frob = float(np.sqrt(max(fro2, 0.0)))
        S = (A.T @ B) / n if full else None
        return S, frob, trace


def sigma_obj_sq(grads) -> float:
    """Trace of the empirical covariance of gradient replicas (rows of ``grads``)."""
    G = np.asarray(grads, dtype=np.float64)
    if G.shape[0] < 2:
        raise ValueError("need at least two gradient replicas")
    # shifting by one replica keeps identical replicas at exactly zero variance
    return float((G - G[0]).var(axis=0, ddof=1).sum())


def noise_ratio(sigma_jac_sq: float, sigma_obj_sq_: float, sigma_s: float = SIGMA_S) -> float:
    """``sigma_jac^2 / (sigma_s^2 sigma_obj^2)``; infinite when ``sigma_obj^2`` is zero."""
    if sigma_obj_sq_ == 0.0:
        return float("inf")
    return float(sigma_jac_sq / (sigma_s**2 * sigma_obj_sq_))


def curvature_trace(V, H) -> float:
    """``tr(V H)`` for a fluctuation covariance ``V`` and a curvature matrix ``H``.

    This is the leading added-curvature term of the slack channel. It is
    non-negative whenever both matrices are PSD.
    """
    V = np.asarray(V, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if V.ndim != 2 or V.shape != H.shape or V.shape[0] != V.shape[1]:
        raise ValueError("V and H must be square matrices of the same size")
    return float(np.sum(V * H.T))


def shoulder_prefactor(threshold: float = SHOULDER_THRESHOLD) -> float:
    return float(kernels.logistic(threshold))


@dataclass
class ShoulderStats:
    occupancy: np.ndarray
    in_steps: int
    leaves: int
    dwell_in: np.ndarray
    dwell_total: np.ndarray
    entered: np.ndarray

    @property
    def leave_rate(self):
        """``P(out at s+1 | in at s)``, or ``None`` if no coordinate was ever in."""
        if self.in_steps == 0:
            return None
        return self.leaves / self.in_steps

    @property
    def dwell_fractions(self):
        m = self.entered
        return self.dwell_in[m] / self.dwell_total[m]

    @property
    def dwell_fraction(self):
        if not np.any(self.entered):
            return None
        return float(np.mean(self.dwell_fractions))


def shoulder_escape_stats(history, threshold: float = SHOULDER_THRESHOLD) -> ShoulderStats:
    """Occupancy curve and conditional escape counts of an ``(S, d)`` history."""
    occ, in_steps, leaves, din, dtot, entered = kernels.shoulder_scan(history, threshold)
    return ShoulderStats(np.asarray(occ), int(in_steps), int(leaves), np.asarray(din),
                         np.asarray(dtot), np.asarray(entered, dtype=bool))


def pooled_escape(stats_list):
    """Pool leave-rate counts and dwell fractions over runs; ``(leave_rate, dwell)``."""
    in_steps = sum(s.in_steps for s in stats_list)
    leaves = sum(s.leaves for s in stats_list)
    fr = [s.dwell_fractions for s in stats_list if np.any(s.entered)]
    leave = None if in_steps == 0 else leaves / in_steps
    dwell = None if not fr else float(np.mean(np.concatenate(fr)))
    return leave, dwell
