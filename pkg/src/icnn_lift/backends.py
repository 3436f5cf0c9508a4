"""Positivity-enforcement strategies for the flagged ICNN kernels.

Every backend maps its own free parameters to a pre-readout vector
``theta_tilde`` of length ``d`` and reads it out to the non-negative kernel
vector ``theta``:

==================  ==========================  =========================
backend             pre-readout                 readout
==================  ==========================  =========================
direct_softplus     ``theta``                   ``softplus``
direct_with_bias    ``slack + theta``           ``softplus``
body_no_bias        ``h(X)``                    ``softplus``
lift                ``slack + h(X)``            ``softplus``
pgd                 ``theta``                   identity, projected after each step
admm                ``theta``                   identity; consensus ``z >= 0``
==================  ==========================  =========================
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .ad import fn
from .hypernet import HyperConfig, emit, emit_many, init_hyper

BACKENDS = ("direct_softplus", "direct_with_bias", "body_no_bias", "lift", "pgd", "admm")
ADMM_SCHEDULES = ("fixed", "residual_balance", "doubling")
RHO_CLAMP = 1e12


@dataclass
class RhoSchedule:
    """Penalty schedule for the ADMM baseline."""

    kind: str = "fixed"
    rho0: float = 10.0
    mu: float = 10.0
    tau: float = 2.0
    period: int = 500
    cap: float = 1e6
    floor: float = 1e-6  # residual balancing halves rho forever once the primal residual is exactly 0

    def __post_init__(self):
        if self.kind not in ADMM_SCHEDULES:
            raise ValueError(f"unknown ADMM schedule {self.kind!r}; expected one of {ADMM_SCHEDULES}")
        if self.rho0 <= 0:
            raise ValueError("rho must be > 0")

    @classmethod
    def default(cls, kind):
        return cls(kind=kind, rho0=1.0 if kind == "doubling" else 10.0)

    def update(self, rho, it, r_primal, r_dual):
        if self.kind == "residual_balance":
            if r_primal > self.mu * r_dual:
                rho = rho * self.tau
            elif r_dual > self.mu * r_primal:
                rho = max(rho / self.tau, self.floor)
        elif self.kind == "doubling":
            if it > 0 and it % self.period == 0:
                rho = min(2.0 * rho, self.cap)
        if rho > RHO_CLAMP:
            warnings.warn(f"ADMM rho {rho:.3g} exceeds {RHO_CLAMP:.0e}; clamping", RuntimeWarning)
            rho = RHO_CLAMP
        return rho


class Backend:
    """Base class; see the module table for what each subclass computes."""

    kind = "base"
    has_body = False
    softplus_readout = True

    def __init__(self, d, input_dim, hyper: HyperConfig | None = None):
        self.d = int(d)
        self.input_dim = int(input_dim)
        self.hyper = hyper

    # construction ---------------------------------------------------------
    def init_params(self, init_values, rng, jitter=None):
        """Backend parameters whose readout starts at ``init_values`` (plus ``jitter``)."""
        raise NotImplementedError

    # forward --------------------------------------------------------------
    def pre_readout(self, P, X_cond=None):
        raise NotImplementedError

    def readout(self, t):
        return fn.softplus(t)

    def emission(self, P, X_cond=None):
        """Batch-conditioned part of the pre-readout vector (plain arrays)."""
        return np.zeros(self.d)

    def _need_cond(self, X_cond):
        if X_cond is None or np.shape(X_cond)[0] < 1:
            raise ValueError(f"{self.kind} needs a non-empty conditioning batch")

    # optimisation hooks ----------------------------------------------------
    def augment_grads(self, P, grads):
        return grads

    def after_step(self, P, it):
        return {}

    # evaluation -------------------------------------------------------------
    def effective_pre_readout(self, P, X_anchor=None):
        """Deterministic pre-readout vector used for evaluation and slicing."""
        return np.asarray(self.pre_readout(P, X_anchor), dtype=np.float64)

    def deployable(self, P, X_anchor=None):
        """Non-negative kernel vector used for every test metric."""
        return kernels.softplus(self.effective_pre_readout(P, X_anchor))

    def extra_state(self):
        return {}


class DirectSoftplus(Backend):
    kind = "direct_softplus"

    def init_params(self, init_values, rng, jitter=None):
        t = kernels.softplus_inv(init_values)
        return {"theta": t + (0.0 if jitter is None else jitter)}

    def pre_readout(self, P, X_cond=None):
        return P["theta"]


class DirectWithBias(Backend):
    kind = "direct_with_bias"

    def init_params(self, init_values, rng, jitter=None):
        t = kernels.softplus_inv(init_values)
        return {"slack": np.zeros(self.d), "theta": t + (0.0 if jitter is None else jitter)}

    def pre_readout(self, P, X_cond=None):
        return P["slack"] + P["theta"]


class BodyNoBias(Backend):
    """Hypernet emission alone; the emission layer starts small and random."""

    kind = "body_no_bias"
    has_body = True
    final_scale = 1e-2

    def init_params(self, init_values, rng, jitter=None):
        return init_hyper(self.hyper, rng, final_scale=self.final_scale)

    def pre_readout(self, P, X_cond=None):
        self._need_cond(X_cond)
        return emit(self.hyper, P, X_cond)

    def emission(self, P, X_cond=None):
        self._need_cond(X_cond)
        return emit_many(self.hyper, P, np.asarray(X_cond)[None])[0]


class Lift(Backend):
    """Slack plus zero-initialised emission, so training starts at the direct init."""

    kind = "lift"
    has_body = True

    def init_params(self, init_values, rng, jitter=None):
        P = init_hyper(self.hyper, rng, final_scale=0.0)
        P["slack"] = kernels.softplus_inv(init_values) + (0.0 if jitter is None else jitter)
        return P

    def pre_readout(self, P, X_cond=None):
        self._need_cond(X_cond)
        return P["slack"] + emit(self.hyper, P, X_cond)

    def emission(self, P, X_cond=None):
        self._need_cond(X_cond)
        return emit_many(self.hyper, P, np.asarray(X_cond)[None])[0]


class PGD(Backend):
    """One Adam step on the raw kernels, then ``max(theta, 0)``."""

    kind = "pgd"
    softplus_readout = False

    def init_params(self, init_values, rng, jitter=None):
        return {"theta": np.array(init_values, dtype=np.float64)}

    def pre_readout(self, P, X_cond=None):
        return P["theta"]

    def readout(self, t):
        return t

    def after_step(self, P, it):
        P["theta"] = np.maximum(P["theta"], 0.0)
        return {}

    def deployable(self, P, X_anchor=None):
        return np.maximum(np.asarray(P["theta"]), 0.0)


class ADMM(Backend):
    """Consensus splitting ``theta = z, z >= 0`` with one Adam step per outer iteration."""

    kind = "admm"
    softplus_readout = False

    def __init__(self, d, input_dim, hyper=None, schedule: RhoSchedule | None = None):
        super().__init__(d, input_dim, hyper)
        self.schedule = schedule or RhoSchedule.default("fixed")
        self.rho = self.schedule.rho0
        self.z = np.zeros(self.d)
        self.y = np.zeros(self.d)

    def init_params(self, init_values, rng, jitter=None):
        theta = np.array(init_values, dtype=np.float64)
        self.z = np.maximum(theta, 0.0)
        self.y = np.zeros(self.d)
        self.rho = self.schedule.rho0
        return {"theta": theta}

    def pre_readout(self, P, X_cond=None):
        return P["theta"]

    def readout(self, t):
        return t

    def augment_grads(self, P, grads):
        g = dict(grads)
        g["theta"] = grads["theta"] + self.rho * (P["theta"] - self.z) + self.y
        return g

    def after_step(self, P, it):
        theta = P["theta"]
        z_prev = self.z
        self.z = np.maximum(theta + self.y / self.rho, 0.0)
        self.y = self.y + self.rho * (theta - self.z)
        r_primal = float(np.linalg.norm(theta - self.z))
        r_dual = float(self.rho * np.linalg.norm(self.z - z_prev))
        logs = {"primal_residual": r_primal, "dual_residual": r_dual, "rho": self.rho}
        self.rho = self.schedule.update(self.rho, it, r_primal, r_dual)
        return logs

    def deployable(self, P, X_anchor=None):
        return np.maximum(np.asarray(P["theta"]), 0.0)

    def extra_state(self):
        return {"admm_z": self.z.copy(), "admm_y": self.y.copy(), "admm_rho": np.array([self.rho])}


_CLASSES = {
    "direct_softplus": DirectSoftplus,
    "direct_with_bias": DirectWithBias,
    "body_no_bias": BodyNoBias,
    "lift": Lift,
    "pgd": PGD,
    "admm": ADMM,
}


def make_backend(kind, d, input_dim, hyper=None, schedule=None):
    if kind not in _CLASSES:
        raise ValueError(f"unknown backend {kind!r}; expected one of {BACKENDS}")
    cls = _CLASSES[kind]
    if cls.has_body and hyper is None:
        hyper = HyperConfig(input_dim=input_dim, emission_dim=d)
    if kind == "admm":
        return cls(d, input_dim, hyper, schedule=schedule)
    return cls(d, input_dim, hyper)


def threshold_from_sigma(sigma_s: float) -> float:
    """Pre-readout value where ``softplus' = sigma_s``: ``logit(sigma_s)``."""
    return math.log(sigma_s / (1.0 - sigma_s))
