"""Numerical kernels with compiled/pure selection at import time.

The compiled extension ``icnn_lift._kernels`` is used when it imports and the
environment variable ``ICNN_LIFT_PURE=1`` is not set; otherwise the numpy
fallback in :mod:`icnn_lift._fallback` is used. ``BACKEND`` names the choice.

Softplus and logistic stay in numpy on both paths: numpy's vectorised ``exp``
beats a scalar C loop for these.
"""

import os

import numpy as np
from scipy.special import expit

from . import _fallback

if os.environ.get("ICNN_LIFT_PURE", "") == "1":
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"

_impl = _compiled if _compiled is not None else _fallback


def softplus(x):
    """Stable ``log(1 + exp(x))``: ``max(x, 0) + log1p(exp(-|x|))``."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def logistic(x):
    # scipy's expit is branch-stable and keeps full relative precision far into the tail
    return expit(np.asarray(x, dtype=np.float64))


def softplus_inv(y):
    """Inverse softplus ``log(expm1(y))`` for ``y > 0``."""
    y = np.asarray(y, dtype=np.float64)
    # y + log(-expm1(-y)) avoids overflow of expm1 for large y
    return y + np.log(-np.expm1(-y))


def sde_advance(w, fpt, noise_obj, noise_jac, step_offset, sigma_obj, sigma_jac, ws, dt):
    return _impl.sde_advance(
        w,
        fpt,
        np.ascontiguousarray(noise_obj),
        np.ascontiguousarray(noise_jac),
        int(step_offset),
        float(sigma_obj),
        float(sigma_jac),
        float(ws),
        float(dt),
    )


def shoulder_scan(history, threshold):
    return _impl.shoulder_scan(np.ascontiguousarray(history, dtype=np.float64), float(threshold))
