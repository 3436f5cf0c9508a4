"""Forward-mode dual arrays.

A :class:`DualArray` carries a primal array and a tangent of the same shape.
The reverse-mode rules in :mod:`icnn_lift.ad.ops` are written against the
generic helpers at the bottom of this module, so replaying a tape with dual
values gives Hessian-vector products (forward-over-reverse).
"""

from __future__ import annotations

import numpy as np

from .. import kernels


class DualArray:
    __slots__ = ("primal", "tangent")
    # Make ndarray <op> DualArray defer to the reflected DualArray method.
    __array_ufunc__ = None

    def __init__(self, primal, tangent=None):
        primal = np.asarray(primal, dtype=np.float64)
        if tangent is None:
            tangent = np.zeros_like(primal)
        else:
            tangent = np.asarray(tangent, dtype=np.float64)
            if tangent.shape != primal.shape:
                raise ValueError(
                    f"tangent shape {tangent.shape} != primal shape {primal.shape}"
                )
        self.primal = primal
        self.tangent = tangent

    @property
    def shape(self):
        return self.primal.shape

    @property
    def ndim(self):
        return self.primal.ndim

    def __repr__(self):
        return f"DualArray(primal={self.primal!r}, tangent={self.tangent!r})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, DualArray):
            return DualArray(self.primal + other.primal, self.tangent + other.tangent)
        p = self.primal + other
        return DualArray(p, np.broadcast_to(self.tangent, p.shape).copy())

    __radd__ = __add__

    def __neg__(self):
        return DualArray(-self.primal, -self.tangent)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, DualArray):
            return DualArray(
                self.primal * other.primal,
                self.tangent * other.primal + self.primal * other.tangent,
            )
        return DualArray(self.primal * other, self.tangent * other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, DualArray):
            return DualArray(
                self.primal @ other.primal,
                self.tangent @ other.primal + self.primal @ other.tangent,
            )
        return DualArray(self.primal @ other, self.tangent @ other)

    def __rmatmul__(self, other):
        return DualArray(other @ self.primal, other @ self.tangent)

    def __getitem__(self, idx):
        return DualArray(self.primal[idx], self.tangent[idx])

    @property
    def T(self):
        return DualArray(self.primal.T, self.tangent.T)

    def reshape(self, shape):
        return DualArray(self.primal.reshape(shape), self.tangent.reshape(shape))

    def sum(self, axis=None, keepdims=False):
        return DualArray(
            self.primal.sum(axis=axis, keepdims=keepdims),
            self.tangent.sum(axis=axis, keepdims=keepdims),
        )

    # elementwise functions ------------------------------------------------
    def exp(self):
        p = np.exp(self.primal)
        return DualArray(p, p * self.tangent)

    def log(self):
        return DualArray(np.log(self.primal), self.tangent / self.primal)

    def reciprocal(self):
        p = 1.0 / self.primal
        return DualArray(p, -self.tangent * p * p)

    def tanh(self):
        p = np.tanh(self.primal)
        return DualArray(p, (1.0 - p * p) * self.tangent)

    def logistic(self):
        s = kernels.logistic(self.primal)
        return DualArray(s, s * (1.0 - s) * self.tangent)

    def softplus(self):
        return DualArray(
            kernels.softplus(self.primal), kernels.logistic(self.primal) * self.tangent
        )

    def mask(self, m):
        return DualArray(self.primal * m, self.tangent * m)


def primal_of(x):
    return x.primal if isinstance(x, DualArray) else x


# Generic helpers: dispatch on DualArray, fall through to numpy otherwise.


def exp(x):
    return x.exp() if isinstance(x, DualArray) else np.exp(x)


def log(x):
    return x.log() if isinstance(x, DualArray) else np.log(x)


def reciprocal(x):
    return x.reciprocal() if isinstance(x, DualArray) else 1.0 / x


def tanh(x):
    return x.tanh() if isinstance(x, DualArray) else np.tanh(x)


def logistic(x):
    return x.logistic() if isinstance(x, DualArray) else kernels.logistic(x)


def softplus(x):
    return x.softplus() if isinstance(x, DualArray) else kernels.softplus(x)


def asum(x, axis=None, keepdims=False):
    if isinstance(x, DualArray):
        return x.sum(axis=axis, keepdims=keepdims)
    return np.sum(x, axis=axis, keepdims=keepdims)


def transpose(x):
    return x.T


def reshape(x, shape):
    return x.reshape(shape)


def zeros_like(x):
    if isinstance(x, DualArray):
        return DualArray(np.zeros_like(x.primal))
    return np.zeros_like(x)


def broadcast_to(x, shape):
    if isinstance(x, DualArray):
        return DualArray(
            np.broadcast_to(x.primal, shape).copy(),
            np.broadcast_to(x.tangent, shape).copy(),
        )
    return np.broadcast_to(x, shape).copy()


def scatter(shape, idx, g):
    """Zero array of ``shape`` with ``g`` accumulated at ``idx``."""
    if isinstance(g, DualArray):
        return DualArray(scatter(shape, idx, g.primal), scatter(shape, idx, g.tangent))
    out = np.zeros(shape)
    parts = idx if isinstance(idx, tuple) else (idx,)
    if all(isinstance(p, (slice, int, np.integer)) or p is Ellipsis for p in parts):
        out[idx] += g  # basic indexing never repeats an element
    else:
        np.add.at(out, idx, g)
    return out


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    gshape = primal_of(g).shape
    if gshape == tuple(shape):
        return g
    extra = len(gshape) - len(shape)
    if extra > 0:
        g = asum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and primal_of(g).shape[i] != 1)
    if axes:
        g = asum(g, axis=axes, keepdims=True)
    return reshape(g, shape)


def outer(u, v):
    return reshape(u, (-1, 1)) @ reshape(v, (1, -1))
