"""Primitive operations: a forward rule and a vector-Jacobian product each.

Every rule is written with the generic helpers from :mod:`.dual`, so the same
code runs on plain ndarrays during normal backpropagation and on
:class:`~.dual.DualArray` values when a tape is replayed for a
Hessian-vector product.

``vjp(g, out, *args, needs=..., **kw)`` returns one cotangent per positional
argument; entries whose ``needs`` flag is false may be ``None``.
"""

from __future__ import annotations

import numpy as np

from . import dual as D
from .dual import DualArray, primal_of


class NumericalError(FloatingPointError):
    """Raised when a value declared finite is not."""


def _shape(x):
    return np.shape(primal_of(x))


class Op:
    name = "op"

    def forward(self, *args, **kw):
        raise NotImplementedError

    def vjp(self, g, out, *args, needs, **kw):
        raise NotImplementedError


class Add(Op):
    name = "add"

    def forward(self, a, b):
        return a + b

    def vjp(self, g, out, a, b, needs):
        return (
            D.unbroadcast(g, _shape(a)) if needs[0] else None,
            D.unbroadcast(g, _shape(b)) if needs[1] else None,
        )


class Sub(Op):
    name = "sub"

    def forward(self, a, b):
        return a - b

    def vjp(self, g, out, a, b, needs):
        return (
            D.unbroadcast(g, _shape(a)) if needs[0] else None,
            D.unbroadcast(-g, _shape(b)) if needs[1] else None,
        )


class Mul(Op):
    name = "mul"

    def forward(self, a, b):
        return a * b

    def vjp(self, g, out, a, b, needs):
        return (
            D.unbroadcast(g * b, _shape(a)) if needs[0] else None,
            D.unbroadcast(g * a, _shape(b)) if needs[1] else None,
        )


class Neg(Op):
    name = "neg"

    def forward(self, a):
        return -a

    def vjp(self, g, out, a, needs):
        return (-g,)


class MatMul(Op):
    name = "matmul"

    def forward(self, a, b):
        return a @ b

    def vjp(self, g, out, a, b, needs):
        na, nb = len(_shape(a)), len(_shape(b))
        ga = gb = None
        if na == 2 and nb == 2:
            if needs[0]:
                ga = g @ D.transpose(b)
            if needs[1]:
                gb = D.transpose(a) @ g
        elif na == 2 and nb == 1:
            if needs[0]:
                ga = D.outer(g, b)
            if needs[1]:
                gb = D.transpose(a) @ g
        elif na == 1 and nb == 2:
            if needs[0]:
                ga = b @ g
            if needs[1]:
                gb = D.outer(a, g)
        elif na == 1 and nb == 1:
            if needs[0]:
                ga = g * b
            if needs[1]:
                gb = g * a
        else:
            raise ValueError(f"matmul supports 1D/2D operands, got {na}D @ {nb}D")
        return ga, gb


def _expand_reduced(g, in_shape, axis, keepdims):
    """Reshape a reduced cotangent so it broadcasts against ``in_shape``."""
    if axis is None:
        kshape = (1,) * len(in_shape)
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(a % len(in_shape) for a in axes)
        kshape = tuple(1 if i in axes else n for i, n in enumerate(in_shape))
    if not keepdims:
        g = D.reshape(g, kshape)
    return D.broadcast_to(g, in_shape)


class Sum(Op):
    name = "sum"

    def forward(self, a, axis=None, keepdims=False):
        return D.asum(a, axis=axis, keepdims=keepdims)

    def vjp(self, g, out, a, needs, axis=None, keepdims=False):
        return (_expand_reduced(g, _shape(a), axis, keepdims),)


class Mean(Op):
    """Mean over an axis; with ``axis=0`` this is the batch mean-pool."""

    name = "mean"

    @staticmethod
    def _count(shape, axis):
        if axis is None:
            return int(np.prod(shape)) if shape else 1
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        return int(np.prod([shape[a] for a in axes]))

    def forward(self, a, axis=None, keepdims=False):
        return D.asum(a, axis=axis, keepdims=keepdims) * (1.0 / self._count(_shape(a), axis))

    def vjp(self, g, out, a, needs, axis=None, keepdims=False):
        n = self._count(_shape(a), axis)
        return (_expand_reduced(g * (1.0 / n), _shape(a), axis, keepdims),)


class Softplus(Op):
    name = "softplus"

    def forward(self, a):
        return D.softplus(a)

    def vjp(self, g, out, a, needs):
        return (g * D.logistic(a),)


class Logistic(Op):
    name = "logistic"

    def forward(self, a):
        return D.logistic(a)

    def vjp(self, g, out, a, needs):
        return (g * (out - out * out),)


class Tanh(Op):
    name = "tanh"

    def forward(self, a):
        return D.tanh(a)

    def vjp(self, g, out, a, needs):
        return (g * (1.0 - out * out),)


class Relu(Op):
    name = "relu"

    def forward(self, a):
        return a * (primal_of(a) > 0).astype(np.float64)

    def vjp(self, g, out, a, needs):
        return (g * (primal_of(a) > 0).astype(np.float64),)


class MaxConst(Op):
    """``max(a, c)`` for a constant ``c``; subgradient 0 at ties."""

    name = "maximum"

    def forward(self, a, c=0.0):
        m = (primal_of(a) > c).astype(np.float64)
        return a * m + c * (1.0 - m)

    def vjp(self, g, out, a, needs, c=0.0):
        return (g * (primal_of(a) > c).astype(np.float64),)


class Exp(Op):
    name = "exp"

    def forward(self, a):
        return D.exp(a)

    def vjp(self, g, out, a, needs):
        return (g * out,)


class Log(Op):
    name = "log"

    def forward(self, a):
        return D.log(a)

    def vjp(self, g, out, a, needs):
        return (g * D.reciprocal(a),)


class Reciprocal(Op):
    name = "reciprocal"

    def forward(self, a):
        return D.reciprocal(a)

    def vjp(self, g, out, a, needs):
        return (-g * out * out,)


class Square(Op):
    name = "square"

    def forward(self, a):
        return a * a

    def vjp(self, g, out, a, needs):
        return (g * (2.0 * a),)


class LogSumExp(Op):
    name = "logsumexp"

    def forward(self, a, axis=None):
        p = primal_of(a)
        m = np.max(p, axis=axis, keepdims=True)
        if not np.all(np.isfinite(m)):
            m = np.where(np.isfinite(m), m, 0.0)
        s = D.asum(D.exp(a - m), axis=axis, keepdims=True)
        out = D.log(s) + m
        if axis is None:
            return D.reshape(out, ())
        return D.reshape(out, tuple(n for i, n in enumerate(np.shape(p)) if i != axis % p.ndim))

    def vjp(self, g, out, a, needs, axis=None):
        shape = _shape(a)
        out_b = _expand_reduced(out, shape, axis, False)
        g_b = _expand_reduced(g, shape, axis, False)
        return (g_b * D.exp(a - out_b),)


class Reshape(Op):
    name = "reshape"

    def forward(self, a, shape):
        return D.reshape(a, shape)

    def vjp(self, g, out, a, needs, shape):
        return (D.reshape(g, _shape(a)),)


class Transpose(Op):
    name = "transpose"

    def forward(self, a):
        return D.transpose(a)

    def vjp(self, g, out, a, needs):
        return (D.transpose(g),)


class GetItem(Op):
    name = "getitem"

    def forward(self, a, idx):
        return a[idx]

    def vjp(self, g, out, a, needs, idx):
        return (D.scatter(_shape(a), idx, g),)


class Concat(Op):
    """Concatenate 1D pieces; used to assemble flat parameter vectors."""

    name = "concat"

    def forward(self, *parts):
        if any(isinstance(p, DualArray) for p in parts):
            return DualArray(
                np.concatenate([np.ravel(primal_of(p)) for p in parts]),
                np.concatenate(
                    [np.ravel(p.tangent) if isinstance(p, DualArray) else np.zeros(np.size(p)) for p in parts]
                ),
            )
        return np.concatenate([np.ravel(p) for p in parts])

    def vjp(self, g, out, *parts, needs):
        res, off = [], 0
        for p, nd in zip(parts, needs):
            n = int(np.size(primal_of(p)))
            res.append(D.reshape(g[off : off + n], _shape(p)) if nd else None)
            off += n
        return tuple(res)


class CheckFinite(Op):
    """Identity that raises :class:`NumericalError` on non-finite input."""

    name = "check_finite"

    def forward(self, a, what="value"):
        p = primal_of(a)
        if not np.all(np.isfinite(p)):
            raise NumericalError(f"non-finite {what}")
        return a

    def vjp(self, g, out, a, needs, what="value"):
        return (g,)


ADD, SUB, MUL, NEG, MATMUL = Add(), Sub(), Mul(), Neg(), MatMul()
SUM, MEAN = Sum(), Mean()
SOFTPLUS, LOGISTIC, TANH, RELU, MAXC = Softplus(), Logistic(), Tanh(), Relu(), MaxConst()
EXP, LOG, RECIP, SQUARE, LSE = Exp(), Log(), Reciprocal(), Square(), LogSumExp()
RESHAPE, TRANSPOSE, GETITEM, CONCAT, CHECK = Reshape(), Transpose(), GetItem(), Concat(), CheckFinite()
