"""Functional wrappers recording primitive ops on the active tape.

Each accepts :class:`~.tape.Tensor` or plain arrays; with no tensor argument
the plain result is returned and nothing is recorded.
"""

from . import ops as O
from .tape import apply


def add(a, b):
    return apply(O.ADD, a, b)


def sub(a, b):
    return apply(O.SUB, a, b)


def mul(a, b):
    return apply(O.MUL, a, b)


def matmul(a, b):
    return apply(O.MATMUL, a, b)


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    return apply(O.SUM, a, axis=axis, keepdims=keepdims)


def mean(a, axis=None, keepdims=False):
    return apply(O.MEAN, a, axis=axis, keepdims=keepdims)


def softplus(a):
    return apply(O.SOFTPLUS, a)


def logistic(a):
    return apply(O.LOGISTIC, a)


def tanh(a):
    return apply(O.TANH, a)


def relu(a):
    return apply(O.RELU, a)


def maximum(a, c=0.0):
    return apply(O.MAXC, a, c=float(c))


def exp(a):
    return apply(O.EXP, a)


def log(a):
    return apply(O.LOG, a)


def reciprocal(a):
    return apply(O.RECIP, a)


def square(a):
    return apply(O.SQUARE, a)


def logsumexp(a, axis=None):
    return apply(O.LSE, a, axis=axis)


def reshape(a, shape):
    return apply(O.RESHAPE, a, shape=tuple(shape))


def transpose(a):
    return apply(O.TRANSPOSE, a)


def concat(*parts):
    return apply(O.CONCAT, *parts)


def check_finite(a, what="value"):
    return apply(O.CHECK, a, what=what)
