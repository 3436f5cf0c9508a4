"""The tape, tensors recorded on it, and the differentiation entry points."""

from __future__ import annotations

import numpy as np

from . import ops as O
from .dual import DualArray, primal_of
from .ops import NumericalError

__all__ = ["NumericalError", "Tape", "Tensor", "apply", "grad", "value_and_grad", "hvp"]


class Tensor:
    """A float64 array recorded on a :class:`Tape`."""

    __slots__ = ("value", "id", "tape")
    __array_ufunc__ = None

    def __init__(self, value, node_id, tape):
        self.value = value
        self.id = node_id
        self.tape = tape

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        return f"Tensor(id={self.id}, shape={self.shape})"

    def __add__(self, o):
        return apply(O.ADD, self, o)

    def __radd__(self, o):
        return apply(O.ADD, o, self)

    def __sub__(self, o):
        return apply(O.SUB, self, o)

    def __rsub__(self, o):
        return apply(O.SUB, o, self)

    def __mul__(self, o):
        return apply(O.MUL, self, o)

    def __rmul__(self, o):
        return apply(O.MUL, o, self)

    def __truediv__(self, o):
        if isinstance(o, Tensor):
            return apply(O.MUL, self, apply(O.RECIP, o))
        return apply(O.MUL, self, 1.0 / np.asarray(o, dtype=np.float64))

    def __neg__(self):
        return apply(O.NEG, self)

    def __matmul__(self, o):
        return apply(O.MATMUL, self, o)

    def __rmatmul__(self, o):
        return apply(O.MATMUL, o, self)

    def __getitem__(self, idx):
        return apply(O.GETITEM, self, idx=idx)

    @property
    def T(self):
        return apply(O.TRANSPOSE, self)

    def reshape(self, *shape):
        if len(shape) == 1 and not np.isscalar(shape[0]):
            shape = tuple(shape[0])
        return apply(O.RESHAPE, self, shape=tuple(shape))

    def sum(self, axis=None, keepdims=False):
        return apply(O.SUM, self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return apply(O.MEAN, self, axis=axis, keepdims=keepdims)


class Tape:
    """Append-only record of operations.

    Node ``i`` stores ``(op, refs, kwargs)`` where ``refs`` holds, per
    positional argument, either a parent node id (``int``) or a wrapped
    constant. Leaves have ``op is None``. Ids are assigned in creation order,
    so parents always precede children.
    """

    def __init__(self):
        self.ops = []
        self.refs = []
        self.kwargs = []
        self.values = []

    def __len__(self):
        return len(self.values)

    def _push(self, op, refs, kw, value):
        self.ops.append(op)
        self.refs.append(refs)
        self.kwargs.append(kw)
        self.values.append(value)
        return Tensor(value, len(self.values) - 1, self)

    def var(self, value):
        """Register a leaf (a differentiable input)."""
        return self._push(None, (), {}, np.array(value, dtype=np.float64))

    def backward(self, root, wrt=None):
        """Cotangents of scalar ``root`` for the node ids in ``wrt`` (all if None)."""
        v = self.values[root.id]
        if np.size(v) != 1:
            raise ValueError(f"backward needs a scalar root, got shape {np.shape(v)}")
        adj = self._reverse(root.id, np.ones_like(v), self.values)
        if wrt is None:
            return adj
        out = []
        for t in wrt:
            g = adj.get(t.id)
            out.append(np.zeros_like(self.values[t.id]) if g is None else g)
        return out

    def _reverse(self, root_id, seed, values):
        adj = {root_id: seed}
        for i in range(root_id, -1, -1):
            g = adj.get(i)
            op = self.ops[i]
            if g is None or op is None:
                continue
            refs = self.refs[i]
            args = [values[r] if isinstance(r, int) else r.c for r in refs]
            needs = [isinstance(r, int) for r in refs]
            grads = op.vjp(g, values[i], *args, needs=needs, **self.kwargs[i])
            for r, gr in zip(refs, grads):
                if isinstance(r, int) and gr is not None:
                    prev = adj.get(r)
                    adj[r] = gr if prev is None else prev + gr
        return adj

    def replay(self, seeds, upto):
        """Re-run nodes ``0..upto`` with leaf values overridden by ``seeds``."""
        vals = []
        for i in range(upto + 1):
            op = self.ops[i]
            if op is None:
                vals.append(seeds.get(i, self.values[i]))
                continue
            args = [vals[r] if isinstance(r, int) else r.c for r in self.refs[i]]
            vals.append(op.forward(*args, **self.kwargs[i]))
        return vals

    def hvp(self, root, leaf, v):
        """``(d²root/dleaf²) v`` by replaying with dual leaves, then reversing."""
        x = self.values[leaf.id]
        v = np.asarray(v, dtype=np.float64)
        if v.shape != x.shape:
            raise ValueError(f"tangent shape {v.shape} != argument shape {x.shape}")
        if np.size(self.values[root.id]) != 1:
            raise ValueError("hvp needs a scalar function")
        vals = self.replay({leaf.id: DualArray(x, v)}, root.id)
        adj = self._reverse(root.id, np.ones_like(self.values[root.id]), vals)
        g = adj.get(leaf.id)
        if isinstance(g, DualArray):
            return g.tangent.copy()
        return np.zeros_like(x)


class _Const:
    __slots__ = ("c",)

    def __init__(self, c):
        self.c = c


def apply(op, *args, **kw):
    """Evaluate ``op`` and record it on the tape of its tensor arguments."""
    tape = None
    for a in args:
        if isinstance(a, Tensor):
            if tape is not None and a.tape is not tape:
                raise ValueError("tensors from different tapes cannot be combined")
            tape = a.tape
    vals = [a.value if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64) for a in args]
    out = op.forward(*vals, **kw)
    out = np.asarray(out, dtype=np.float64)
    if tape is None:
        return out
    refs = tuple(a.id if isinstance(a, Tensor) else _Const(v) for a, v in zip(args, vals))
    return tape._push(op, refs, kw, out)


def value_and_grad(f, *xs):
    """Return ``(f(*xs), [df/dx for x in xs])`` for scalar-valued ``f``."""
    tape = Tape()
    ts = [tape.var(x) for x in xs]
    y = f(*ts)
    if not isinstance(y, Tensor):
        return float(np.asarray(y)), [np.zeros_like(np.asarray(x, dtype=np.float64)) for x in xs]
    gs = tape.backward(y, ts)
    return float(primal_of(y.value)), gs


def grad(f, x):
    return value_and_grad(f, x)[1][0]


def hvp(f, x, v):
    """Hessian-vector product of scalar ``f`` at ``x`` along ``v``."""
    tape = Tape()
    xt = tape.var(x)
    y = f(xt)
    if not isinstance(y, Tensor):
        return np.zeros_like(np.asarray(x, dtype=np.float64))
    return tape.hvp(y, xt, v)
