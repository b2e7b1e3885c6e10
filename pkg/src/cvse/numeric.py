"""Dense array kernel with tape-based reverse-mode differentiation.

Values are plain ``numpy`` arrays.  A :class:`Tape` hands out tracked
:class:`Var` leaves via :meth:`Tape.watch`; every primitive applied to a
tracked input appends one node (value, parents, vector-Jacobian product)
to the tape, so the node list is already in topological order and the
reverse sweep is a single backwards walk.

Every primitive in this module accepts ``Var`` or ``ndarray`` operands.
When no operand is tracked the primitive returns a bare ``ndarray`` and
records nothing, so the same model code serves training (tracked) and
inference or finite-difference probes (untracked).
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

from .errors import DegenerateInputError, ParameterError, ShapeError


class Tape:
    """Ordered record of primitive operations for one differentiation pass."""

    def __init__(self):
        self.nodes: list[Var] = []

    def watch(self, value, name: str | None = None) -> "Var":
        """Return a tracked leaf holding ``value`` (not copied)."""
        return Var(np.asarray(value), tape=self, name=name)

    def gradient(self, loss: "Var", wrt):
        """Gradients of the scalar ``loss`` with respect to ``wrt``.

        ``wrt`` may be a single Var, a sequence or a mapping of Vars; the
        result has the same structure.  Parameters that the loss does not
        depend on get exact zeros.  The tape is not consumed, so calling
        this twice yields identical arrays.
        """
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ShapeError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = grads.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not isinstance(parent, Var) or parent.tape is not self:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

        def lookup(v):
            g = grads.get(id(v))
            return np.zeros_like(v.value) if g is None else g

        if isinstance(wrt, Var):
            return lookup(wrt)
        if isinstance(wrt, Mapping):
            return {k: lookup(v) for k, v in wrt.items()}
        return [lookup(v) for v in wrt]


class Var:
    """Array value with an optional link to the tape that produced it."""

    # make ndarray (op) Var defer to Var's reflected operators
    __array_ufunc__ = None

    def __init__(self, value, tape=None, parents=(), vjp=None, name=None):
        self.value = value
        self.tape = tape
        self.name = name
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def T(self):
        return transpose(self)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape}, tracked={self.tape is not None})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis):
        return reduce_max(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a1, a2):
        return swapaxes(self, a1, a2)


# ---------------------------------------------------------------- helpers


def value(x):
    """Underlying ndarray of a Var, or ``x`` itself as an array."""
    return x.value if isinstance(x, Var) else np.asarray(x)


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var) and x.tape is not None:
            if tape is not None and x.tape is not tape:
                raise ValueError("operands recorded on different tapes")
            tape = x.tape
    return tape


def _tracked(x) -> bool:
    return isinstance(x, Var) and x.tape is not None


def _emit(out, parents, vjp):
    tape = _tape_of(*parents)
    if tape is None:
        return out
    node = Var(out, tape, parents, vjp)
    tape.nodes.append(node)
    return node


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ------------------------------------------------------------ elementwise


def add(a, b):
    av, bv = value(a), value(b)
    return _emit(av + bv, (a, b),
                 lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value(a), value(b)
    return _emit(av - bv, (a, b),
                 lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = value(a), value(b)
    need_a, need_b = _tracked(a), _tracked(b)
    return _emit(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, av.shape) if need_a else None,
                            _unbroadcast(g * av, bv.shape) if need_b else None))


def div(a, b):
    av, bv = value(a), value(b)
    return _emit(av / bv, (a, b),
                 lambda g: (_unbroadcast(g / bv, av.shape),
                            _unbroadcast(-g * av / (bv * bv), bv.shape)))


def power(x, p: float):
    xv = value(x)
    return _emit(xv ** p, (x,), lambda g: (g * p * xv ** (p - 1),))


def exp(x):
    out = np.exp(value(x))
    return _emit(out, (x,), lambda g: (g * out,))


def log(x):
    xv = value(x)
    return _emit(np.log(xv), (x,), lambda g: (g / xv,))


def sqrt(x):
    out = np.sqrt(value(x))
    return _emit(out, (x,), lambda g: (0.5 * g / out,))


def tanh(x):
    out = np.tanh(value(x))
    return _emit(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    xv = value(x)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(xv))
    out = np.where(xv >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _emit(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x):
    xv = value(x)
    return _emit(np.maximum(xv, 0.0), (x,), lambda g: (g * (xv > 0),))


def clamp_min(x, floor: float):
    """``max(x, floor)``; gradient passes only where ``x >= floor``."""
    xv = value(x)
    return _emit(np.maximum(xv, floor), (x,), lambda g: (g * (xv >= floor),))


# ------------------------------------------------------------- structural


def matmul(a, b):
    av, bv = value(a), value(b)
    if av.ndim == 0 or bv.ndim == 0:
        raise ShapeError(f"matmul needs at least 1-D operands, got {av.shape} and {bv.shape}")
    inner_b = bv.shape[0] if bv.ndim == 1 else bv.shape[-2]
    if av.shape[-1] != inner_b:
        raise ShapeError(f"matmul shape mismatch: {av.shape} @ {bv.shape}")
    out = av @ bv
    need_a, need_b = _tracked(a), _tracked(b)

    def vjp(g):
        if bv.ndim == 2 and av.ndim >= 2:
            # fold batch dims into rows: one GEMM per operand
            ga = g @ bv.T if need_a else None
            gb = (av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])
                  if need_b else None)
            return ga, gb
        a2 = av[None, :] if av.ndim == 1 else av
        b2 = bv[:, None] if bv.ndim == 1 else bv
        g2 = g
        if bv.ndim == 1:
            g2 = g2[..., None]
        if av.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        ga = _unbroadcast(g2 @ np.swapaxes(b2, -1, -2), a2.shape)
        gb = _unbroadcast(np.swapaxes(a2, -1, -2) @ g2, b2.shape)
        return ga.reshape(av.shape), gb.reshape(bv.shape)

    return _emit(out, (a, b), vjp)


def getitem(x, idx):
    xv = value(x)
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(p is None or p is Ellipsis or isinstance(p, (int, np.integer, slice)) for p in parts)

    def vjp(g):
        gx = np.zeros_like(xv)
        if basic:
            gx[idx] += g
        else:
            np.add.at(gx, idx, g)
        return (gx,)

    return _emit(xv[idx], (x,), vjp)


def reshape(x, shape):
    xv = value(x)
    return _emit(xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),))


def transpose(x):
    return _emit(np.transpose(value(x)), (x,), lambda g: (np.transpose(g),))


def swapaxes(x, a1, a2):
    return _emit(np.swapaxes(value(x), a1, a2), (x,), lambda g: (np.swapaxes(g, a1, a2),))


def stack(xs, axis=0):
    xs = list(xs)
    vals = [value(x) for x in xs]
    out = np.stack(vals, axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(vals)))

    return _emit(out, tuple(xs), vjp)


def concatenate(xs, axis=0):
    xs = list(xs)
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    cuts = np.cumsum([v.shape[axis] for v in vals])[:-1]
    return _emit(out, tuple(xs), lambda g: tuple(np.split(g, cuts, axis=axis)))


# -------------------------------------------------------------- reductions


def reduce_sum(x, axis=None, keepdims=False):
    xv = value(x)
    out = xv.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xv.shape).copy(),)

    return _emit(out, (x,), vjp)


def reduce_mean(x, axis=None, keepdims=False):
    xv = value(x)
    n = xv.size if axis is None else np.prod([xv.shape[a] for a in np.atleast_1d(axis)])
    return reduce_sum(x, axis, keepdims) * (1.0 / n)


def reduce_max(x, axis: int):
    """Max along one axis; the gradient goes to the first maximising entry."""
    xv = value(x)
    idx = np.expand_dims(np.argmax(xv, axis=axis), axis)
    out = np.take_along_axis(xv, idx, axis=axis).squeeze(axis)

    def vjp(g):
        gx = np.zeros_like(xv)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _emit(out, (x,), vjp)


# ------------------------------------------------------- composite kernels


def softmax(x, axis=-1, temperature: float = 1.0, mask=None):
    """``exp(t*x_i) / sum_j exp(t*x_j)`` along ``axis``, max-subtracted.

    ``mask`` (boolean, broadcastable to ``x``) excludes entries: they get
    probability exactly zero and no gradient.
    """
    if not temperature > 0:
        raise ParameterError(f"softmax temperature must be positive, got {temperature}")
    xv = value(x)
    z = temperature * xv
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        if not mask.any(axis=axis).all():
            raise DegenerateInputError("softmax over an all-masked slice")
        z = np.where(mask, z, -np.inf)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (temperature * out * (g - inner),)

    return _emit(out, (x,), vjp)


def row_softmax(x, temperature: float):
    """Softmax of each row of ``temperature * x``."""
    return softmax(x, axis=-1, temperature=temperature)


def l2_normalize(x, axis=-1):
    """Scale ``x`` to unit Euclidean norm along ``axis``.

    Raises DegenerateInputError on a zero vector instead of inventing a
    direction.
    """
    xv = value(x)
    norm = np.sqrt((xv * xv).sum(axis=axis, keepdims=True))
    if np.any(norm == 0):
        raise DegenerateInputError("cannot normalise a zero vector")
    out = xv / norm

    def vjp(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return _emit(out, (x,), vjp)


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two 1-D vectors, clipped to [-1, 1]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeError(f"cosine_similarity needs equal-length vectors, got {u.shape} and {v.shape}")
    nu, nv = math.sqrt(u @ u), math.sqrt(v @ v)
    if nu == 0 or nv == 0:
        raise DegenerateInputError("cosine similarity undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def backward(loss: Var, params):
    """Gradients of ``loss`` w.r.t. ``params`` (Var, list or dict of Vars)."""
    if not isinstance(loss, Var) or loss.tape is None:
        raise ShapeError("loss is not tracked by any tape")
    return loss.tape.gradient(loss, params)


def watch_all(tape: Tape, arrays: Mapping[str, np.ndarray]) -> dict[str, Var]:
    return {name: tape.watch(a, name) for name, a in arrays.items()}


def all_finite(arrays: Iterable) -> bool:
    return all(np.isfinite(value(a)).all() for a in arrays)
