"""
Reverse-mode Gradient Tape

A small numpy tape restricted to the operations the trainer and the
consistency loss need. Every primitive records its output value together with
one vector-Jacobian product per differentiable input; `Tape.gradient` replays
the records backwards and accumulates adjoints.

Usage:
    tape = Tape()
    w = tape.var(np.ones(3))
    loss = ops.sum(ops.square(w * 2.0))
    (dw,) = tape.gradient(loss, [w])
"""

from typing import Callable, Dict, List, Sequence

import numpy as np
from scipy.ndimage import correlate as nd_correlate
from scipy.special import expit, logsumexp as sp_logsumexp


class Var:
    """A value recorded on a tape."""

    __array_priority__ = 100.0
    __array_ufunc__ = None
    __slots__ = ("value", "tape", "index")

    def __init__(self, value, tape: "Tape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return np.shape(self.value)

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def __repr__(self):
        return f"Var(shape={self.shape}, index={self.index})"


class Tape:
    """Ordered record of (value, [(parent index, vjp)]) entries."""

    def __init__(self):
        self.records: List[List] = []

    def var(self, value) -> Var:
        """Leaf variable (a parameter or input to differentiate against)."""
        return self.record(np.asarray(value, dtype=np.float64), [])

    def record(self, value, parents) -> Var:
        self.records.append(parents)
        return Var(value, self, len(self.records) - 1)

    def gradient(self, output: Var, wrt: Sequence[Var], seed=None) -> List[np.ndarray]:
        """
        Adjoints of `output` with respect to every variable in `wrt`.

        Args:
            output (Var): value to differentiate; scalar unless `seed` is given
            wrt (list): variables recorded on this tape
            seed: output adjoint, defaults to ones

        Returns:
            list: one float64 array per entry of `wrt`, shaped like its value
        """
        if output.tape is not self:
            raise ValueError("output was not recorded on this tape")
        adjoints: Dict[int, np.ndarray] = {
            output.index: np.ones_like(output.value) if seed is None else np.asarray(seed)
        }
        for index in range(output.index, -1, -1):
            g = adjoints.get(index)
            if g is None:
                continue
            for parent, vjp in self.records[index]:
                contribution = vjp(g)
                if parent in adjoints:
                    adjoints[parent] = adjoints[parent] + contribution
                else:
                    adjoints[parent] = contribution
        return [np.asarray(adjoints.get(w.index, np.zeros_like(w.value)), dtype=np.float64)
                for w in wrt]


# ============================================================================
# PRIMITIVE MACHINERY
# ============================================================================

def value_of(x):
    return x.value if isinstance(x, Var) else x


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` after numpy broadcasting."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _apply(forward: Callable, args: Sequence, makers: Sequence[Callable]):
    """
    Evaluate a primitive and record it.

    Each maker takes (out, *values) and returns the vjp g -> adjoint of the
    matching argument. Constant arguments get no record.
    """
    tape = next((a.tape for a in args if isinstance(a, Var)), None)
    values = [value_of(a) for a in args]
    out = forward(*values)
    if tape is None:
        return out
    parents = [
        (a.index, make(out, *values))
        for a, make in zip(args, makers)
        if isinstance(a, Var) and make is not None
    ]
    return tape.record(out, parents)


# ============================================================================
# ELEMENTWISE
# ============================================================================

def add(a, b):
    return _apply(
        np.add, [a, b],
        [lambda out, x, y: lambda g: _unbroadcast(g, np.shape(x)),
         lambda out, x, y: lambda g: _unbroadcast(g, np.shape(y))],
    )


def sub(a, b):
    return _apply(
        np.subtract, [a, b],
        [lambda out, x, y: lambda g: _unbroadcast(g, np.shape(x)),
         lambda out, x, y: lambda g: -_unbroadcast(g, np.shape(y))],
    )


def mul(a, b):
    return _apply(
        np.multiply, [a, b],
        [lambda out, x, y: lambda g: _unbroadcast(g * y, np.shape(x)),
         lambda out, x, y: lambda g: _unbroadcast(g * x, np.shape(y))],
    )


def div(a, b):
    return _apply(
        np.divide, [a, b],
        [lambda out, x, y: lambda g: _unbroadcast(g / y, np.shape(x)),
         lambda out, x, y: lambda g: _unbroadcast(-g * x / (y * y), np.shape(y))],
    )


def neg(a):
    return _apply(np.negative, [a], [lambda out, x: lambda g: -g])


def square(a):
    return _apply(np.square, [a], [lambda out, x: lambda g: 2.0 * x * g])


def exp(a):
    return _apply(np.exp, [a], [lambda out, x: lambda g: g * out])


def log(a):
    return _apply(np.log, [a], [lambda out, x: lambda g: g / x])


def sin(a):
    return _apply(np.sin, [a], [lambda out, x: lambda g: g * np.cos(x)])


def sigmoid(a):
    return _apply(expit, [a], [lambda out, x: lambda g: g * out * (1.0 - out)])


def absolute(a):
    """|a| with subgradient 0 at a = 0."""
    return _apply(np.abs, [a], [lambda out, x: lambda g: g * np.sign(x)])


def spike(u, v_th: float, k: float, smooth: bool = False):
    """
    Spike nonlinearity with a sigmoid surrogate derivative.

    The forward pass is Heaviside(u - v_th) (Heaviside(0) = 1), or the sigmoid
    itself when `smooth` is set, in which case the backward pass is exact.
    """
    def forward(x):
        if smooth:
            return expit(k * (x - v_th))
        return (x >= v_th).astype(np.float64)

    def make(out, x):
        s = expit(k * (x - v_th))
        return lambda g: g * k * s * (1.0 - s)

    return _apply(forward, [u], [make])


# ============================================================================
# SHAPE AND REDUCTION
# ============================================================================

def _expand(g, shape, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    return _apply(
        lambda x: np.sum(x, axis=axis, keepdims=keepdims), [a],
        [lambda out, x: lambda g: _expand(g, np.shape(x), axis, keepdims)],
    )


def mean(a, axis=None, keepdims=False):
    shape = np.shape(value_of(a))
    axes = range(len(shape)) if axis is None else np.atleast_1d(axis)
    count = int(np.prod([shape[i] for i in axes]))
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def logsumexp(a, axis=None):
    def make(out, x):
        def vjp(g):
            kept = out if axis is None else np.expand_dims(out, axis)
            g = g if axis is None else np.expand_dims(g, axis)
            return g * np.exp(x - kept)
        return vjp

    return _apply(lambda x: sp_logsumexp(x, axis=axis), [a], [make])


def reshape(a, shape):
    return _apply(
        lambda x: np.reshape(x, shape), [a],
        [lambda out, x: lambda g: np.reshape(g, np.shape(x))],
    )


def getitem(a, index):
    def make(out, x):
        def vjp(g):
            adjoint = np.zeros_like(x, dtype=np.float64)
            np.add.at(adjoint, index, g)
            return adjoint
        return vjp

    return _apply(lambda x: x[index], [a], [make])


def stack(items: Sequence, axis: int = 0):
    """np.stack over a sequence of variables (and constants)."""
    makers = [
        (lambda i: lambda out, *xs: lambda g: np.take(g, i, axis=axis))(i)
        for i in range(len(items))
    ]
    return _apply(lambda *xs: np.stack(xs, axis=axis), list(items), makers)


def matmul(a, b):
    def grad_a(out, x, y):
        return lambda g: _unbroadcast(g @ np.swapaxes(y, -1, -2), np.shape(x))

    def grad_b(out, x, y):
        return lambda g: _unbroadcast(np.swapaxes(x, -1, -2) @ g, np.shape(y))

    return _apply(np.matmul, [a, b], [grad_a, grad_b])


# ============================================================================
# SPATIAL CORRELATION
# ============================================================================

def _fold_replicate_padding(z):
    """Adjoint of one-pixel replicate padding on the last two axes."""
    z = z.copy()
    z[..., 1, :] += z[..., 0, :]
    z[..., -2, :] += z[..., -1, :]
    z = z[..., 1:-1, :]
    z[..., :, 1] += z[..., :, 0]
    z[..., :, -2] += z[..., :, -1]
    return z[..., :, 1:-1]


def correlate_replicate(a, kernel: np.ndarray):
    """
    3 x 3 cross-correlation over the last two axes with replicate borders.

    Matches scipy.ndimage.correlate(x, kernel, mode="nearest") applied
    independently to every leading index.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape != (3, 3):
        raise ValueError(f"expected a 3x3 kernel, got {kernel.shape}")

    def forward(x):
        weights = kernel.reshape((1,) * (np.ndim(x) - 2) + (3, 3))
        return nd_correlate(x, weights, mode="nearest")

    def make(out, x):
        def vjp(g):
            H, W = g.shape[-2:]
            padded = np.zeros(g.shape[:-2] + (H + 2, W + 2))
            for a_row in range(3):
                for a_col in range(3):
                    padded[..., a_row:a_row + H, a_col:a_col + W] += kernel[a_row, a_col] * g
            return _fold_replicate_padding(padded)
        return vjp

    return _apply(forward, [a], [make])
