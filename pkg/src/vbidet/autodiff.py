"""Minimal reverse-mode automatic differentiation over complex NumPy arrays.

The detector forward passes are written against the dispatching helpers in
this module (``matmul``, ``conj``, ``absq``, ...), which act as plain NumPy
when every operand is an array and build a tape when any operand is a
:class:`Node`.  One forward implementation therefore serves both the fast
evaluation path and training.

Gradient convention: for a real scalar loss L and a complex tensor
``w = u + iv`` the stored adjoint is ``dL/du + 1j * dL/dv``.  Leaves whose
values are real dtype accumulate only the real part, which makes gradients
of real parameters through complex intermediates exact without any
Wirtinger bookkeeping.  All learnable parameters in this package are real.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Node",
    "leaf",
    "value_of",
    "detach",
    "backward",
    "matmul",
    "conj",
    "adjoint",
    "real",
    "imag",
    "absq",
    "exp",
    "log",
    "sqrt",
    "maximum",
    "asum",
    "reshape",
    "solve",
]


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce gradient ``g`` to ``shape`` by summing broadcast axes."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Node:
    """One tape entry: a value plus vjp closures onto its parents."""

    __slots__ = ("value", "parents", "grad")
    __array_ufunc__ = None  # make NumPy defer binary ops to our dunders
    __array_priority__ = 1000

    def __init__(self, value, parents=()):
        self.value = np.asarray(value)
        self.parents = parents  # tuple of (Node, vjp) pairs
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    def _accum(self, g):
        g = _unbroadcast(g, self.value.shape)
        if not np.iscomplexobj(self.value):
            g = np.real(g)
        self.grad = g if self.grad is None else self.grad + g

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        a, b = self, other
        out = Node(value_of(a) + value_of(b))
        out.parents = _links(out, (a, lambda g: g), (b, lambda g: g))
        return out

    __radd__ = __add__

    def __sub__(self, other):
        out = Node(value_of(self) - value_of(other))
        out.parents = _links(out, (self, lambda g: g), (other, lambda g: -g))
        return out

    def __rsub__(self, other):
        out = Node(value_of(other) - value_of(self))
        out.parents = _links(out, (other, lambda g: g), (self, lambda g: -g))
        return out

    def __mul__(self, other):
        av, bv = value_of(self), value_of(other)
        out = Node(av * bv)
        out.parents = _links(
            out, (self, lambda g: g * np.conj(bv)), (other, lambda g: g * np.conj(av))
        )
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        av, bv = value_of(self), value_of(other)
        out = Node(av / bv)
        out.parents = _links(
            out,
            (self, lambda g: g * np.conj(1.0 / bv)),
            (other, lambda g: g * np.conj(-av / (bv * bv))),
        )
        return out

    def __rtruediv__(self, other):
        av, bv = value_of(other), value_of(self)
        out = Node(av / bv)
        out.parents = _links(
            out,
            (other, lambda g: g * np.conj(1.0 / bv)),
            (self, lambda g: g * np.conj(-av / (bv * bv))),
        )
        return out

    def __neg__(self):
        return Node(-self.value, ((self, lambda g: -g),))

    def __pow__(self, n):
        if not isinstance(n, (int, float)):
            raise TypeError("only constant exponents are supported")
        av = self.value
        return Node(av**n, ((self, lambda g: g * np.conj(n * av ** (n - 1))),))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, dtype={self.value.dtype})"


def _links(out, *pairs):
    return tuple((p, vjp) for p, vjp in pairs if isinstance(p, Node))


def leaf(value) -> Node:
    """Create a differentiable leaf holding ``value``."""
    return Node(np.asarray(value, dtype=np.float64))


def value_of(x):
    """Underlying array of a Node, or ``x`` itself."""
    return x.value if isinstance(x, Node) else x


def detach(x):
    """Constant copy of a (possibly tracked) value; gradients do not flow."""
    return np.array(value_of(x), copy=True)


def backward(root: Node) -> None:
    """Accumulate gradients of the scalar ``root`` into every reachable leaf."""
    if value_of(root).size != 1:
        raise ValueError("backward requires a scalar root")
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    root.grad = np.ones_like(np.real(root.value))
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            parent._accum(vjp(node.grad))


# -- dispatching helpers (NumPy when untracked, tape ops otherwise) ---------


def _is_node(*xs) -> bool:
    return any(isinstance(x, Node) for x in xs)


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if not _is_node(a, b):
        return av @ bv
    out = Node(av @ bv)
    ah = np.swapaxes(av, -1, -2).conj()
    bh = np.swapaxes(bv, -1, -2).conj()
    out.parents = _links(out, (a, lambda g: g @ bh), (b, lambda g: ah @ g))
    return out


def conj(a):
    if not _is_node(a):
        return np.conj(a)
    return Node(np.conj(a.value), ((a, lambda g: np.conj(g)),))


def adjoint(a):
    """Conjugate transpose of the trailing two axes."""
    if not _is_node(a):
        return np.swapaxes(a, -1, -2).conj()
    return Node(
        np.swapaxes(a.value, -1, -2).conj(),
        ((a, lambda g: np.swapaxes(g, -1, -2).conj()),),
    )


def real(a):
    if not _is_node(a):
        return np.real(a)
    return Node(np.real(a.value), ((a, lambda g: g),))


def imag(a):
    if not _is_node(a):
        return np.imag(a)
    return Node(np.imag(a.value), ((a, lambda g: 1j * g),))


def absq(a):
    """Squared modulus |a|^2, a real array."""
    if not _is_node(a):
        av = np.asarray(a)
        return (av * av.conj()).real if np.iscomplexobj(av) else av * av
    av = a.value
    return Node((av * av.conj()).real if np.iscomplexobj(av) else av * av,
                ((a, lambda g: 2.0 * g * av),))


def exp(a):
    if not _is_node(a):
        return np.exp(a)
    ev = np.exp(a.value)
    return Node(ev, ((a, lambda g: g * ev),))


def log(a):
    if not _is_node(a):
        return np.log(a)
    return Node(np.log(a.value), ((a, lambda g: g / a.value),))


def sqrt(a):
    if not _is_node(a):
        return np.sqrt(a)
    sv = np.sqrt(a.value)
    return Node(sv, ((a, lambda g: g / (2.0 * sv)),))


def maximum(a, floor):
    """Elementwise max against a constant floor (clamp)."""
    if not _is_node(a):
        return np.maximum(a, floor)
    mask = a.value > floor
    return Node(np.maximum(a.value, floor), ((a, lambda g: g * mask),))


def asum(a, axis=None, keepdims=False):
    """Sum reduction (named to avoid shadowing the builtin)."""
    if not _is_node(a):
        return np.sum(a, axis=axis, keepdims=keepdims)
    av = a.value
    out_val = np.sum(av, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, av.shape)
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, av.shape)

    return Node(out_val, ((a, vjp),))


def reshape(a, shape):
    if not _is_node(a):
        return np.reshape(a, shape)
    old = a.value.shape
    return Node(np.reshape(a.value, shape), ((a, lambda g: np.reshape(g, old)),))


def solve(a, b):
    """Solve A X = B for Hermitian positive-definite A (differentiable)."""
    av, bv = value_of(a), value_of(b)
    if not _is_node(a, b):
        return np.linalg.solve(av, bv)
    x = np.linalg.solve(av, bv)
    out = Node(x)
    xh = np.swapaxes(x, -1, -2).conj()
    # A Hermitian: A^H = A, so both vjps reuse solves against A itself.
    out.parents = _links(
        out,
        (b, lambda g: np.linalg.solve(av, g)),
        (a, lambda g: -np.linalg.solve(av, g) @ xh),
    )
    return out
