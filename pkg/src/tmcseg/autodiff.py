"""Reverse-mode automatic differentiation over scalars and small vectors.

A :class:`Tape` records every node in creation order; :func:`backward` walks
the record once in reverse, so the graph is rebuilt on each forward pass
(append-only, no reuse). Values are numpy float64 scalars, vectors, or
matrices (matrices only as `matvec` weights). A tape is confined to a single
thread; independent tapes may run concurrently.

Besides the scalar/vector primitives, :func:`make_node` lets callers install
fused operations (a whole network layer as one node) with a hand-written
vector-Jacobian product; such nodes participate in backward like any other.
"""

from __future__ import annotations

import numpy as np


class GraphError(ValueError):
    """Construction or usage contract violated (shapes aside)."""


class ShapeError(GraphError):
    """Operand shapes do not conform."""


class DomainError(ValueError):
    """Primitive applied outside its numeric domain (log/sqrt of x <= 0)."""


class Node:
    """One recorded value. `adjoint` is filled by the backward pass."""

    __slots__ = ("value", "parents", "vjp", "adjoint", "tape")

    def __init__(self, value, parents, vjp, tape):
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.adjoint = None
        self.tape = tape

    def __repr__(self):
        return f"Node(shape={np.shape(self.value)}, leaf={self.vjp is None})"

    # Arithmetic sugar; floats are folded into the op, not stored as leaves.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Node) else add_const(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Node) else add_const(self, -other)

    def __rsub__(self, other):
        return rsub_const(self, other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Node) else mul_const(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Node) else mul_const(self, 1.0 / other)

    def __rtruediv__(self, other):
        return rdiv_const(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Append-only node store; one forward pass plus one backward pass."""

    __slots__ = ("nodes", "_backward_done")

    def __init__(self):
        self.nodes = []
        self._backward_done = False

    def leaf(self, value):
        """Record an input (parameter or constant) node."""
        v = np.asarray(value, dtype=np.float64)
        node = Node(v, (), None, self)
        self.nodes.append(node)
        return node

    def constant(self, value):
        """Alias of `leaf`; reads better for non-parameter inputs."""
        return self.leaf(value)


def make_node(value, parents, vjp):
    """Record a fused operation with an explicit vector-Jacobian product.

    `vjp(adjoint)` must accumulate into each parent via :func:`accumulate`.
    All parents must live on one tape.
    """
    tape = parents[0].tape
    for p in parents[1:]:
        if p.tape is not tape:
            raise GraphError("inputs live on different tapes")
    node = Node(value, tuple(parents), vjp, tape)
    tape.nodes.append(node)
    return node


def accumulate(node, g):
    """Add a gradient contribution to `node` (never mutates in place)."""
    if g.ndim > node.value.ndim:
        g = g.sum()
    node.adjoint = g if node.adjoint is None else node.adjoint + g


def backward(root):
    """Propagate adjoints from a scalar `root` to every node on its tape.

    Visits nodes in reverse creation order exactly once. A second call on
    the same tape is rejected (the adjoints would otherwise double up).
    Returns a map from each leaf node to its gradient (zeros if the leaf
    does not influence the root).
    """
    if root.value.ndim != 0:
        raise GraphError("backward requires a scalar root")
    tape = root.tape
    if tape._backward_done:
        raise GraphError("backward already ran on this tape")
    tape._backward_done = True
    root.adjoint = np.float64(1.0)
    for node in reversed(tape.nodes):
        if node.adjoint is not None and node.vjp is not None:
            node.vjp(node.adjoint)
    grads = {}
    for node in tape.nodes:
        if node.vjp is None:
            grads[node] = node.adjoint if node.adjoint is not None else np.zeros_like(node.value)
    return grads


def _same_tape(a, b):
    if a.tape is not b.tape:
        raise GraphError("inputs live on different tapes")
    return a.tape


def _conform(a, b, op):
    # Same shape, or scalar paired with a vector.
    if a.value.shape != b.value.shape and a.value.ndim != 0 and b.value.ndim != 0:
        raise ShapeError(f"{op}: shapes {a.value.shape} and {b.value.shape} do not conform")


# --- binary arithmetic ----------------------------------------------------

def add(a, b):
    tape = _same_tape(a, b)
    _conform(a, b, "add")
    out = Node(a.value + b.value, (a, b), None, tape)

    def vjp(adj):
        accumulate(a, adj)
        accumulate(b, adj)

    out.vjp = vjp
    tape.nodes.append(out)
    return out


def sub(a, b):
    tape = _same_tape(a, b)
    _conform(a, b, "sub")
    out = Node(a.value - b.value, (a, b), None, tape)

    def vjp(adj):
        accumulate(a, adj)
        accumulate(b, -adj)

    out.vjp = vjp
    tape.nodes.append(out)
    return out


def mul(a, b):
    tape = _same_tape(a, b)
    _conform(a, b, "mul")
    out = Node(a.value * b.value, (a, b), None, tape)

    def vjp(adj):
        accumulate(a, adj * b.value)
        accumulate(b, adj * a.value)

    out.vjp = vjp
    tape.nodes.append(out)
    return out


def div(a, b):
    tape = _same_tape(a, b)
    _conform(a, b, "div")
    out = Node(a.value / b.value, (a, b), None, tape)

    def vjp(adj):
        accumulate(a, adj / b.value)
        accumulate(b, -adj * out.value / b.value)

    out.vjp = vjp
    tape.nodes.append(out)
    return out


def neg(a):
    out = Node(-a.value, (a,), None, a.tape)

    def vjp(adj):
        accumulate(a, -adj)

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


# --- constant-folded variants (no node for the constant) ------------------

def add_const(a, c):
    c = float(c)
    out = Node(a.value + c, (a,), None, a.tape)

    def vjp(adj):
        accumulate(a, adj)

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


def rsub_const(a, c):
    c = float(c)
    out = Node(c - a.value, (a,), None, a.tape)

    def vjp(adj):
        accumulate(a, -adj)

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


def mul_const(a, c):
    c = float(c)
    out = Node(a.value * c, (a,), None, a.tape)

    def vjp(adj):
        accumulate(a, adj * c)

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


def rdiv_const(a, c):
    c = float(c)
    out = Node(c / a.value, (a,), None, a.tape)

    def vjp(adj):
        accumulate(a, -adj * out.value / a.value)

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


# --- linear algebra -------------------------------------------------------

def matvec(w, v):
    tape = _same_tape(w, v)
    if w.value.ndim != 2 or v.value.ndim != 1 or w.value.shape[1] != v.value.shape[0]:
        raise ShapeError(f"matvec: {w.value.shape} @ {v.value.shape}")
    out = Node(w.value @ v.value, (w, v), None, tape)

    def vjp(adj):
        accumulate(w, np.outer(adj, v.value))
        accumulate(v, w.value.T @ adj)

    out.vjp = vjp
    tape.nodes.append(out)
    return out


def dot(a, b):
    tape = _same_tape(a, b)
    if a.value.shape != b.value.shape or a.value.ndim != 1:
        raise ShapeError(f"dot: {a.value.shape} . {b.value.shape}")
    out = Node(a.value @ b.value, (a, b), None, tape)

    def vjp(adj):
        accumulate(a, adj * b.value)
        accumulate(b, adj * a.value)

    out.vjp = vjp
    tape.nodes.append(out)
    return out


def concat(nodes):
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise GraphError("inputs live on different tapes")
    for n in nodes:
        if n.value.ndim != 1:
            raise ShapeError("concat expects vectors")
    out = Node(np.concatenate([n.value for n in nodes]), tuple(nodes), None, tape)
    sizes = [n.value.shape[0] for n in nodes]

    def vjp(adj):
        off = 0
        for n, s in zip(nodes, sizes):
            accumulate(n, adj[off:off + s])
            off += s

    out.vjp = vjp
    tape.nodes.append(out)
    return out


def split(a, sizes):
    """Cut a vector into consecutive segments (inverse of concat)."""
    if a.value.ndim != 1 or sum(sizes) != a.value.shape[0]:
        raise ShapeError(f"split: sizes {sizes} vs length {a.value.shape}")
    outs = []
    off = 0
    for s in sizes:
        lo = off

        def vjp(adj, lo=lo, s=s):
            g = np.zeros_like(a.value)
            g[lo:lo + s] = adj
            accumulate(a, g)

        node = Node(a.value[off:off + s].copy(), (a,), vjp, a.tape)
        a.tape.nodes.append(node)
        outs.append(node)
        off += s
    return tuple(outs)


def vsum(a):
    """Sum a vector to a scalar (the `sum` primitive)."""
    if a.value.ndim != 1:
        raise ShapeError("vsum expects a vector")
    out = Node(a.value.sum(), (a,), None, a.tape)
    n = a.value.shape[0]

    def vjp(adj):
        accumulate(a, np.full(n, float(adj)))

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


def add_n(nodes):
    """Sum many same-shaped nodes in one step (cheap accumulator)."""
    if not nodes:
        raise GraphError("add_n needs at least one input")
    tape = nodes[0].tape
    total = nodes[0].value
    for n in nodes[1:]:
        if n.tape is not tape:
            raise GraphError("inputs live on different tapes")
        total = total + n.value
    out = Node(total, tuple(nodes), None, tape)

    def vjp(adj):
        for n in nodes:
            accumulate(n, adj)

    out.vjp = vjp
    tape.nodes.append(out)
    return out


# --- elementwise nonlinearities -------------------------------------------

def _unary(a, value, dvalue):
    out = Node(value, (a,), None, a.tape)

    def vjp(adj):
        accumulate(a, adj * dvalue())

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


def exp(a):
    out = _unary(a, np.exp(a.value), None)
    out.vjp = lambda adj: accumulate(a, adj * out.value)
    return out


def log(a):
    if np.any(a.value <= 0):
        raise DomainError("log of non-positive value")
    return _unary(a, np.log(a.value), lambda: 1.0 / a.value)


def sqrt(a):
    if np.any(a.value <= 0):
        raise DomainError("sqrt of non-positive value")
    out = _unary(a, np.sqrt(a.value), None)
    out.vjp = lambda adj: accumulate(a, adj / (2.0 * out.value))
    return out


def sin(a):
    return _unary(a, np.sin(a.value), lambda: np.cos(a.value))


def tanh(a):
    out = _unary(a, np.tanh(a.value), None)
    out.vjp = lambda adj: accumulate(a, adj * (1.0 - out.value * out.value))
    return out


def relu(a):
    out = _unary(a, np.maximum(a.value, 0.0), None)
    out.vjp = lambda adj: accumulate(a, adj * (a.value > 0))
    return out


def expit(x):
    """Numerically stable logistic function (plain numpy, not a node op)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    out = _unary(a, expit(a.value), None)
    out.vjp = lambda adj: accumulate(a, adj * out.value * (1.0 - out.value))
    return out


def softplus_values(x):
    """log(1+exp(x)) computed as log1p(exp(-|x|)) + max(x, 0); overflow-safe."""
    x = np.asarray(x, dtype=np.float64)
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def softplus(a):
    return _unary(a, softplus_values(a.value), lambda: expit(a.value))


def square(a):
    return _unary(a, a.value * a.value, lambda: 2.0 * a.value)


def softmax(a):
    """Softmax of a logit vector; the max shift is treated as a constant."""
    if a.value.ndim != 1:
        raise ShapeError("softmax expects a vector")
    e = np.exp(a.value - np.max(a.value))
    s = e / e.sum()
    out = Node(s, (a,), None, a.tape)

    def vjp(adj):
        accumulate(a, s * (adj - adj @ s))

    out.vjp = vjp
    a.tape.nodes.append(out)
    return out


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matvec": matvec,
    "dot": dot,
    "concat": concat,
    "sum": vsum,
    "exp": exp,
    "log": log,
    "sin": sin,
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "square": square,
    "sqrt": sqrt,
}


def primitive(op, *inputs):
    """Apply a named primitive; `concat` takes its inputs as one list."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise GraphError(f"unknown primitive {op!r}") from None
    if op == "concat":
        return fn(list(inputs))
    return fn(*inputs)
