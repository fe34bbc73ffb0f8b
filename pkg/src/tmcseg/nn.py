"""Neural building blocks and the optimizer.

Layers own their numpy parameter arrays and know how to place themselves on a
:class:`~tmcseg.autodiff.Tape`. The graph-side forward passes are fused: one
tape node per layer application, with a handwritten backward rule, which keeps
tapes for long sequences small. Each layer also has a value-only `*_values`
path (no tape, batched over leading axes) used by samplers and decoders.

Layers cache their tape leaves for the most recent tape, so a layer must not
be evaluated on two tapes concurrently; training is single-threaded per model.
"""

from __future__ import annotations

import json
import numpy as np

from . import autodiff as ad
from .autodiff import expit, softplus_values

HEAD_KINDS = ("linear", "softplus", "sigmoid")


def glorot(rng, fan_out, fan_in):
    """Glorot-uniform weight draw of shape (fan_out, fan_in)."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


class _Layer:
    """Shared parameter bookkeeping: named arrays plus per-tape leaf cache."""

    def __init__(self, name, param_names):
        self.name = name
        self._param_names = list(param_names)
        self._tape = None
        self._leaves = None

    def param_items(self):
        return [(f"{self.name}.{p}", getattr(self, p)) for p in self._param_names]

    def n_params(self):
        return sum(arr.size for _, arr in self.param_items())

    def set_param(self, full_name, value):
        prefix, _, p = full_name.rpartition(".")
        if prefix != self.name or p not in self._param_names:
            raise KeyError(full_name)
        current = getattr(self, p)
        value = np.asarray(value, dtype=np.float64)
        if value.shape != current.shape:
            raise ValueError(f"{full_name}: shape {value.shape} != {current.shape}")
        setattr(self, p, value)
        self._tape = None  # stale leaves must not be reused

    def bind(self, tape):
        """Return this layer's parameter leaves on `tape`, creating them once."""
        if self._tape is not tape:
            self._leaves = tuple(tape.leaf(getattr(self, p)) for p in self._param_names)
            self._tape = tape
        return self._leaves

    def leaf_items(self):
        """(name, leaf) pairs for the most recently bound tape."""
        if self._tape is None:
            return []
        return list(zip((f"{self.name}.{p}" for p in self._param_names), self._leaves))


class Mlp2(_Layer):
    """Two rectified-linear hidden layers and a head (linear/softplus/sigmoid).

    The softplus head is positive for all inputs representable without
    underflow (|pre-activation| below ~700).
    """

    def __init__(self, name, input_dim, hidden_dim, output_dim, head_kind="linear", rng=None):
        # input_dim 0 is legal: the net is a learnable constant of its biases,
        # which is exactly what degenerate (empty-latent) conditioning needs.
        if input_dim < 0 or min(hidden_dim, output_dim) <= 0:
            raise ValueError("dimensions must be positive")
        if head_kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {head_kind!r}")
        super().__init__(name, ("W1", "b1", "W2", "b2", "W3", "b3"))
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.output_dim = output_dim
        self.head_kind = head_kind
        self.W1 = np.zeros((hidden_dim, input_dim))
        self.b1 = np.zeros(hidden_dim)
        self.W2 = np.zeros((hidden_dim, hidden_dim))
        self.b2 = np.zeros(hidden_dim)
        self.W3 = np.zeros((output_dim, hidden_dim))
        self.b3 = np.zeros(output_dim)
        if rng is not None:
            self.init(rng)

    def init(self, rng):
        self.W1 = glorot(rng, self.hidden_dim, self.input_dim)
        self.W2 = glorot(rng, self.hidden_dim, self.hidden_dim)
        self.W3 = glorot(rng, self.output_dim, self.hidden_dim)
        self.b1 = np.zeros(self.hidden_dim)
        self.b2 = np.zeros(self.hidden_dim)
        self.b3 = np.zeros(self.output_dim)
        self._tape = None


def mlp_forward(net, x):
    """Apply `net` to node `x`; one fused tape node, differentiable throughout."""
    if x.value.shape != (net.input_dim,):
        raise ad.ShapeError(f"{net.name}: input {x.value.shape}, expected ({net.input_dim},)")
    W1l, b1l, W2l, b2l, W3l, b3l = net.bind(x.tape)
    W1, b1, W2, b2, W3, b3 = (n.value for n in (W1l, b1l, W2l, b2l, W3l, b3l))
    z1 = W1 @ x.value + b1
    h1 = np.maximum(z1, 0.0)
    z2 = W2 @ h1 + b2
    h2 = np.maximum(z2, 0.0)
    z3 = W3 @ h2 + b3
    kind = net.head_kind
    if kind == "linear":
        out = z3
    elif kind == "softplus":
        out = softplus_values(z3)
    else:
        out = expit(z3)

    def vjp(adj):
        if kind == "linear":
            d3 = adj
        elif kind == "softplus":
            d3 = adj * expit(z3)
        else:
            d3 = adj * out * (1.0 - out)
        ad.accumulate(W3l, np.outer(d3, h2))
        ad.accumulate(b3l, d3)
        d2 = (W3.T @ d3) * (z2 > 0)
        ad.accumulate(W2l, np.outer(d2, h1))
        ad.accumulate(b2l, d2)
        d1 = (W2.T @ d2) * (z1 > 0)
        ad.accumulate(W1l, np.outer(d1, x.value))
        ad.accumulate(b1l, d1)
        ad.accumulate(x, W1.T @ d1)

    return ad.make_node(out, (W1l, b1l, W2l, b2l, W3l, b3l, x), vjp)


def mlp_values(net, X):
    """Value-only apply; `X` has shape (..., input_dim)."""
    X = np.asarray(X, dtype=np.float64)
    H1 = np.maximum(X @ net.W1.T + net.b1, 0.0)
    H2 = np.maximum(H1 @ net.W2.T + net.b2, 0.0)
    Z3 = H2 @ net.W3.T + net.b3
    if net.head_kind == "softplus":
        return softplus_values(Z3)
    if net.head_kind == "sigmoid":
        return expit(Z3)
    return Z3


class RnnCell(_Layer):
    """Recurrent cell: vanilla tanh by default, GRU as an option."""

    def __init__(self, name, input_dim, state_dim, kind="tanh", rng=None):
        if min(input_dim, state_dim) <= 0:
            raise ValueError("dimensions must be positive")
        if kind not in ("tanh", "gru"):
            raise ValueError(f"unknown cell kind {kind!r}")
        names = ("W", "b") if kind == "tanh" else ("Wz", "bz", "Wr", "br", "Wh", "bh")
        super().__init__(name, names)
        self.input_dim = input_dim
        self.state_dim = state_dim
        self.kind = kind
        for w in names:
            if w.startswith("W"):
                setattr(self, w, np.zeros((state_dim, input_dim + state_dim)))
            else:
                setattr(self, w, np.zeros(state_dim))
        if rng is not None:
            self.init(rng)

    def init(self, rng):
        for w in self._param_names:
            if w.startswith("W"):
                setattr(self, w, glorot(rng, self.state_dim, self.input_dim + self.state_dim))
            else:
                setattr(self, w, np.zeros(self.state_dim))
        self._tape = None


def rnn_step(cell, x, state):
    """One recurrence step on the tape; returns the new state node."""
    if x.value.shape != (cell.input_dim,) or state.value.shape != (cell.state_dim,):
        raise ad.ShapeError(
            f"{cell.name}: input {x.value.shape}/state {state.value.shape}, "
            f"expected ({cell.input_dim},)/({cell.state_dim},)"
        )
    if cell.kind == "gru":
        return _gru_step(cell, x, state)
    Wl, bl = cell.bind(x.tape)
    u = np.concatenate([x.value, state.value])
    h = np.tanh(Wl.value @ u + bl.value)
    nx = cell.input_dim

    def vjp(adj):
        d = adj * (1.0 - h * h)
        ad.accumulate(Wl, np.outer(d, u))
        ad.accumulate(bl, d)
        gu = Wl.value.T @ d
        ad.accumulate(x, gu[:nx])
        ad.accumulate(state, gu[nx:])

    return ad.make_node(h, (Wl, bl, x, state), vjp)


def _gru_step(cell, x, state):
    # Composed from primitives; the GRU path is optional and not speed-critical.
    Wzl, bzl, Wrl, brl, Whl, bhl = cell.bind(x.tape)
    u = ad.concat([x, state])
    z = ad.sigmoid(ad.add(ad.matvec(Wzl, u), bzl))
    r = ad.sigmoid(ad.add(ad.matvec(Wrl, u), brl))
    ur = ad.concat([x, ad.mul(r, state)])
    hh = ad.tanh(ad.add(ad.matvec(Whl, ur), bhl))
    keep = ad.mul(ad.rsub_const(z, 1.0), state)
    return ad.add(keep, ad.mul(z, hh))


def rnn_values(cell, x, state):
    """Value-only step; both arguments are plain arrays."""
    if cell.kind == "gru":
        u = np.concatenate([x, state])
        z = expit(cell.Wz @ u + cell.bz)
        r = expit(cell.Wr @ u + cell.br)
        hh = np.tanh(cell.Wh @ np.concatenate([x, r * state]) + cell.bh)
        return (1.0 - z) * state + z * hh
    return np.tanh(cell.W @ np.concatenate([x, state]) + cell.b)


class BiRnnEncoder:
    """Forward and backward recurrences plus a linear projection per step."""

    def __init__(self, name, input_dim, state_dim, code_dim, kind="tanh", rng=None):
        self.name = name
        self.input_dim = input_dim
        self.state_dim = state_dim
        self.code_dim = code_dim
        self.fwd = RnnCell(f"{name}.fwd", input_dim, state_dim, kind=kind)
        self.bwd = RnnCell(f"{name}.bwd", input_dim, state_dim, kind=kind)
        self.proj = _Affine(f"{name}.proj", 2 * state_dim, code_dim)
        if rng is not None:
            self.init(rng)

    def init(self, rng):
        self.fwd.init(rng)
        self.bwd.init(rng)
        self.proj.init(rng)

    def param_items(self):
        return self.fwd.param_items() + self.bwd.param_items() + self.proj.param_items()

    def n_params(self):
        return sum(arr.size for _, arr in self.param_items())

    def set_param(self, full_name, value):
        for part in (self.fwd, self.bwd, self.proj):
            if full_name.startswith(part.name + "."):
                part.set_param(full_name, value)
                return
        raise KeyError(full_name)

    def leaf_items(self):
        return self.fwd.leaf_items() + self.bwd.leaf_items() + self.proj.leaf_items()


class _Affine(_Layer):
    """Single linear map; used as the encoder projection."""

    def __init__(self, name, input_dim, output_dim, rng=None):
        super().__init__(name, ("W", "b"))
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.W = np.zeros((output_dim, input_dim))
        self.b = np.zeros(output_dim)
        if rng is not None:
            self.init(rng)

    def init(self, rng):
        self.W = glorot(rng, self.output_dim, self.input_dim)
        self.b = np.zeros(self.output_dim)
        self._tape = None


def _affine_pair(layer, a, b):
    """Fused W @ concat(a, b) + bias without an intermediate concat node."""
    Wl, bl = layer.bind(a.tape)
    u = np.concatenate([a.value, b.value])
    out = Wl.value @ u + bl.value
    na = a.value.shape[0]

    def vjp(adj):
        ad.accumulate(Wl, np.outer(adj, u))
        ad.accumulate(bl, adj)
        gu = Wl.value.T @ adj
        ad.accumulate(a, gu[:na])
        ad.accumulate(b, gu[na:])

    return ad.make_node(out, (Wl, bl, a, b), vjp)


def birnn_encode(enc, xs):
    """Per-step codes for a non-empty sequence of input nodes.

    code_t = proj([fwd-state_t; bwd-state_t]); every code depends on the
    whole input sequence through the two recurrences.
    """
    if not xs:
        raise ValueError("birnn_encode: empty sequence")
    tape = xs[0].tape
    zero = tape.leaf(np.zeros(enc.fwd.state_dim))
    fwd_states = []
    h = zero
    for x in xs:
        h = rnn_step(enc.fwd, x, h)
        fwd_states.append(h)
    bwd_states = [None] * len(xs)
    h = zero
    for t in range(len(xs) - 1, -1, -1):
        h = rnn_step(enc.bwd, xs[t], h)
        bwd_states[t] = h
    return [_affine_pair(enc.proj, f, b) for f, b in zip(fwd_states, bwd_states)]


def birnn_encode_values(enc, X):
    """Value-only codes for inputs of shape (T, input_dim)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("birnn_encode_values: empty sequence")
    F = np.empty((n, enc.fwd.state_dim))
    B = np.empty((n, enc.bwd.state_dim))
    h = np.zeros(enc.fwd.state_dim)
    for t in range(n):
        h = rnn_values(enc.fwd, X[t], h)
        F[t] = h
    h = np.zeros(enc.bwd.state_dim)
    for t in range(n - 1, -1, -1):
        h = rnn_values(enc.bwd, X[t], h)
        B[t] = h
    return np.concatenate([F, B], axis=1) @ enc.proj.W.T + enc.proj.b


# --- parameter collections -------------------------------------------------

def init_params(layers, seed):
    """Reinitialize every layer from one seeded stream; returns the values."""
    rng = np.random.default_rng(seed)
    for layer in layers:
        layer.init(rng)
    return collect_params(layers)


def collect_params(layers):
    out = {}
    for layer in layers:
        for name, arr in layer.param_items():
            if name in out:
                raise ValueError(f"duplicate parameter name {name}")
            out[name] = arr
    return out


def collect_grads(layers, grad_map):
    """Map a backward() result onto parameter names (zeros when unreached)."""
    out = {}
    for layer in layers:
        for name, leaf in layer.leaf_items():
            g = grad_map.get(leaf)
            if g is None:
                g = leaf.adjoint
            out[name] = np.zeros_like(leaf.value) if g is None else np.asarray(g, dtype=np.float64)
    return out


def apply_params(layers, params):
    """Write a name → array mapping back into the owning layers."""
    for name, value in params.items():
        for layer in layers:
            if name.startswith(layer.name + "."):
                layer.set_param(name, value)
                break
        else:
            raise KeyError(f"no layer owns parameter {name}")


# --- Adam -------------------------------------------------------------------

class AdamState:
    """Bias-corrected Adam moments for a named parameter collection."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.rejected = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(state, params, grads):
    """One Adam update; returns new parameter arrays, mutates `state`.

    If any gradient is non-finite the whole step is rejected: parameters and
    moments are untouched and `state.rejected` is incremented.
    """
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            state.rejected += 1
            return params
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    scale = state.lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    new = {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            new[k] = p
            continue
        m = state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        v = state.v[k] = b2 * state.v[k] + (1.0 - b2) * (g * g)
        new[k] = p - scale * m / (np.sqrt(v) + state.eps)
    return new


# --- checkpoints -------------------------------------------------------------

CHECKPOINT_FORMAT = "tmcseg-checkpoint-v1"


def save_params(path, kind, dims, params, seed=None, step=0):
    """Write a versioned structured-text checkpoint."""
    record = {
        "format": CHECKPOINT_FORMAT,
        "kind": kind,
        "dims": dims,
        "seed": seed,
        "step": step,
        "params": {
            name: {"shape": list(arr.shape), "data": np.ravel(arr).tolist()}
            for name, arr in params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh)


def load_params(path):
    """Read a checkpoint; returns (kind, dims, params, meta)."""
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    params = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in record["params"].items()
    }
    meta = {"seed": record.get("seed"), "step": record.get("step", 0)}
    return record["kind"], record["dims"], params, meta
