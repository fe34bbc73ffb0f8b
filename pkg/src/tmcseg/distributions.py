"""Probability primitives with reparameterized sampling.

Diagonal Gaussians and (relaxed) categorical labels, each with a graph path
(fused tape nodes, differentiable w.r.t. distribution parameters) and a
value-only path for batched sampling. Noise is always drawn externally and
passed in, so the same draws can feed either path.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import softplus_values

LOG_2PI = float(np.log(2.0 * np.pi))

# Floor added to softplus std heads so KL terms cannot blow up.
STD_FLOOR = 1e-4

# Probabilities below this are clamped before log; each clamp is counted.
PROB_EPS = 1e-12
clamp_events = 0


def reset_clamp_events():
    global clamp_events
    clamp_events = 0


def _value(x):
    return x.value if isinstance(x, ad.Node) else np.asarray(x, dtype=np.float64)


def _as_node(x, tape):
    return x if isinstance(x, ad.Node) else tape.leaf(x)


def _find_tape(*parts):
    for p in parts:
        if isinstance(p, ad.Node):
            return p.tape
    raise ad.GraphError("at least one argument must already be a tape node")


class DiagGaussian:
    """Diagonal Gaussian; mean/std may be tape nodes or plain arrays."""

    def __init__(self, mean, std):
        mv, sv = _value(mean), _value(std)
        if mv.shape != sv.shape or mv.ndim != 1:
            raise ValueError(f"mean/std shapes {mv.shape} vs {sv.shape}")
        if np.any(sv <= 0):
            raise ValueError("std must be strictly positive")
        self.mean = mean
        self.std = std

    @property
    def dim(self):
        return _value(self.mean).shape[0]


class LabelDistribution:
    """Point in the C-simplex (C=2 for binary segmentation)."""

    def __init__(self, probs):
        pv = _value(probs)
        if pv.ndim != 1 or pv.shape[0] < 2:
            raise ValueError("probs must be a vector with at least two classes")
        if np.any(pv < -1e-9) or abs(pv.sum() - 1.0) > 1e-9:
            raise ValueError("probs must lie in the simplex")
        self.probs = probs

    @property
    def n_classes(self):
        return _value(self.probs).shape[0]


class RelaxedLabelSample:
    """Gumbel-Softmax draw: a soft simplex point at a given temperature."""

    def __init__(self, soft, temperature):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.soft = soft
        self.temperature = float(temperature)


def gaussian_logpdf(d, x):
    """Log density of `x` under `d` as a scalar node."""
    tape = _find_tape(d.mean, d.std, x)
    mean = _as_node(d.mean, tape)
    std = _as_node(d.std, tape)
    xn = _as_node(x, tape)
    if xn.value.shape != mean.value.shape:
        raise ad.ShapeError(f"x shape {xn.value.shape} vs mean {mean.value.shape}")
    sv = std.value
    r = (xn.value - mean.value) / sv
    val = np.float64(-0.5 * (r @ r) - np.log(sv).sum() - 0.5 * r.shape[0] * LOG_2PI)

    def vjp(adj):
        ad.accumulate(mean, adj * (r / sv))
        ad.accumulate(xn, adj * (-r / sv))
        ad.accumulate(std, adj * ((r * r - 1.0) / sv))

    return ad.make_node(val, (mean, std, xn), vjp)


def gaussian_logpdf_values(mean, std, x):
    """Batched log densities; all arguments broadcast over leading axes."""
    r = (x - mean) / std
    return -0.5 * np.sum(r * r, axis=-1) - np.sum(np.log(std), axis=-1) \
        - 0.5 * np.shape(x)[-1] * LOG_2PI


def gaussian_rsample(d, noise):
    """Reparameterized draw mean + std * noise as a vector node."""
    tape = _find_tape(d.mean, d.std)
    mean = _as_node(d.mean, tape)
    std = _as_node(d.std, tape)
    eps = np.asarray(noise, dtype=np.float64)
    if eps.shape != mean.value.shape:
        raise ad.ShapeError(f"noise shape {eps.shape} vs mean {mean.value.shape}")
    val = mean.value + std.value * eps

    def vjp(adj):
        ad.accumulate(mean, adj)
        ad.accumulate(std, adj * eps)

    return ad.make_node(val, (mean, std), vjp)


def gaussian_kl(q, p):
    """Closed-form KL(q ‖ p) between diagonal Gaussians, scalar node."""
    tape = _find_tape(q.mean, q.std, p.mean, p.std)
    qm, qs = _as_node(q.mean, tape), _as_node(q.std, tape)
    pm, ps = _as_node(p.mean, tape), _as_node(p.std, tape)
    if qm.value.shape != pm.value.shape:
        raise ad.ShapeError(f"dims {qm.value.shape} vs {pm.value.shape}")
    qmv, qsv, pmv, psv = qm.value, qs.value, pm.value, ps.value
    delta = qmv - pmv
    ratio2 = (qsv * qsv) / (psv * psv)
    val = np.float64(np.sum(np.log(psv / qsv) + 0.5 * (ratio2 + (delta / psv) ** 2) - 0.5))

    def vjp(adj):
        ad.accumulate(qm, adj * (delta / (psv * psv)))
        ad.accumulate(pm, adj * (-delta / (psv * psv)))
        ad.accumulate(qs, adj * (qsv / (psv * psv) - 1.0 / qsv))
        ad.accumulate(ps, adj * ((1.0 - ratio2 - (delta / psv) ** 2) / psv))

    return ad.make_node(val, (qm, qs, pm, ps), vjp)


def gaussian_kl_values(qm, qs, pm, ps):
    """Batched closed-form KL over the last axis."""
    delta = qm - pm
    return np.sum(
        np.log(ps / qs) + 0.5 * ((qs * qs + delta * delta) / (ps * ps)) - 0.5, axis=-1
    )


def label_logpmf(d, y):
    """Σ_c y_c log probs_c as a scalar node (exact log-pmf for one-hot y).

    Zero probabilities hit by y are clamped at log(PROB_EPS) and counted in
    `clamp_events`.
    """
    global clamp_events
    tape = _find_tape(d.probs, y)
    probs = _as_node(d.probs, tape)
    yn = _as_node(y, tape)
    pv = probs.value
    yv = yn.value
    if pv.shape != yv.shape:
        raise ad.ShapeError(f"probs shape {pv.shape} vs y {yv.shape}")
    if np.any((pv < PROB_EPS) & (yv > 0)):
        clamp_events += 1
    pc = np.maximum(pv, PROB_EPS)
    logp = np.log(pc)
    val = np.float64(yv @ logp)

    def vjp(adj):
        ad.accumulate(probs, adj * (yv / pc))
        ad.accumulate(yn, adj * logp)

    return ad.make_node(val, (probs, yn), vjp)


def label_logpmf_values(probs, y):
    """Batched Σ_c y_c log probs_c over the last axis."""
    return np.sum(y * np.log(np.maximum(probs, PROB_EPS)), axis=-1)


def gumbel_softmax_rsample(d, temperature, noise):
    """Relaxed label draw: softmax((log probs + noise) / temperature).

    `noise` must be standard Gumbel, drawn externally. Differentiable w.r.t.
    the probabilities; the temperature is a schedule constant.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    tape = _find_tape(d.probs)
    probs = _as_node(d.probs, tape)
    g = np.asarray(noise, dtype=np.float64)
    pv = probs.value
    if g.shape != pv.shape:
        raise ad.ShapeError(f"noise shape {g.shape} vs probs {pv.shape}")
    pc = np.maximum(pv, PROB_EPS)
    a = (np.log(pc) + g) / temperature
    e = np.exp(a - np.max(a))
    s = e / e.sum()

    def vjp(adj):
        ga = s * (adj - adj @ s)
        ad.accumulate(probs, ga / (temperature * pc))

    node = ad.make_node(s, (probs,), vjp)
    return RelaxedLabelSample(node, temperature)


def gumbel_softmax_values(probs, temperature, noise):
    """Batched relaxed draws over the last axis."""
    a = (np.log(np.maximum(probs, PROB_EPS)) + noise) / temperature
    a = a - np.max(a, axis=-1, keepdims=True)
    e = np.exp(a)
    return e / np.sum(e, axis=-1, keepdims=True)


def gumbel_noise(rng, shape):
    """Standard Gumbel draws −log(−log u), u uniform on the open unit interval."""
    u = rng.random(shape)
    u = np.clip(u, 1e-300, 1.0 - 1e-16)
    return -np.log(-np.log(u))


def gaussian_from_head(head, dim):
    """Split a 2·dim head node into a DiagGaussian (softplus std + floor)."""
    mean, raw = ad.split(head, [dim, dim])
    std = ad.add_const(ad.softplus(raw), STD_FLOOR)
    return DiagGaussian(mean, std)


def gaussian_from_head_values(head):
    """Value twin of gaussian_from_head; splits the last axis in half."""
    dim = head.shape[-1] // 2
    mean = head[..., :dim]
    std = softplus_values(head[..., dim:]) + STD_FLOOR
    return mean, std
