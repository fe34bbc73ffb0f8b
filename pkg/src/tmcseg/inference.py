"""Monte-Carlo objectives, training loops, and posterior label decoding.

Each model kind gets its semi-supervised objective:

    elbo_generic / elbo_svrnn accumulate, per step and per sample,
        log p-terms − log q_z(z_t) − 1{t unobserved} · log q_y(y_t),
    drawing relaxed labels at unobserved steps and reparameterized z draws.
    elbo_svrnn adds α · Σ_{t observed} [log p(y_t|h_{t-1}) + log q(y_t|x_t, h_{t-1})].

    elbo_vsl has a supervised label term plus a β-weighted reconstruction
    and prior-vs-posterior term; no labels are ever sampled.

Every estimator exists twice: a tape-building version whose `node` field can
be backpropagated, and a vectorized plain-numpy version (`mc_elbo_values`)
for many-sample evaluation. Both consume the same pre-drawn noise arrays
(`draw_elbo_noise`), so they agree sample-by-sample and finite differences of
the value path check gradients of the graph path.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .data import LabeledSequence
from .distributions import (
    PROB_EPS,
    gaussian_from_head_values,
    gaussian_logpdf,
    gaussian_logpdf_values,
    gaussian_rsample,
    gumbel_noise,
    gumbel_softmax_values,
    label_logpmf,
    label_logpmf_values,
)
from .models import (
    TemperatureSchedule,
    _label_probs_values,
    dmtmc_transition,
    dmtmc_variational_step,
    svrnn_transition,
    svrnn_variational_step,
    vsl_transition,
    vsl_variational,
)

log = logging.getLogger(__name__)

TERM_NAMES = ("reconstruction", "kl_or_prior", "label_supervised",
              "label_entropy", "penalty")


@dataclass
class ElboEstimate:
    """One objective evaluation: scalar total, named term breakdown.

    `node` is the tape node behind `total`, for backpropagation. The term
    values already carry their weights (β inside reconstruction/kl_or_prior
    for vsl, α inside penalty), so the signed sum of terms is the total.
    """

    total: float
    terms: dict
    n_samples: int
    node: object = None
    valid: bool = True


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-3
    mc_samples: int = 1
    seed: int = 0
    temperature: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    beta: float = None  # None → model config value
    alpha: float = None
    grad_clip: float = 5.0
    train_theta: bool = True  # False freezes the generative networks
    window: int = 0  # >0 trains on random subsequences of this length
    eval_every: int = 0  # >0 records a decode error rate every k epochs

    def __post_init__(self):
        if self.epochs < 0 or self.mc_samples < 1:
            raise ValueError("epochs must be >= 0 and mc_samples >= 1")
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ValueError("learning_rate and grad_clip must be positive")
        if self.window < 0 or self.eval_every < 0:
            raise ValueError("window and eval_every must be >= 0")


class TrainTrace:
    """Per-epoch records: objective, term breakdown, CPU seconds.

    Process CPU time rather than wall time, so traces measure the compute
    cost of an epoch even when several runs share a core.
    """

    def __init__(self):
        self.rows = []

    def append(self, epoch, estimate, seconds, error_rate=None):
        if self.rows and epoch <= self.rows[-1]["epoch"]:
            raise ValueError("epoch indices must increase")
        row = {"epoch": epoch, "elbo": estimate.total, "seconds": seconds,
               "error_rate": error_rate}
        row.update(estimate.terms)
        self.rows.append(row)

    def elbos(self):
        return np.array([row["elbo"] for row in self.rows])

    def write(self, path):
        header = ["epoch", "elbo", *TERM_NAMES, "seconds", "error_rate"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in self.rows:
                w.writerow([row.get(k, "") if row.get(k) is not None else ""
                            for k in header])


def draw_elbo_noise(model, n_steps, n_samples, rng):
    """All randomness for `n_samples` objective evaluations, drawn up front.

    Gaussian draws come first, then Gumbel draws (omitted for vsl, which
    never samples labels). Passing the same dict to the graph and value
    estimators makes them common-random-number twins.
    """
    c = model.config
    out = {"eps": rng.standard_normal((n_samples, n_steps, c.d_z))}
    if c.kind != "vsl":
        out["gum"] = gumbel_noise(rng, (n_samples, n_steps, c.n_classes))
    return out


def _finalize(buckets, n_samples, alpha):
    terms = {}
    parts = []
    for name in TERM_NAMES:
        nodes = buckets[name]
        if not nodes:
            terms[name] = 0.0
            continue
        scale = (alpha / n_samples) if name == "penalty" else (1.0 / n_samples)
        node = ad.mul_const(ad.add_n(nodes), scale)
        terms[name] = float(node.value)
        parts.append(node)
    total_node = parts[0] if len(parts) == 1 else ad.add_n(parts)
    total = float(total_node.value)
    return ElboEstimate(total=total, terms=terms, n_samples=n_samples,
                        node=total_node, valid=bool(np.isfinite(total)))


def _elbo_sequential(model, seq, temperature, noise, alpha, hard_labels=False):
    kind = model.config.kind
    eps, gum = noise["eps"], noise["gum"]
    n_samples, n = eps.shape[0], len(seq)
    tape = ad.Tape()
    xs = [tape.leaf(seq.xs[t]) for t in range(n)]
    onehot = seq.onehot_labels()
    obs = [tape.leaf(onehot[t]) if seq.observed[t] else None for t in range(n)]
    zero_h = tape.leaf(np.zeros(model.config.rnn_state_dim))
    buckets = {name: [] for name in TERM_NAMES}
    for s in range(n_samples):
        h = zero_h
        y_prev = z_prev = None
        for t in range(n):
            if kind == "dmtmc":
                step = dmtmc_variational_step(
                    model, xs[t], obs[t], h, temperature=temperature,
                    gumbel=gum[s, t], z_noise=eps[s, t], hard=hard_labels)
                terms = dmtmc_transition(model, y_prev, z_prev, xs[t], step.y, step.z)
                next_h = step.h
            else:
                step = svrnn_variational_step(
                    model, xs[t], obs[t], h, temperature=temperature,
                    gumbel=gum[s, t], z_noise=eps[s, t], hard=hard_labels)
                terms, next_h = svrnn_transition(model, h, xs[t], step.y, step.z)
            buckets["reconstruction"].append(terms.log_px)
            if model.config.d_z:
                log_qz = gaussian_logpdf(step.q_z, step.z)
                buckets["kl_or_prior"].append(ad.sub(terms.log_pz, log_qz))
            if obs[t] is not None:
                buckets["label_supervised"].append(terms.log_py)
                if kind == "svrnn" and alpha:
                    buckets["penalty"].append(terms.log_py)
                    buckets["penalty"].append(label_logpmf(step.q_y, obs[t]))
            else:
                log_qy = label_logpmf(step.q_y, step.y)
                buckets["label_entropy"].append(ad.sub(terms.log_py, log_qy))
            h, y_prev, z_prev = next_h, step.y, step.z
    return _finalize(buckets, n_samples, alpha)


def elbo_generic(model, seq, rng=None, temperature=0.5, n_samples=1, noise=None,
                 hard_labels=False):
    """Semi-supervised objective for the dmtmc factorization (graph-building)."""
    if model.config.kind != "dmtmc":
        raise ValueError(f"elbo_generic expects a dmtmc model, got {model.config.kind}")
    if noise is None:
        noise = draw_elbo_noise(model, len(seq), n_samples, rng)
    return _elbo_sequential(model, seq, temperature, noise, alpha=0.0,
                            hard_labels=hard_labels)


def elbo_svrnn(model, seq, rng=None, temperature=0.5, n_samples=1, noise=None,
               alpha=None, hard_labels=False):
    """The svrnn objective: generic bound plus the supervised label penalty."""
    if model.config.kind != "svrnn":
        raise ValueError(f"elbo_svrnn expects an svrnn model, got {model.config.kind}")
    if alpha is None:
        alpha = model.config.alpha
    if noise is None:
        noise = draw_elbo_noise(model, len(seq), n_samples, rng)
    return _elbo_sequential(model, seq, temperature, noise, alpha=alpha,
                            hard_labels=hard_labels)


def elbo_vsl(model, seq, rng=None, n_samples=1, noise=None, beta=None):
    """The vsl objective; labels are marginalized, never sampled."""
    if model.config.kind != "vsl":
        raise ValueError(f"elbo_vsl expects a vsl model, got {model.config.kind}")
    if beta is None:
        beta = model.config.beta
    if noise is None:
        noise = draw_elbo_noise(model, len(seq), n_samples, rng)
    eps = noise["eps"]
    n_samples, n = eps.shape[0], len(seq)
    dz = model.config.d_z
    tape = ad.Tape()
    xs = [tape.leaf(seq.xs[t]) for t in range(n)]
    onehot = seq.onehot_labels()
    obs = [tape.leaf(onehot[t]) if seq.observed[t] else None for t in range(n)]
    q_zs = vsl_variational(model, xs)
    buckets = {name: [] for name in TERM_NAMES}
    for s in range(n_samples):
        z_prev = x_prev = None
        for t in range(n):
            z_t = gaussian_rsample(q_zs[t], eps[s, t]) if dz else q_zs[t].mean
            terms = vsl_transition(model, z_prev, x_prev, xs[t], obs[t], z_t)
            buckets["reconstruction"].append(terms.log_px)
            if dz:
                log_qz = gaussian_logpdf(q_zs[t], z_t)
                buckets["kl_or_prior"].append(ad.sub(terms.log_pz, log_qz))
            if terms.log_py is not None:
                buckets["label_supervised"].append(terms.log_py)
            z_prev, x_prev = z_t, xs[t]
    # β weights the reconstruction and prior-vs-posterior parts only
    terms = {}
    parts = []
    for name in TERM_NAMES:
        nodes = buckets[name]
        if not nodes:
            terms[name] = 0.0
            continue
        scale = 1.0 / n_samples
        if name in ("reconstruction", "kl_or_prior"):
            scale *= beta
        node = ad.mul_const(ad.add_n(nodes), scale)
        terms[name] = float(node.value)
        parts.append(node)
    total_node = parts[0] if len(parts) == 1 else ad.add_n(parts)
    total = float(total_node.value)
    return ElboEstimate(total=total, terms=terms, n_samples=n_samples,
                        node=total_node, valid=bool(np.isfinite(total)))


def elbo(model, seq, rng=None, temperature=0.5, n_samples=1, noise=None,
         beta=None, alpha=None, hard_labels=False):
    """Kind-dispatching wrapper around the three objective builders."""
    kind = model.config.kind
    if kind == "dmtmc":
        return elbo_generic(model, seq, rng, temperature, n_samples, noise,
                            hard_labels)
    if kind == "svrnn":
        return elbo_svrnn(model, seq, rng, temperature, n_samples, noise, alpha,
                          hard_labels)
    return elbo_vsl(model, seq, rng, n_samples, noise, beta)


# --- vectorized value-only estimators ----------------------------------------

def mc_elbo_values(model, seq, noise, temperature=0.5, beta=None, alpha=None,
                   hard_labels=False):
    """Per-sample objective values, shape (n_samples,), no tape.

    Computes exactly what the graph estimators compute for the same noise
    dict, vectorized across samples. `hard_labels` switches unobserved-label
    draws from the relaxed simplex point to an exact categorical draw
    (Gumbel-max); use it when the estimate must be a true lower-bound sample
    rather than a training surrogate.
    """
    kind = model.config.kind
    if kind == "vsl":
        return _mc_vsl(model, seq, noise["eps"],
                       model.config.beta if beta is None else beta)
    alpha_val = 0.0 if kind == "dmtmc" else (
        model.config.alpha if alpha is None else alpha)
    return _mc_sequential(model, seq, noise["eps"], noise["gum"], temperature,
                          alpha_val, hard_labels)


def _broadcast_row(row, n_samples):
    return np.broadcast_to(row, (n_samples,) + row.shape)


def _mc_sequential(model, seq, eps, gum, temperature, alpha, hard_labels=False):
    c = model.config
    S, n = eps.shape[0], len(seq)
    C, dz = c.n_classes, c.d_z
    onehot = seq.onehot_labels()
    recon = np.zeros(S)
    klp = np.zeros(S)
    sup = np.zeros(S)
    ent = np.zeros(S)
    pen = np.zeros(S)
    h = np.zeros((S, c.rnn_state_dim))
    y_prev = z_prev = None
    if c.kind == "dmtmc":
        e = np.exp(model.y0.v - model.y0.v.max())
        logp0 = np.log(np.maximum(e / e.sum(), PROB_EPS))
    for t in range(n):
        x_t = _broadcast_row(seq.xs[t], S)
        qy_in = np.concatenate([x_t, h], axis=1)
        q_probs = _label_probs_values(model.qy, qy_in, C)
        if seq.observed[t]:
            y = _broadcast_row(onehot[t], S)
        else:
            if hard_labels:
                a = np.log(np.maximum(q_probs, PROB_EPS)) + gum[:, t]
                y = np.eye(C)[np.argmax(a, axis=-1)]
            else:
                y = gumbel_softmax_values(q_probs, temperature, gum[:, t])
            ent -= label_logpmf_values(q_probs, y)
        if dz:
            raw = nn.mlp_values(model.qz, np.concatenate([x_t, y, h], axis=1))
            mu, sd = gaussian_from_head_values(raw)
            z = mu + sd * eps[:, t]
            klp -= gaussian_logpdf_values(mu, sd, z)
        else:
            z = np.zeros((S, 0))
        if c.kind == "dmtmc":
            log_py = (y @ logp0) if t == 0 else label_logpmf_values(
                _label_probs_values(model.py, y_prev, C), y)
            if dz:
                if t == 0:
                    klp += gaussian_logpdf_values(0.0, 1.0, z)
                else:
                    pm, ps = gaussian_from_head_values(nn.mlp_values(model.pz, z_prev))
                    klp += gaussian_logpdf_values(pm, ps, z)
            em, es = gaussian_from_head_values(
                nn.mlp_values(model.px, np.concatenate([y, z], axis=1)))
            h = np.tanh(np.concatenate([x_t, y, z, h], axis=1) @ model.rnn.W.T
                        + model.rnn.b)
        else:
            p_probs = _label_probs_values(model.py, h, C)
            log_py = label_logpmf_values(p_probs, y)
            if dz:
                pm, ps = gaussian_from_head_values(
                    nn.mlp_values(model.pz, np.concatenate([y, h], axis=1)))
                klp += gaussian_logpdf_values(pm, ps, z)
            em, es = gaussian_from_head_values(
                nn.mlp_values(model.px, np.concatenate([y, z, h], axis=1)))
            if seq.observed[t] and alpha:
                pen += log_py + label_logpmf_values(q_probs, onehot[t])
        if seq.observed[t]:
            sup += log_py
        else:
            ent += log_py
        recon += gaussian_logpdf_values(em, es, x_t)
        if c.kind == "svrnn":
            h = np.tanh(np.concatenate([z, y, x_t, h], axis=1) @ model.f.W.T + model.f.b)
        y_prev, z_prev = y, z
    return recon + klp + sup + ent + alpha * pen


def _mc_vsl(model, seq, eps, beta):
    c = model.config
    S, n = eps.shape[0], len(seq)
    dz = c.d_z
    onehot = seq.onehot_labels()
    obs = seq.observed
    if dz:
        codes = nn.birnn_encode_values(model.enc, seq.xs)
        mu, sd = gaussian_from_head_values(nn.mlp_values(model.qz, codes))
        z = mu + sd * eps  # (S, n, dz)
        log_qz = gaussian_logpdf_values(mu, sd, z)  # (S, n)
        prior = np.empty((S, n))
        prior[:, 0] = gaussian_logpdf_values(0.0, 1.0, z[:, 0])
        if n > 1:
            xin = np.broadcast_to(seq.xs[:-1], (S, n - 1, seq.d_x))
            pm, ps = gaussian_from_head_values(
                nn.mlp_values(model.pz, np.concatenate([xin, z[:, :-1]], axis=-1)))
            prior[:, 1:] = gaussian_logpdf_values(pm, ps, z[:, 1:])
        klp = (prior - log_qz).sum(axis=1)
    else:
        z = np.zeros((S, n, 0))
        klp = np.zeros(S)
    em, es = gaussian_from_head_values(nn.mlp_values(model.px, z))
    recon = gaussian_logpdf_values(em, es, np.broadcast_to(seq.xs, (S, n, seq.d_x)))
    recon = recon.sum(axis=1)
    sup = np.zeros(S)
    if obs.any():
        probs = _label_probs_values(model.py, z[:, obs], c.n_classes)
        sup = label_logpmf_values(probs, onehot[obs]).sum(axis=-1)
    return beta * (recon + klp) + sup


# --- posterior decoding ---------------------------------------------------------

@dataclass
class PosteriorDecode:
    """Estimated label distributions and their arg-max decode.

    Observed steps pass through: their rows are exact one-hots of the given
    labels and are never re-estimated.
    """

    probs: np.ndarray  # (n, n_classes)
    labels: np.ndarray  # (n,) integer decode


def posterior_labels(model, seq, n_samples, seed):
    """Estimate p(y_t | x-sequence, observed labels) at unobserved steps.

    Runs the variational recursion `n_samples` times with hard-sampled labels
    at unobserved steps and reparameterized z draws, averaging the per-step
    label posteriors. Deterministic given the seed; ties decode to the
    lowest class index.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    c = model.config
    S, n, C, dz = n_samples, len(seq), c.n_classes, c.d_z
    onehot = seq.onehot_labels()
    probs = np.zeros((n, C))
    if c.kind == "vsl":
        if dz:
            codes = nn.birnn_encode_values(model.enc, seq.xs)
            mu, sd = gaussian_from_head_values(nn.mlp_values(model.qz, codes))
            z = mu + sd * rng.standard_normal((S, n, dz))
        else:
            z = np.zeros((S, n, 0))
        probs = _label_probs_values(model.py, z, C).mean(axis=0)
    else:
        h = np.zeros((S, c.rnn_state_dim))
        for t in range(n):
            x_t = _broadcast_row(seq.xs[t], S)
            q_probs = _label_probs_values(
                model.qy, np.concatenate([x_t, h], axis=1), C)
            probs[t] = q_probs.mean(axis=0)
            if seq.observed[t]:
                y = _broadcast_row(onehot[t], S)
            else:
                # hard categorical draw per sample
                u = rng.random(S)
                idx = (u[:, None] > np.cumsum(q_probs, axis=1)).sum(axis=1)
                y = np.eye(C)[np.minimum(idx, C - 1)]
            if dz:
                raw = nn.mlp_values(model.qz, np.concatenate([x_t, y, h], axis=1))
                mu, sd = gaussian_from_head_values(raw)
                z = mu + sd * rng.standard_normal((S, dz))
            else:
                z = np.zeros((S, 0))
            if c.kind == "dmtmc":
                h = np.tanh(np.concatenate([x_t, y, z, h], axis=1) @ model.rnn.W.T
                            + model.rnn.b)
            else:
                h = np.tanh(np.concatenate([z, y, x_t, h], axis=1) @ model.f.W.T
                            + model.f.b)
    labels = np.argmax(probs, axis=1)
    labels[seq.observed] = seq.labels[seq.observed]
    probs[seq.observed] = onehot[seq.observed]
    return PosteriorDecode(probs=probs, labels=labels)


# --- training ---------------------------------------------------------------------

def _subsequence(seq, start, stop):
    return LabeledSequence(seq.xs[start:stop], seq.labels[start:stop],
                           seq.observed[start:stop], x_loc=seq.x_loc,
                           x_scale=seq.x_scale)


def _clip_by_global_norm(grads, threshold):
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm > threshold and norm > 0.0:
        factor = threshold / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


def train(model, seq, cfg, truth=None):
    """Maximize the model-appropriate objective with Adam; returns (model, trace).

    One full-sequence gradient step per epoch (or a random window when
    cfg.window is set). Non-finite estimates or gradients skip the step;
    more than 10 consecutive skips abort. Reproducible given cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    layers = model.all_layers() if cfg.train_theta else model.phi_layers()
    params = nn.collect_params(layers)
    adam = nn.AdamState(params, lr=cfg.learning_rate)
    trace = TrainTrace()
    consecutive_skips = 0
    for epoch in range(cfg.epochs):
        started = time.process_time()
        if cfg.window and cfg.window < len(seq):
            start = int(rng.integers(0, len(seq) - cfg.window + 1))
            batch = _subsequence(seq, start, start + cfg.window)
        else:
            batch = seq
        temp = cfg.temperature.value(epoch)
        est = elbo(model, batch, rng=rng, temperature=temp,
                   n_samples=cfg.mc_samples, beta=cfg.beta, alpha=cfg.alpha)
        grads = None
        if est.valid:
            grad_map = ad.backward(est.node)
            grads = nn.collect_grads(layers, grad_map)
            if not all(np.all(np.isfinite(g)) for g in grads.values()):
                grads = None
        if grads is None:
            consecutive_skips += 1
            log.warning("epoch %d: non-finite objective or gradient, step skipped",
                        epoch)
            if consecutive_skips > 10:
                raise RuntimeError(
                    f"training aborted at epoch {epoch}: "
                    f"{consecutive_skips} consecutive non-finite steps")
        else:
            consecutive_skips = 0
            grads = {k: -g for k, g in grads.items()}  # maximize the objective
            grads, _ = _clip_by_global_norm(grads, cfg.grad_clip)
            params = nn.adam_step(adam, params, grads)
            nn.apply_params(layers, params)
        error_rate = None
        if truth is not None and cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            dec = posterior_labels(model, seq, n_samples=16, seed=cfg.seed + epoch)
            hidden = ~seq.observed
            if hidden.any():
                error_rate = float(np.mean(dec.labels[hidden] != truth[hidden]))
        trace.append(epoch, est, time.process_time() - started, error_rate)
    return model, trace
