"""The three generative/variational model pairs over triplets (z_t, x_t, y_t).

Each model kind factorizes the transition density differently:

    dmtmc:  p(y_t|y_{t-1}) · p(z_t|z_{t-1}) · p(x_t|y_t, z_t)
            q(z_t|x_t, y_t, h̃_{t-1}) · q(y_t|x_t, h̃_{t-1}),
            h̃_t a deterministic recurrence over (x_t, y_t, z_t, h̃_{t-1})

    vsl:    p(y_t|z_t) · p(z_t|x_{t-1}, z_{t-1}) · p(x_t|z_t)
            q(z_t|x_0..x_T) via a bi-directional encoder; q(y_t|·) = p(y_t|z_t)

    svrnn:  p(y_t|h_{t-1}) · p(z_t|y_t, h_{t-1}) · p(x_t|y_t, z_t, h_{t-1}),
            h_t = f(z_t, y_t, x_t, h_{t-1}) deterministic (a Dirac factor)
            q(z_t|x_t, y_t, h_{t-1}) · q(y_t|x_t, h_{t-1})

Initial step: p(z_0) = N(0, I) where a z-chain needs a predecessor, a
learnable simplex point for the dmtmc p(y_0), zero vectors for recurrent
states entering step 0, and x_{-1} = 0. Labels are one-hot (or relaxed soft)
vectors everywhere, so observed and sampled labels share one code path.

All density outputs are tape nodes; `*_values` twins and
`complete_data_loglik` operate on plain arrays for samplers and oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import expit
from .distributions import (
    PROB_EPS,
    STD_FLOOR,
    DiagGaussian,
    LabelDistribution,
    gaussian_from_head,
    gaussian_from_head_values,
    gaussian_logpdf,
    gaussian_logpdf_values,
    gaussian_rsample,
    gumbel_softmax_rsample,
    label_logpmf,
)

KINDS = ("dmtmc", "vsl", "svrnn")

# Hidden-unit widths that match the three models' parameter totals.
DEFAULT_HIDDEN = {"dmtmc": 25, "vsl": 41, "svrnn": 22}
DEFAULT_RNN_STATE = {"dmtmc": 40, "vsl": 8, "svrnn": 32}


@dataclass
class TemperatureSchedule:
    """Gumbel-Softmax temperature per epoch: linear start→end, then flat."""

    start: float = 0.5
    end: float = 0.5
    anneal_epochs: int = 0

    def __post_init__(self):
        if self.start <= 0 or self.end <= 0:
            raise ValueError("temperatures must be positive")
        if self.anneal_epochs < 0:
            raise ValueError("anneal_epochs must be >= 0")

    def value(self, epoch):
        if self.anneal_epochs == 0 or epoch >= self.anneal_epochs:
            return self.end
        frac = epoch / self.anneal_epochs
        return self.start + frac * (self.end - self.start)


@dataclass
class TmcConfig:
    """Dimensions and weights describing one model instance."""

    kind: str
    d_x: int = 1
    d_z: int = 2
    n_classes: int = 2
    hidden_units: int = 0  # 0 → kind default
    rnn_state_dim: int = 0  # 0 → kind default
    beta: float = 0.1
    alpha: float = 1.0
    temperature: TemperatureSchedule = field(default_factory=TemperatureSchedule)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.hidden_units == 0:
            self.hidden_units = DEFAULT_HIDDEN[self.kind]
        if self.rnn_state_dim == 0:
            self.rnn_state_dim = DEFAULT_RNN_STATE[self.kind]
        if self.d_x <= 0 or self.d_z < 0:
            raise ValueError("d_x must be positive and d_z non-negative")
        if self.n_classes < 2:
            raise ValueError("need at least two label classes")
        if self.hidden_units <= 0 or self.rnn_state_dim <= 0:
            raise ValueError("hidden_units and rnn_state_dim must be positive")
        if self.beta < 0 or self.alpha < 0:
            raise ValueError("beta and alpha must be non-negative")

    def as_dict(self):
        return {
            "kind": self.kind,
            "d_x": self.d_x,
            "d_z": self.d_z,
            "n_classes": self.n_classes,
            "hidden_units": self.hidden_units,
            "rnn_state_dim": self.rnn_state_dim,
            "beta": self.beta,
            "alpha": self.alpha,
            "temperature": [self.temperature.start, self.temperature.end,
                            self.temperature.anneal_epochs],
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        t = d.pop("temperature", None)
        if t is not None:
            d["temperature"] = TemperatureSchedule(t[0], t[1], int(t[2]))
        return cls(**d)


@dataclass
class TransitionTerms:
    """Per-step log-density nodes; only the slots the kind defines are set."""

    log_py: object = None
    log_pz: object = None
    log_px: object = None
    log_qy: object = None
    log_qz: object = None

    def p_nodes(self):
        return [n for n in (self.log_py, self.log_pz, self.log_px) if n is not None]


@dataclass
class VariationalStep:
    """One inference-side step: the distributions plus what was drawn."""

    q_z: object
    q_y: object
    y: object  # the label node actually used (observed one-hot or relaxed)
    z: object  # reparameterized latent draw
    h: object = None  # next recurrent state (dmtmc only)


class _ParamVector(nn._Layer):
    """A bare learnable vector (the dmtmc initial-label logits)."""

    def __init__(self, name, dim):
        super().__init__(name, ("v",))
        self.dim = dim
        self.v = np.zeros(dim)

    def init(self, rng):
        self.v = np.zeros(self.dim)  # uniform initial labels; still learnable
        self._tape = None


def _hard_label(q_y, gumbel):
    """Exact categorical draw via the Gumbel-max rule, as a constant one-hot."""
    probs = q_y.probs.value
    a = np.log(np.maximum(probs, PROB_EPS)) + np.asarray(gumbel)
    out = np.zeros_like(probs)
    out[np.argmax(a)] = 1.0
    return q_y.probs.tape.leaf(out)


def _bernoulli_probs(head):
    """(1-ρ, ρ) vector node from a 1-component sigmoid head node."""
    rho = float(head.value[0])
    val = np.array([1.0 - rho, rho])

    def vjp(adj):
        ad.accumulate(head, np.array([adj[1] - adj[0]]))

    return ad.make_node(val, (head,), vjp)


def _bernoulli_probs_values(rho):
    """Batched (..., 1) sigmoid-head outputs to (..., 2) simplex rows."""
    return np.concatenate([1.0 - rho, rho], axis=-1)


def label_dist_from_head(head):
    """LabelDistribution from a head node: sigmoid scalar (C=2) or softmax."""
    if head.value.shape[0] == 1:
        return LabelDistribution(_bernoulli_probs(head))
    return LabelDistribution(ad.softmax(head))


def _label_head_out(n_classes):
    # C=2 uses a single sigmoid output; larger C falls back to softmax logits
    return 1 if n_classes == 2 else n_classes


def _label_probs_values(model_net, inputs, n_classes):
    out = nn.mlp_values(model_net, inputs)
    if n_classes == 2:
        return _bernoulli_probs_values(out)
    e = np.exp(out - out.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class TmcModel:
    """Config plus the generative (θ) and variational (φ) networks."""

    def __init__(self, config):
        c = config
        C, dx, dz, h, r = c.n_classes, c.d_x, c.d_z, c.hidden_units, c.rnn_state_dim
        yo = _label_head_out(C)
        label_head = "sigmoid" if yo == 1 else "linear"
        if c.kind == "dmtmc":
            self.py = nn.Mlp2("py", C, h, yo, head_kind=label_head)
            self.pz = nn.Mlp2("pz", dz, h, 2 * dz) if dz else None
            self.px = nn.Mlp2("px", C + dz, h, 2 * dx)
            self.y0 = _ParamVector("y0", C)
            self.rnn = nn.RnnCell("rnn", dx + C + dz, r)
            self.qz = nn.Mlp2("qz", dx + C + r, h, 2 * dz) if dz else None
            self.qy = nn.Mlp2("qy", dx + r, h, yo, head_kind=label_head)
        elif c.kind == "vsl":
            self.py = nn.Mlp2("py", dz, h, yo, head_kind=label_head)
            self.pz = nn.Mlp2("pz", dx + dz, h, 2 * dz) if dz else None
            self.px = nn.Mlp2("px", dz, h, 2 * dx)
            self.enc = nn.BiRnnEncoder("enc", dx, r, r)
            self.qz = nn.Mlp2("qz", r, h, 2 * dz) if dz else None
        else:  # svrnn
            self.py = nn.Mlp2("py", r, h, yo, head_kind=label_head)
            self.pz = nn.Mlp2("pz", C + r, h, 2 * dz) if dz else None
            self.px = nn.Mlp2("px", C + dz + r, h, 2 * dx)
            self.f = nn.RnnCell("f", dz + C + dx, r)
            self.qz = nn.Mlp2("qz", dx + C + r, h, 2 * dz) if dz else None
            self.qy = nn.Mlp2("qy", dx + r, h, yo, head_kind=label_head)
        self.config = config

    def theta_layers(self):
        c = self.config
        if c.kind == "dmtmc":
            layers = [self.py, self.pz, self.px, self.y0]
        elif c.kind == "vsl":
            layers = [self.py, self.pz, self.px]
        else:
            layers = [self.py, self.pz, self.px, self.f]
        return [l for l in layers if l is not None]

    def phi_layers(self):
        c = self.config
        if c.kind == "dmtmc":
            layers = [self.rnn, self.qz, self.qy]
        elif c.kind == "vsl":
            layers = [self.enc, self.qz]
        else:
            layers = [self.qz, self.qy]
        return [l for l in layers if l is not None]

    def all_layers(self):
        return self.theta_layers() + self.phi_layers()

    def n_params(self):
        return sum(layer.n_params() for layer in self.all_layers())

    def collect_params(self):
        return nn.collect_params(self.all_layers())

    def apply_params(self, params):
        nn.apply_params(self.all_layers(), params)

    def save(self, path, seed=None, step=0):
        nn.save_params(path, self.config.kind, self.config.as_dict(),
                       self.collect_params(), seed=seed, step=step)

    # ---- value-only complete-data likelihood (d_z = 0 degenerate case) ----

    def complete_data_loglik(self, xs, onehot):
        """log p(x_0..x_T, y_0..y_T) with no sampled latent (requires d_z=0)."""
        if self.config.d_z != 0:
            raise ValueError("complete-data likelihood needs d_z = 0")
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[:, None]
        onehot = np.asarray(onehot, dtype=np.float64)
        n = xs.shape[0]
        C = self.config.n_classes
        kind = self.config.kind
        total = 0.0
        if kind == "dmtmc":
            e = np.exp(self.y0.v - self.y0.v.max())
            p0 = e / e.sum()
            total += float(np.log(np.maximum(p0, 1e-300)) @ onehot[0])
            if n > 1:
                probs = _label_probs_values(self.py, onehot[:-1], C)
                total += float(np.sum(np.log(np.maximum(probs, 1e-300)) * onehot[1:]))
            mean, std = gaussian_from_head_values(nn.mlp_values(self.px, onehot))
            total += float(np.sum(gaussian_logpdf_values(mean, std, xs)))
        elif kind == "vsl":
            empty = np.zeros((n, 0))
            probs = _label_probs_values(self.py, empty, C)
            total += float(np.sum(np.log(np.maximum(probs, 1e-300)) * onehot))
            mean, std = gaussian_from_head_values(nn.mlp_values(self.px, empty))
            total += float(np.sum(gaussian_logpdf_values(mean, std, xs)))
        else:  # svrnn: recurrent state must be unrolled
            r = self.config.rnn_state_dim
            h = np.zeros(r)
            for t in range(n):
                probs = _label_probs_values(self.py, h, C)
                total += float(np.log(np.maximum(probs, 1e-300)) @ onehot[t])
                mean, std = gaussian_from_head_values(
                    nn.mlp_values(self.px, np.concatenate([onehot[t], h]))
                )
                total += float(gaussian_logpdf_values(mean, std, xs[t]))
                h = nn.rnn_values(self.f, np.concatenate([onehot[t], xs[t]]), h)
        return total


def make_model(config, seed=None):
    """Build a model; `seed` draws the weights, None leaves them at zero."""
    model = TmcModel(config)
    if seed is not None:
        nn.init_params(model.all_layers(), seed)
    return model


def load_model(path):
    """Rebuild a model from a checkpoint written by TmcModel.save."""
    kind, dims, params, meta = nn.load_params(path)
    config = TmcConfig.from_dict(dims)
    model = TmcModel(config)
    model.apply_params(params)
    return model, meta


# --- shared graph-side pieces -------------------------------------------------

def _standard_normal_prior(tape, dim):
    return DiagGaussian(tape.leaf(np.zeros(dim)), tape.leaf(np.ones(dim)))


def _logpdf_or_zero(tape, dist, x):
    """Gaussian log density; d_z = 0 contributes an exact zero constant."""
    if x.value.shape[0] == 0:
        return tape.leaf(0.0)
    return gaussian_logpdf(dist, x)


def _gaussian_net(net, inputs):
    return gaussian_from_head(nn.mlp_forward(net, inputs), net.output_dim // 2)


def _concat(nodes):
    nodes = [n for n in nodes if n.value.shape[0] > 0]
    return nodes[0] if len(nodes) == 1 else ad.concat(nodes)


# --- d-mTMC --------------------------------------------------------------------

def dmtmc_transition(model, y_prev, z_prev, x_t, y_t, z_t):
    """Generative log terms at one step; y_prev/z_prev None mean t = 0.

    log p(y_t|y_{t-1}) from the label net (the learnable initial point at
    t=0), log p(z_t|z_{t-1}) from the z-chain net (standard normal at t=0),
    log p(x_t|y_t, z_t) from the emission net.
    """
    tape = x_t.tape
    if y_prev is None:
        (logits,) = model.y0.bind(tape)
        p_y = LabelDistribution(ad.softmax(logits))
    else:
        p_y = label_dist_from_head(nn.mlp_forward(model.py, y_prev))
    log_py = label_logpmf(p_y, y_t)
    if model.config.d_z == 0:
        log_pz = tape.leaf(0.0)
    elif z_prev is None:
        log_pz = gaussian_logpdf(_standard_normal_prior(tape, model.config.d_z), z_t)
    else:
        log_pz = gaussian_logpdf(_gaussian_net(model.pz, z_prev), z_t)
    p_x = _gaussian_net(model.px, _concat([y_t, z_t]))
    log_px = gaussian_logpdf(p_x, x_t)
    return TransitionTerms(log_py=log_py, log_pz=log_pz, log_px=log_px)


def dmtmc_variational_step(model, x_t, y_t, h_prev, temperature=None,
                           gumbel=None, z_noise=None, hard=False):
    """Inference step: q_y, then the label, then q_z, a z draw, then h̃_t.

    `y_t` is the observed one-hot node, or None to draw a label from q_y with
    pre-drawn `gumbel` noise: a relaxed simplex point at `temperature`
    (differentiable, for training), or an exact categorical one-hot when
    `hard` is set (an evaluation mode; no gradient flows into a hard label).
    `z_noise` is the standard-normal vector for the reparameterized z draw.
    """
    if h_prev.value.shape != (model.config.rnn_state_dim,):
        raise ad.ShapeError(f"h̃ has shape {h_prev.value.shape}")
    q_y = label_dist_from_head(nn.mlp_forward(model.qy, _concat([x_t, h_prev])))
    if y_t is None:
        y_t = _hard_label(q_y, gumbel) if hard else \
            gumbel_softmax_rsample(q_y, temperature, gumbel).soft
    if model.config.d_z == 0:
        tape = x_t.tape
        z_t = tape.leaf(np.zeros(0))
        q_z = DiagGaussian(z_t, tape.leaf(np.ones(0)))
    else:
        q_z = _gaussian_net(model.qz, _concat([x_t, y_t, h_prev]))
        z_t = gaussian_rsample(q_z, z_noise)
    h_t = nn.rnn_step(model.rnn, _concat([x_t, y_t, z_t]), h_prev)
    return VariationalStep(q_z=q_z, q_y=q_y, y=y_t, z=z_t, h=h_t)


# --- VSL ------------------------------------------------------------------------

def vsl_transition(model, z_prev, x_prev, x_t, y_t, z_t):
    """Generative log terms; z_prev None means t = 0 (standard-normal prior).

    y_t may be None (unobserved): the label term is omitted because the
    labels are marginalized out of this model's objective off the labeled
    set. x_t ⟂ y_t given z_t, so the emission never sees the label.
    """
    tape = x_t.tape
    log_py = None
    if y_t is not None:
        p_y = label_dist_from_head(nn.mlp_forward(model.py, z_t))
        log_py = label_logpmf(p_y, y_t)
    if model.config.d_z == 0:
        log_pz = tape.leaf(0.0)
    elif z_prev is None:
        log_pz = gaussian_logpdf(_standard_normal_prior(tape, model.config.d_z), z_t)
    else:
        log_pz = gaussian_logpdf(_gaussian_net(model.pz, _concat([x_prev, z_prev])), z_t)
    log_px = gaussian_logpdf(_gaussian_net(model.px, z_t), x_t)
    return TransitionTerms(log_py=log_py, log_pz=log_pz, log_px=log_px)


def vsl_prior(model, z_prev, x_prev):
    """p(z_t | x_{t-1}, z_{t-1}) as a distribution (for KL-style terms)."""
    if z_prev is None:
        return _standard_normal_prior(x_prev.tape, model.config.d_z)
    return _gaussian_net(model.pz, _concat([x_prev, z_prev]))


def vsl_variational(model, xs):
    """Per-step posteriors q(z_t | x_0..x_T) from the bi-directional encoder."""
    if not xs:
        raise ValueError("vsl_variational: empty sequence")
    if model.config.d_z == 0:
        tape = xs[0].tape
        empty, ones = tape.leaf(np.zeros(0)), tape.leaf(np.ones(0))
        return [DiagGaussian(empty, ones) for _ in xs]
    codes = nn.birnn_encode(model.enc, xs)
    return [_gaussian_net(model.qz, code) for code in codes]


def vsl_label_probs(model, z_t):
    """p(y_t|z_t), which doubles as this model's label posterior q(y_t|·)."""
    return label_dist_from_head(nn.mlp_forward(model.py, z_t))


# --- SVRNN ----------------------------------------------------------------------

def svrnn_transition(model, h_prev, x_t, y_t, z_t):
    """Generative log terms and the deterministic next state h_t.

    The Dirac recurrence factor contributes h_t = f(z_t, y_t, x_t, h_{t-1})
    and no log-density term.
    """
    if h_prev.value.shape != (model.config.rnn_state_dim,):
        raise ad.ShapeError(f"h has shape {h_prev.value.shape}")
    tape = x_t.tape
    p_y = label_dist_from_head(nn.mlp_forward(model.py, h_prev))
    log_py = label_logpmf(p_y, y_t)
    if model.config.d_z == 0:
        log_pz = tape.leaf(0.0)
    else:
        log_pz = gaussian_logpdf(_gaussian_net(model.pz, _concat([y_t, h_prev])), z_t)
    p_x = _gaussian_net(model.px, _concat([y_t, z_t, h_prev]))
    log_px = gaussian_logpdf(p_x, x_t)
    h_t = nn.rnn_step(model.f, _concat([z_t, y_t, x_t]), h_prev)
    return TransitionTerms(log_py=log_py, log_pz=log_pz, log_px=log_px), h_t


def svrnn_variational_step(model, x_t, y_t, h_prev, temperature=None,
                           gumbel=None, z_noise=None, hard=False):
    """Inference step: q_y then the label then q_z and its draw; h comes from
    the generative recurrence, not from here. `hard` as in the dmtmc step."""
    if h_prev.value.shape != (model.config.rnn_state_dim,):
        raise ad.ShapeError(f"h has shape {h_prev.value.shape}")
    q_y = label_dist_from_head(nn.mlp_forward(model.qy, _concat([x_t, h_prev])))
    if y_t is None:
        y_t = _hard_label(q_y, gumbel) if hard else \
            gumbel_softmax_rsample(q_y, temperature, gumbel).soft
    if model.config.d_z == 0:
        tape = x_t.tape
        z_t = tape.leaf(np.zeros(0))
        q_z = DiagGaussian(z_t, tape.leaf(np.ones(0)))
    else:
        q_z = _gaussian_net(model.qz, _concat([x_t, y_t, h_prev]))
        z_t = gaussian_rsample(q_z, z_noise)
    return VariationalStep(q_z=q_z, q_y=q_y, y=y_t, z=z_t)


# --- ancestral sampling -----------------------------------------------------------

def generate(model, T, seed):
    """Sample a trajectory of T+1 steps; returns (zs, xs, ys) arrays.

    For svrnn, zs holds the stochastic part z'_t (the deterministic h is
    internal). Reproducible given the seed.
    """
    rng = np.random.default_rng(seed)
    c = model.config
    n = T + 1
    C, dz, dx = c.n_classes, c.d_z, c.d_x
    zs = np.zeros((n, dz))
    xs = np.zeros((n, dx))
    ys = np.zeros(n, dtype=np.int64)

    def draw_label(probs):
        return int(rng.choice(C, p=probs / probs.sum()))

    def draw_gaussian(head):
        mean, std = gaussian_from_head_values(head)
        return mean + std * rng.standard_normal(mean.shape)

    if c.kind == "dmtmc":
        e = np.exp(model.y0.v - model.y0.v.max())
        for t in range(n):
            if t == 0:
                probs = e / e.sum()
                z = rng.standard_normal(dz)
            else:
                probs = _label_probs_values(model.py, _onehot(ys[t - 1], C), C)
                z = draw_gaussian(nn.mlp_values(model.pz, zs[t - 1])) if dz else np.zeros(0)
            ys[t] = draw_label(probs)
            zs[t] = z
            xs[t] = draw_gaussian(nn.mlp_values(model.px, np.concatenate([_onehot(ys[t], C), z])))
    elif c.kind == "vsl":
        for t in range(n):
            if t == 0 or dz == 0:
                z = rng.standard_normal(dz)
            else:
                z = draw_gaussian(nn.mlp_values(model.pz, np.concatenate([xs[t - 1], zs[t - 1]])))
            zs[t] = z
            ys[t] = draw_label(_label_probs_values(model.py, z, C))
            xs[t] = draw_gaussian(nn.mlp_values(model.px, z))
    else:
        h = np.zeros(c.rnn_state_dim)
        for t in range(n):
            ys[t] = draw_label(_label_probs_values(model.py, h, C))
            y1 = _onehot(ys[t], C)
            z = draw_gaussian(nn.mlp_values(model.pz, np.concatenate([y1, h]))) if dz \
                else np.zeros(0)
            zs[t] = z
            xs[t] = draw_gaussian(nn.mlp_values(model.px, np.concatenate([y1, z, h])))
            h = nn.rnn_values(model.f, np.concatenate([z, y1, xs[t]]), h)
    return zs, xs, ys


def _onehot(label, C):
    out = np.zeros(C)
    out[label] = 1.0
    return out


# --- exact-weight forcing (test/oracle support) -----------------------------------

def force_affine(net, A, c):
    """Overwrite an Mlp2 so its pre-head output is exactly A @ x + c.

    Uses paired ±relu units in both hidden layers (needs hidden_dim ≥
    2·input_dim), so the network computes the affine map without
    approximation. The head activation still applies afterwards.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    din, dh, dout = net.input_dim, net.hidden_dim, net.output_dim
    if A.shape != (dout, din) or c.shape != (dout,):
        raise ValueError(f"need A {(dout, din)} and c {(dout,)}")
    if dh < 2 * din:
        raise ValueError(f"hidden_dim {dh} < 2·input_dim {2 * din}")
    W1 = np.zeros((dh, din))
    for i in range(din):
        W1[2 * i, i] = 1.0
        W1[2 * i + 1, i] = -1.0
    W2 = np.zeros((dh, dh))
    W2[np.arange(2 * din), np.arange(2 * din)] = 1.0
    W3 = np.zeros((dout, dh))
    W3[:, 0:2 * din:2] = A
    W3[:, 1:2 * din:2] = -A
    net.set_param(f"{net.name}.W1", W1)
    net.set_param(f"{net.name}.b1", np.zeros(dh))
    net.set_param(f"{net.name}.W2", W2)
    net.set_param(f"{net.name}.b2", np.zeros(dh))
    net.set_param(f"{net.name}.W3", W3)
    net.set_param(f"{net.name}.b3", c)


def raw_std_for(target_std):
    """Pre-softplus value whose std head lands exactly on `target_std`."""
    if target_std <= STD_FLOOR:
        raise ValueError(f"target std must exceed the {STD_FLOOR} floor")
    return float(np.log(np.expm1(target_std - STD_FLOOR)))


def force_exact_hmm(model, initial, transition, means, stds):
    """Configure a d_z=0 dmtmc so its complete-data law is a given HMM.

    The emission becomes x_t ~ N(means[y_t], stds[y_t]²) (d_x must be 1) and
    the label chain matches `transition` with `initial` at t=0. Lets discrete
    smoothing oracles serve as ground truth for this model.
    """
    if model.config.kind != "dmtmc" or model.config.d_z != 0 or model.config.d_x != 1 \
            or model.config.n_classes != 2:
        raise ValueError("exact HMM forcing needs a two-class dmtmc with d_z=0, d_x=1")
    initial = np.asarray(initial, dtype=np.float64)
    transition = np.asarray(transition, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    model.y0.v = np.log(initial)
    model.y0._tape = None
    # label chain: sigmoid head outputs P(y_t = class 1 | y_{t-1});
    # one-hot input selects the row, so logit = Σ_c y_c · logit(row_c)
    logits = np.log(transition[:, 1] / transition[:, 0])
    force_affine(model.py, logits[None, :], np.zeros(1))
    # emission head = (μ, raw σ) as affine functions of the one-hot label
    A = np.vstack([means, [raw_std_for(s) for s in stds]])
    force_affine(model.px, A, np.zeros(2))
