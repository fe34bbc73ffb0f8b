"""Brute-force references for validating inference on small instances.

Everything here is log-domain numpy with log-sum-exp, no tapes involved:
an exact discrete-HMM smoother (with observed-label clamping) and an
exhaustive marginalizer over unobserved-label completions.
"""

from __future__ import annotations

import itertools

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

MAX_ENUMERATED = 20


def logsumexp(a, axis=None):
    """Stable log Σ exp, tolerating all -inf slices."""
    a = np.asarray(a, dtype=np.float64)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)


class DiscreteHmm:
    """C hidden states, a C×C transition matrix, scalar Gaussian emissions."""

    def __init__(self, initial, transition, means, stds):
        initial = np.asarray(initial, dtype=np.float64)
        transition = np.asarray(transition, dtype=np.float64)
        means = np.asarray(means, dtype=np.float64)
        stds = np.asarray(stds, dtype=np.float64)
        c = initial.shape[0]
        if transition.shape != (c, c) or means.shape != (c,) or stds.shape != (c,):
            raise ValueError("inconsistent state counts")
        if np.any(initial < 0) or abs(initial.sum() - 1.0) > 1e-9:
            raise ValueError("initial distribution must lie in the simplex")
        if np.any(transition < 0) or np.any(np.abs(transition.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("transition rows must lie in the simplex")
        if np.any(stds <= 0):
            raise ValueError("emission stds must be positive")
        self.n_states = c
        self.initial = initial
        self.transition = transition
        self.means = means
        self.stds = stds

    def emission_loglik(self, xs):
        """(n, C) log densities of scalar observations under each state."""
        xs = np.asarray(xs, dtype=np.float64).reshape(-1, 1)
        r = (xs - self.means) / self.stds
        return -0.5 * r * r - np.log(self.stds) - 0.5 * LOG_2PI


def _constraint_mask(n, n_states, constraints):
    """0 where a state is allowed, -inf where clamped away."""
    mask = np.zeros((n, n_states))
    if constraints is not None:
        constraints = np.asarray(constraints, dtype=np.int64)
        if constraints.shape != (n,):
            raise ValueError(f"constraints must have length {n}")
        for t in np.flatnonzero(constraints >= 0):
            mask[t] = -np.inf
            mask[t, constraints[t]] = 0.0
    return mask


def forward_backward(hmm, xs, constraints=None):
    """Exact smoothed posteriors p(state_t | all observations, clamps).

    `constraints` holds one entry per step: a state index to clamp to, or -1
    to leave the step free. Runs scaled (per-step normalized) forward and
    backward passes in the log domain. Raises if the evidence has probability
    zero, naming the first offending step.
    """
    xs = np.asarray(xs, dtype=np.float64)
    n = xs.shape[0]
    if n == 0:
        raise ValueError("empty observation sequence")
    ll = hmm.emission_loglik(xs) + _constraint_mask(n, hmm.n_states, constraints)
    with np.errstate(divide="ignore"):
        log_init = np.log(hmm.initial)
        log_trans = np.log(hmm.transition)
    la = np.empty((n, hmm.n_states))
    la[0] = log_init + ll[0]
    for t in range(n):
        if t > 0:
            la[t] = logsumexp(la[t - 1][:, None] + log_trans, axis=0) + ll[t]
        norm = logsumexp(la[t])
        if not np.isfinite(norm):
            raise ValueError(f"evidence has probability zero at step {t}")
        la[t] -= norm
    lb = np.zeros((n, hmm.n_states))
    for t in range(n - 2, -1, -1):
        lb[t] = logsumexp(log_trans + (ll[t + 1] + lb[t + 1]), axis=1)
        lb[t] -= np.max(lb[t])  # keep magnitudes bounded; normalized later
    post = la + lb
    post -= logsumexp(post, axis=1)[:, None]
    return np.exp(post)


def hmm_loglik(hmm, xs, constraints=None):
    """Log evidence log p(observations, clamped states) under the HMM."""
    xs = np.asarray(xs, dtype=np.float64)
    n = xs.shape[0]
    ll = hmm.emission_loglik(xs) + _constraint_mask(n, hmm.n_states, constraints)
    with np.errstate(divide="ignore"):
        la = np.log(hmm.initial) + ll[0]
        log_trans = np.log(hmm.transition)
    total = 0.0
    for t in range(1, n):
        norm = logsumexp(la)
        if not np.isfinite(norm):
            raise ValueError(f"evidence has probability zero at step {t - 1}")
        total += norm
        la = logsumexp((la - norm)[:, None] + log_trans, axis=0) + ll[t]
    final = logsumexp(la)
    if not np.isfinite(final):
        raise ValueError(f"evidence has probability zero at step {n - 1}")
    return total + final


def enumerate_loglik(model, seq):
    """Exact log p(observations, observed labels) by summing completions.

    Requires a model with no sampled latent (d_z = 0), so the complete-data
    log-likelihood is a deterministic function of labels; the unobserved
    labels are then marginalized by brute force over all 2^|U| assignments.
    """
    if getattr(model.config, "d_z", None) != 0:
        raise ValueError("enumeration needs a model with d_z = 0")
    hidden = seq.unobserved_indices()
    if len(hidden) > MAX_ENUMERATED:
        raise ValueError(f"|U| = {len(hidden)} exceeds {MAX_ENUMERATED}")
    c = model.config.n_classes
    labels = np.array(seq.labels, copy=True)
    lls = np.empty(c ** len(hidden))
    for i, combo in enumerate(itertools.product(range(c), repeat=len(hidden))):
        labels[hidden] = combo
        onehot = np.zeros((len(seq), c))
        onehot[np.arange(len(seq)), labels] = 1.0
        lls[i] = model.complete_data_loglik(seq.xs, onehot)
    return float(logsumexp(lls))
