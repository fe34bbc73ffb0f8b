import json

import numpy as np
import pytest

from tmcseg import autodiff as ad
from tmcseg.models import (
    TemperatureSchedule,
    TmcConfig,
    dmtmc_transition,
    dmtmc_variational_step,
    force_affine,
    force_exact_hmm,
    generate,
    load_model,
    make_model,
    raw_std_for,
    svrnn_transition,
    svrnn_variational_step,
    vsl_transition,
    vsl_variational,
)

LOG_2PI = np.log(2.0 * np.pi)


# --- independent numpy re-implementations used as oracles --------------------

def softplus_np(v):
    return np.log1p(np.exp(-np.abs(v))) + np.maximum(v, 0.0)


def mlp_np(params, name, x, head="linear"):
    h1 = np.maximum(params[f"{name}.W1"] @ x + params[f"{name}.b1"], 0.0)
    h2 = np.maximum(params[f"{name}.W2"] @ h1 + params[f"{name}.b2"], 0.0)
    z3 = params[f"{name}.W3"] @ h2 + params[f"{name}.b3"]
    if head == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z3))
    return z3


def gauss_head_np(raw):
    d = raw.shape[0] // 2
    return raw[:d], softplus_np(raw[d:]) + 1e-4


def logpdf_np(mean, std, x):
    return float(np.sum(-0.5 * ((x - mean) / std) ** 2 - np.log(std) - 0.5 * LOG_2PI))


def bern_np(rho):
    return np.array([1.0 - rho[0], rho[0]])


def onehot(c):
    out = np.zeros(2)
    out[c] = 1.0
    return out


# --- zero-weight plug-in values ------------------------------------------------

def test_zero_nets_give_uniform_labels_everywhere():
    for kind in ("dmtmc", "vsl", "svrnn"):
        m = make_model(TmcConfig(kind=kind))  # no seed: all weights zero
        tape = ad.Tape()
        x = tape.leaf(np.array([0.7]))
        y = tape.leaf(onehot(1))
        z = tape.leaf(np.array([0.2, -0.4]))
        if kind == "dmtmc":
            t0 = dmtmc_transition(m, None, None, x, y, z)
            t1 = dmtmc_transition(m, tape.leaf(onehot(0)), tape.leaf(np.zeros(2)), x, y, z)
        elif kind == "vsl":
            t0 = vsl_transition(m, None, None, x, y, z)
            t1 = vsl_transition(m, tape.leaf(np.zeros(2)), tape.leaf(np.zeros(1)), x, y, z)
        else:
            h = tape.leaf(np.zeros(m.config.rnn_state_dim))
            t0, _ = svrnn_transition(m, h, x, y, z)
            t1 = t0
        for terms in (t0, t1):
            assert float(terms.log_py.value) == pytest.approx(np.log(0.5), abs=1e-12)


def test_zero_net_z_prior_value():
    m = make_model(TmcConfig(kind="dmtmc"))
    tape = ad.Tape()
    x = tape.leaf(np.array([0.0]))
    y = tape.leaf(onehot(0))
    z0 = tape.leaf(np.zeros(2))
    terms = dmtmc_transition(m, tape.leaf(onehot(0)), tape.leaf(np.zeros(2)), x, y, z0)
    # zero weights put the std head at softplus(0) + floor = log 2 + 1e-4
    exact = 2 * (-np.log(np.log(2.0) + 1e-4) - 0.5 * LOG_2PI)
    assert float(terms.log_pz.value) == pytest.approx(exact, abs=1e-12)
    idealized = 2 * (-np.log(np.log(2.0)) - 0.5 * LOG_2PI)
    assert float(terms.log_pz.value) == pytest.approx(idealized, abs=1e-3)


# --- single-step recomputation against the plain-numpy oracle --------------------

def test_dmtmc_step_matches_numpy_recomputation():
    m = make_model(TmcConfig(kind="dmtmc"), seed=11)
    params = m.collect_params()
    rng = np.random.default_rng(0)
    x, z, zp = rng.standard_normal((1,)), rng.standard_normal(2), rng.standard_normal(2)
    tape = ad.Tape()
    terms = dmtmc_transition(m, tape.leaf(onehot(0)), tape.leaf(zp),
                             tape.leaf(x), tape.leaf(onehot(1)), tape.leaf(z))
    want_py = np.log(bern_np(mlp_np(params, "py", onehot(0), "sigmoid"))[1])
    mean, std = gauss_head_np(mlp_np(params, "pz", zp))
    want_pz = logpdf_np(mean, std, z)
    mean, std = gauss_head_np(mlp_np(params, "px", np.concatenate([onehot(1), z])))
    want_px = logpdf_np(mean, std, x)
    assert float(terms.log_py.value) == pytest.approx(want_py, abs=1e-12)
    assert float(terms.log_pz.value) == pytest.approx(want_pz, abs=1e-12)
    assert float(terms.log_px.value) == pytest.approx(want_px, abs=1e-12)


def test_svrnn_step_matches_numpy_recomputation():
    m = make_model(TmcConfig(kind="svrnn"), seed=12)
    params = m.collect_params()
    rng = np.random.default_rng(1)
    r = m.config.rnn_state_dim
    x, z, h = rng.standard_normal(1), rng.standard_normal(2), rng.standard_normal(r)
    tape = ad.Tape()
    terms, h1 = svrnn_transition(m, tape.leaf(h), tape.leaf(x), tape.leaf(onehot(0)),
                                 tape.leaf(z))
    want_py = np.log(bern_np(mlp_np(params, "py", h, "sigmoid"))[0])
    mean, std = gauss_head_np(mlp_np(params, "pz", np.concatenate([onehot(0), h])))
    want_pz = logpdf_np(mean, std, z)
    mean, std = gauss_head_np(mlp_np(params, "px", np.concatenate([onehot(0), z, h])))
    want_px = logpdf_np(mean, std, x)
    want_h = np.tanh(params["f.W"] @ np.concatenate([z, onehot(0), x, h]) + params["f.b"])
    assert float(terms.log_py.value) == pytest.approx(want_py, abs=1e-12)
    assert float(terms.log_pz.value) == pytest.approx(want_pz, abs=1e-12)
    assert float(terms.log_px.value) == pytest.approx(want_px, abs=1e-12)
    np.testing.assert_allclose(h1.value, want_h, rtol=0, atol=1e-15)


def test_vsl_step_matches_numpy_recomputation():
    m = make_model(TmcConfig(kind="vsl"), seed=13)
    params = m.collect_params()
    rng = np.random.default_rng(2)
    x, xp, z, zp = (rng.standard_normal(1), rng.standard_normal(1),
                    rng.standard_normal(2), rng.standard_normal(2))
    tape = ad.Tape()
    terms = vsl_transition(m, tape.leaf(zp), tape.leaf(xp), tape.leaf(x),
                           tape.leaf(onehot(1)), tape.leaf(z))
    want_py = np.log(bern_np(mlp_np(params, "py", z, "sigmoid"))[1])
    mean, std = gauss_head_np(mlp_np(params, "pz", np.concatenate([xp, zp])))
    want_pz = logpdf_np(mean, std, z)
    mean, std = gauss_head_np(mlp_np(params, "px", z))
    want_px = logpdf_np(mean, std, x)
    assert float(terms.log_py.value) == pytest.approx(want_py, abs=1e-12)
    assert float(terms.log_pz.value) == pytest.approx(want_pz, abs=1e-12)
    assert float(terms.log_px.value) == pytest.approx(want_px, abs=1e-12)


# --- whole-trajectory joint densities ------------------------------------------

def dmtmc_joint_np(params, xs, labels, zs):
    n = len(labels)
    p0 = np.exp(params["y0.v"]) / np.exp(params["y0.v"]).sum()
    total = np.log(p0[labels[0]]) + logpdf_np(np.zeros(2), np.ones(2), zs[0])
    mean, std = gauss_head_np(mlp_np(params, "px", np.concatenate([onehot(labels[0]), zs[0]])))
    total += logpdf_np(mean, std, xs[0])
    for t in range(1, n):
        total += np.log(bern_np(mlp_np(params, "py", onehot(labels[t - 1]), "sigmoid"))[labels[t]])
        mean, std = gauss_head_np(mlp_np(params, "pz", zs[t - 1]))
        total += logpdf_np(mean, std, zs[t])
        mean, std = gauss_head_np(mlp_np(params, "px", np.concatenate([onehot(labels[t]), zs[t]])))
        total += logpdf_np(mean, std, xs[t])
    return total


def test_dmtmc_trajectory_sum_matches_independent_total():
    m = make_model(TmcConfig(kind="dmtmc"), seed=21)
    params = m.collect_params()
    rng = np.random.default_rng(3)
    n = 16
    xs = rng.standard_normal((n, 1))
    zs = rng.standard_normal((n, 2))
    labels = rng.integers(0, 2, size=n)
    tape = ad.Tape()
    nodes = []
    y_prev = z_prev = None
    for t in range(n):
        y_t = tape.leaf(onehot(labels[t]))
        z_t = tape.leaf(zs[t])
        terms = dmtmc_transition(m, y_prev, z_prev, tape.leaf(xs[t]), y_t, z_t)
        nodes.extend(terms.p_nodes())
        y_prev, z_prev = y_t, z_t
    total = ad.add_n(nodes)
    assert float(total.value) == pytest.approx(dmtmc_joint_np(params, xs, labels, zs), abs=1e-10)


def test_vsl_trajectory_sum_matches_independent_total():
    m = make_model(TmcConfig(kind="vsl"), seed=22)
    params = m.collect_params()
    rng = np.random.default_rng(4)
    n = 12
    xs = rng.standard_normal((n, 1))
    zs = rng.standard_normal((n, 2))
    labels = rng.integers(0, 2, size=n)
    tape = ad.Tape()
    nodes = []
    z_prev = x_prev = None
    for t in range(n):
        z_t = tape.leaf(zs[t])
        x_t = tape.leaf(xs[t])
        terms = vsl_transition(m, z_prev, x_prev, x_t, tape.leaf(onehot(labels[t])), z_t)
        nodes.extend(terms.p_nodes())
        z_prev, x_prev = z_t, x_t
    total = float(ad.add_n(nodes).value)
    want = logpdf_np(np.zeros(2), np.ones(2), zs[0])
    for t in range(n):
        want += np.log(bern_np(mlp_np(params, "py", zs[t], "sigmoid"))[labels[t]])
        mean, std = gauss_head_np(mlp_np(params, "px", zs[t]))
        want += logpdf_np(mean, std, xs[t])
        if t > 0:
            mean, std = gauss_head_np(mlp_np(params, "pz", np.concatenate([xs[t - 1], zs[t - 1]])))
            want += logpdf_np(mean, std, zs[t])
    assert total == pytest.approx(want, abs=1e-10)


def test_svrnn_trajectory_sum_matches_independent_total():
    m = make_model(TmcConfig(kind="svrnn"), seed=23)
    params = m.collect_params()
    rng = np.random.default_rng(5)
    n = 16
    r = m.config.rnn_state_dim
    xs = rng.standard_normal((n, 1))
    zs = rng.standard_normal((n, 2))
    labels = rng.integers(0, 2, size=n)
    tape = ad.Tape()
    nodes = []
    h = tape.leaf(np.zeros(r))
    for t in range(n):
        terms, h = svrnn_transition(m, h, tape.leaf(xs[t]), tape.leaf(onehot(labels[t])),
                                    tape.leaf(zs[t]))
        nodes.extend(terms.p_nodes())
    total = float(ad.add_n(nodes).value)
    want = 0.0
    hv = np.zeros(r)
    for t in range(n):
        want += np.log(bern_np(mlp_np(params, "py", hv, "sigmoid"))[labels[t]])
        mean, std = gauss_head_np(mlp_np(params, "pz", np.concatenate([onehot(labels[t]), hv])))
        want += logpdf_np(mean, std, zs[t])
        mean, std = gauss_head_np(
            mlp_np(params, "px", np.concatenate([onehot(labels[t]), zs[t], hv])))
        want += logpdf_np(mean, std, xs[t])
        hv = np.tanh(params["f.W"] @ np.concatenate([zs[t], onehot(labels[t]), xs[t], hv])
                     + params["f.b"])
    assert total == pytest.approx(want, abs=1e-10)
    np.testing.assert_array_equal(h.value, hv)  # Dirac recurrence is exact


# --- structural invariances ------------------------------------------------------

def test_dmtmc_priors_ignore_the_observation():
    m = make_model(TmcConfig(kind="dmtmc"), seed=31)
    tape = ad.Tape()
    y_prev, z_prev = tape.leaf(onehot(1)), tape.leaf(np.array([0.3, -0.1]))
    y, z = tape.leaf(onehot(0)), tape.leaf(np.array([-0.2, 0.8]))
    a = dmtmc_transition(m, y_prev, z_prev, tape.leaf(np.array([0.0])), y, z)
    b = dmtmc_transition(m, y_prev, z_prev, tape.leaf(np.array([55.0])), y, z)
    assert float(a.log_py.value) == float(b.log_py.value)
    assert float(a.log_pz.value) == float(b.log_pz.value)
    assert float(a.log_px.value) != float(b.log_px.value)


def test_vsl_emission_ignores_the_label():
    m = make_model(TmcConfig(kind="vsl"), seed=32)
    tape = ad.Tape()
    z_prev, x_prev = tape.leaf(np.array([0.1, 0.2])), tape.leaf(np.array([-0.3]))
    x, z = tape.leaf(np.array([0.5])), tape.leaf(np.array([0.7, -0.7]))
    a = vsl_transition(m, z_prev, x_prev, x, tape.leaf(onehot(0)), z)
    b = vsl_transition(m, z_prev, x_prev, x, tape.leaf(onehot(1)), z)
    c = vsl_transition(m, z_prev, x_prev, x, None, z)
    assert float(a.log_px.value) == float(b.log_px.value) == float(c.log_px.value)
    assert float(a.log_pz.value) == float(b.log_pz.value) == float(c.log_pz.value)
    assert c.log_py is None and a.log_py is not None


def test_label_distributions_live_on_the_simplex():
    rng = np.random.default_rng(6)
    for kind in ("dmtmc", "vsl", "svrnn"):
        m = make_model(TmcConfig(kind=kind), seed=33)
        for _ in range(5):
            tape = ad.Tape()
            x = tape.leaf(rng.standard_normal(1))
            y = tape.leaf(onehot(int(rng.integers(2))))
            z = tape.leaf(rng.standard_normal(2))
            if kind == "dmtmc":
                terms = dmtmc_transition(m, tape.leaf(onehot(0)), tape.leaf(rng.standard_normal(2)),
                                         x, y, z)
                h = tape.leaf(rng.standard_normal(m.config.rnn_state_dim))
                step = dmtmc_variational_step(m, x, y, h, z_noise=rng.standard_normal(2))
                probs = [step.q_y.probs.value]
            elif kind == "vsl":
                terms = vsl_transition(m, tape.leaf(rng.standard_normal(2)),
                                       tape.leaf(rng.standard_normal(1)), x, y, z)
                probs = []
            else:
                h = tape.leaf(rng.standard_normal(m.config.rnn_state_dim))
                terms, _ = svrnn_transition(m, h, x, y, z)
                step = svrnn_variational_step(m, x, y, h, z_noise=rng.standard_normal(2))
                probs = [step.q_y.probs.value]
            for p in probs:
                assert p.min() >= 0.0
                assert p.sum() == pytest.approx(1.0, abs=1e-9)
            assert terms.log_py is not None


# --- variational steps -----------------------------------------------------------

def test_dmtmc_variational_relaxed_label_and_state_update():
    m = make_model(TmcConfig(kind="dmtmc"), seed=41)
    params = m.collect_params()
    rng = np.random.default_rng(7)
    tape = ad.Tape()
    x = tape.leaf(np.array([0.4]))
    h = tape.leaf(rng.standard_normal(m.config.rnn_state_dim))
    eps = rng.standard_normal(2)
    g = -np.log(-np.log(rng.uniform(size=2)))
    step = dmtmc_variational_step(m, x, None, h, temperature=0.5, gumbel=g, z_noise=eps)
    soft = step.y.value
    assert soft.shape == (2,) and soft.min() > 0.0
    assert soft.sum() == pytest.approx(1.0, abs=1e-9)
    # q_z conditions on the relaxed label that was actually drawn
    mean, std = gauss_head_np(
        mlp_np(params, "qz", np.concatenate([x.value, soft, h.value])))
    np.testing.assert_allclose(step.q_z.mean.value, mean, atol=1e-12)
    np.testing.assert_allclose(step.z.value, mean + std * eps, atol=1e-12)
    want_h = np.tanh(params["rnn.W"] @ np.concatenate([x.value, soft, step.z.value, h.value])
                     + params["rnn.b"])
    np.testing.assert_allclose(step.h.value, want_h, atol=1e-14)
    # gradients reach the label posterior network through the relaxed draw
    grads = ad.backward(ad.vsum(step.h))
    qy_leaf = dict(m.qy.leaf_items())["qy.W3"]
    assert np.any(grads[qy_leaf] != 0.0)


def test_svrnn_variational_observed_label_matches_recomputation():
    m = make_model(TmcConfig(kind="svrnn"), seed=42)
    params = m.collect_params()
    tape = ad.Tape()
    x = tape.leaf(np.array([-0.9]))
    h = tape.leaf(np.zeros(m.config.rnn_state_dim))
    eps = np.array([0.3, -1.1])
    step = svrnn_variational_step(m, x, tape.leaf(onehot(1)), h, z_noise=eps)
    mean, std = gauss_head_np(
        mlp_np(params, "qz", np.concatenate([x.value, onehot(1), h.value])))
    np.testing.assert_allclose(step.z.value, mean + std * eps, atol=1e-12)
    rho = mlp_np(params, "qy", np.concatenate([x.value, h.value]), "sigmoid")
    np.testing.assert_allclose(step.q_y.probs.value, bern_np(rho), atol=1e-12)
    assert step.h is None


def test_vsl_variational_codes_depend_on_the_whole_sequence():
    m = make_model(TmcConfig(kind="vsl"), seed=43)
    xs = [0.1, -0.4, 0.9, 0.3]
    tape = ad.Tape()
    qzs = vsl_variational(m, [tape.leaf(np.array([v])) for v in xs])
    assert len(qzs) == 4
    tape2 = ad.Tape()
    changed = list(xs)
    changed[-1] = 5.0
    qzs2 = vsl_variational(m, [tape2.leaf(np.array([v])) for v in changed])
    # changing the last observation moves the posterior at the first step
    assert not np.allclose(qzs[0].mean.value, qzs2[0].mean.value)
    with pytest.raises(ValueError):
        vsl_variational(m, [])


# --- gradient spot-check through a composed step ---------------------------------

def test_dmtmc_composed_step_gradients_match_finite_differences():
    config = TmcConfig(kind="dmtmc", hidden_units=6, rnn_state_dim=5)
    m = make_model(config, seed=44)
    rng = np.random.default_rng(8)
    xs = rng.standard_normal((2, 1))
    eps = rng.standard_normal((2, 2))

    def objective():
        tape = ad.Tape()
        h = tape.leaf(np.zeros(5))
        nodes = []
        y_prev = z_prev = None
        for t in range(2):
            x_t = tape.leaf(xs[t])
            y_t = tape.leaf(onehot(t % 2))
            step = dmtmc_variational_step(m, x_t, y_t, h, z_noise=eps[t])
            terms = dmtmc_transition(m, y_prev, z_prev, x_t, y_t, step.z)
            nodes.extend(terms.p_nodes())
            h, y_prev, z_prev = step.h, y_t, step.z
        return ad.add_n(nodes)

    root = objective()
    grads = ad.backward(root)
    named = {}
    for layer in m.all_layers():
        for name, leaf in layer.leaf_items():
            named[name] = grads[leaf]
    params = m.collect_params()
    picks = [("py.W3", (0, 2)), ("pz.W1", (1, 1)), ("px.b3", (0,)),
             ("qz.W1", (2, 3)), ("rnn.W", (1, 4)), ("y0.v", (1,))]
    for name, idx in picks:
        base = params[name].copy()
        h_step = 1e-6
        for sign in (1.0, -1.0):
            bumped = base.copy()
            bumped[idx] += sign * h_step
            m.apply_params({name: bumped})
            if sign > 0:
                up = float(objective().value)
            else:
                down = float(objective().value)
        m.apply_params({name: base})
        fd = (up - down) / (2 * h_step)
        got = named[name][idx]
        assert got == pytest.approx(fd, rel=1e-4, abs=1e-7), name


# --- ancestral sampling ------------------------------------------------------------

def test_generate_forced_emission_is_a_switching_signal():
    m = make_model(TmcConfig(kind="dmtmc"))
    a = np.array([0.0, 2.0])
    force_affine(m.px, np.array([[a[0], a[1], 0.0, 0.0],
                                 [0.0, 0.0, 0.0, 0.0]]),
                 np.array([0.0, raw_std_for(2e-4)]))
    zs, xs, ys = generate(m, 199, seed=9)
    np.testing.assert_allclose(xs[:, 0], a[ys], atol=5e-3)
    assert set(ys.tolist()) == {0, 1}  # uniform chain visits both labels


def test_generate_single_step_and_determinism():
    for kind in ("dmtmc", "vsl", "svrnn"):
        m = make_model(TmcConfig(kind=kind), seed=51)
        zs, xs, ys = generate(m, 0, seed=2)
        assert zs.shape == (1, 2) and xs.shape == (1, 1) and ys.shape == (1,)
        a = generate(m, 25, seed=3)
        b = generate(m, 25, seed=3)
        c = generate(m, 25, seed=4)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)
        assert any(not np.array_equal(u, v) for u, v in zip(a, c))


# --- parameter budget ---------------------------------------------------------------

def test_default_models_have_comparable_parameter_counts():
    totals = {}
    for kind in ("dmtmc", "vsl", "svrnn"):
        config = TmcConfig(kind=kind)
        totals[kind] = make_model(config).n_params()
    assert max(totals.values()) <= 1.10 * min(totals.values()), totals


def test_default_hidden_widths():
    assert TmcConfig(kind="dmtmc").hidden_units == 25
    assert TmcConfig(kind="vsl").hidden_units == 41
    assert TmcConfig(kind="svrnn").hidden_units == 22


# --- degenerate d_z = 0 and the exact discrete reduction ------------------------------

def test_complete_data_loglik_matches_graph_terms():
    rng = np.random.default_rng(10)
    for kind in ("dmtmc", "vsl", "svrnn"):
        m = make_model(TmcConfig(kind=kind, d_z=0), seed=61)
        n = 5
        xs = rng.standard_normal((n, 1))
        labels = rng.integers(0, 2, size=n)
        oh = np.eye(2)[labels]
        tape = ad.Tape()
        nodes = []
        if kind == "dmtmc":
            y_prev = None
            for t in range(n):
                y_t = tape.leaf(oh[t])
                terms = dmtmc_transition(m, y_prev, None if t == 0 else z_prev,
                                         tape.leaf(xs[t]), y_t, tape.leaf(np.zeros(0)))
                z_prev = tape.leaf(np.zeros(0))
                nodes.extend(terms.p_nodes())
                y_prev = y_t
        elif kind == "vsl":
            z_prev = x_prev = None
            for t in range(n):
                z_t = tape.leaf(np.zeros(0))
                x_t = tape.leaf(xs[t])
                terms = vsl_transition(m, z_prev, x_prev, x_t, tape.leaf(oh[t]), z_t)
                nodes.extend(terms.p_nodes())
                z_prev, x_prev = z_t, x_t
        else:
            h = tape.leaf(np.zeros(m.config.rnn_state_dim))
            for t in range(n):
                terms, h = svrnn_transition(m, h, tape.leaf(xs[t]), tape.leaf(oh[t]),
                                            tape.leaf(np.zeros(0)))
                nodes.extend(terms.p_nodes())
        graph_total = float(ad.add_n(nodes).value)
        assert graph_total == pytest.approx(m.complete_data_loglik(xs, oh), abs=1e-10), kind


def test_complete_data_loglik_requires_degenerate_latent():
    m = make_model(TmcConfig(kind="dmtmc"), seed=62)
    with pytest.raises(ValueError):
        m.complete_data_loglik(np.zeros((3, 1)), np.eye(2)[[0, 1, 0]])


def test_forced_model_reduces_to_a_known_markov_chain():
    m = make_model(TmcConfig(kind="dmtmc", d_z=0))
    initial = np.array([0.3, 0.7])
    transition = np.array([[0.9, 0.1], [0.2, 0.8]])
    means = np.array([-1.0, 1.5])
    stds = np.array([0.6, 0.9])
    force_exact_hmm(m, initial, transition, means, stds)
    rng = np.random.default_rng(11)
    n = 9
    xs = rng.standard_normal((n, 1))
    labels = rng.integers(0, 2, size=n)
    want = np.log(initial[labels[0]])
    for t in range(1, n):
        want += np.log(transition[labels[t - 1], labels[t]])
    for t in range(n):
        want += logpdf_np(means[labels[t]], stds[labels[t]], xs[t])
    got = m.complete_data_loglik(xs, np.eye(2)[labels])
    assert got == pytest.approx(want, abs=1e-10)


def test_force_affine_is_exact_on_random_affine_maps():
    import tmcseg.nn as nn
    rng = np.random.default_rng(12)
    net = nn.Mlp2("t", 3, 8, 2)
    A = rng.standard_normal((2, 3))
    c = rng.standard_normal(2)
    force_affine(net, A, c)
    for _ in range(10):
        x = rng.standard_normal(3) * 3
        np.testing.assert_allclose(nn.mlp_values(net, x), A @ x + c, atol=1e-12)
    with pytest.raises(ValueError):
        force_affine(nn.Mlp2("u", 5, 8, 2), np.zeros((2, 5)), np.zeros(2))


# --- configuration and persistence -----------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        TmcConfig(kind="hmm")
    with pytest.raises(ValueError):
        TmcConfig(kind="vsl", d_x=0)
    with pytest.raises(ValueError):
        TmcConfig(kind="vsl", d_z=-1)
    with pytest.raises(ValueError):
        TmcConfig(kind="vsl", n_classes=1)
    with pytest.raises(ValueError):
        TemperatureSchedule(start=0.0)
    with pytest.raises(ValueError):
        TemperatureSchedule(anneal_epochs=-2)


def test_temperature_schedule_values():
    flat = TemperatureSchedule()
    assert flat.value(0) == flat.value(100) == 0.5
    ramp = TemperatureSchedule(start=1.0, end=0.5, anneal_epochs=10)
    assert ramp.value(0) == pytest.approx(1.0)
    assert ramp.value(5) == pytest.approx(0.75)
    assert ramp.value(10) == ramp.value(50) == pytest.approx(0.5)


def test_checkpoint_roundtrip(tmp_path):
    m = make_model(TmcConfig(kind="svrnn", d_z=0,
                             temperature=TemperatureSchedule(1.0, 0.5, 10)), seed=71)
    path = tmp_path / "model.ckpt"
    m.save(path, seed=71, step=42)
    loaded, meta = load_model(path)
    assert meta == {"seed": 71, "step": 42}
    assert loaded.config == m.config
    before = m.collect_params()
    after = loaded.collect_params()
    assert set(before) == set(after)
    for name in before:
        np.testing.assert_array_equal(before[name], after[name])
    rng = np.random.default_rng(13)
    xs = rng.standard_normal((4, 1))
    oh = np.eye(2)[[0, 1, 1, 0]]
    assert loaded.complete_data_loglik(xs, oh) == m.complete_data_loglik(xs, oh)
    with open(tmp_path / "junk.ckpt", "w", encoding="utf-8") as fh:
        json.dump({"format": "other"}, fh)
    with pytest.raises(ValueError):
        load_model(tmp_path / "junk.ckpt")
