"""Analytic posterior-mean denoiser and the trainable MLP denoiser."""

import numpy as np
import pytest

from dualguide.conditions import (
    NULL_CONDITION,
    GMMSlice,
    build_toy_gmm,
    embed_condition,
    sample_data,
)
from dualguide.denoiser import (
    AnalyticDenoiser,
    MLPDenoiser,
    analytic_posterior_mean,
    epsilon_disagreement,
    posterior_responsibilities,
    train_toy_denoiser,
)
from dualguide.errors import ConfigurationError
from dualguide.schedule import make_linear_schedule


def _quadrature_posterior_mean(sl, x_t, t, schedule, n=1201):
    """Dense-grid trapezoid integration of E[x_0 | x_t], independent of the
    closed form under test."""
    abar = schedule.alpha_bar(t)
    lim = np.abs(sl.means).max() + 8.0 * max(sl.sigmas.max(), 1e-3)
    xs = np.linspace(-lim, lim, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    prior = np.zeros_like(X)
    for w, m, s in zip(sl.weights, sl.means, sl.sigmas):
        prior += w / (2 * np.pi * s**2) * np.exp(
            -((X - m[0]) ** 2 + (Y - m[1]) ** 2) / (2 * s**2)
        )
    lik = np.exp(
        -((x_t[0] - np.sqrt(abar) * X) ** 2 + (x_t[1] - np.sqrt(abar) * Y) ** 2)
        / (2 * (1 - abar))
    )
    joint = prior * lik
    z = np.trapezoid(np.trapezoid(joint, xs, axis=1), xs)
    mx = np.trapezoid(np.trapezoid(joint * X, xs, axis=1), xs) / z
    my = np.trapezoid(np.trapezoid(joint * Y, xs, axis=1), xs) / z
    return np.array([mx, my])


def test_point_mass_epsilon_formula():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    gmm = build_toy_gmm(1, 1, 1, seed=3, sigma=0.0)
    model = AnalyticDenoiser(gmm, sched)
    mu = gmm.slice(0, 0).means[0]
    cond = embed_condition(0, 0)
    for t in (1, 400, 1000):
        x_t = np.array([0.7, -1.2])
        abar = sched.alpha_bar(t)
        expected = (x_t - np.sqrt(abar) * mu) / np.sqrt(1 - abar)
        assert np.allclose(model.predict_eps(x_t, t, cond), expected, atol=1e-12)


def test_symmetric_modes_zero_epsilon_at_origin():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    sl = GMMSlice(weights=np.array([0.5, 0.5]),
                  means=np.array([[1.5, 0.5], [-1.5, -0.5]]),
                  sigmas=np.array([0.3, 0.3]))
    mean = analytic_posterior_mean(sl, np.zeros(2), 500, sched)
    assert np.allclose(mean, 0.0, atol=1e-12)


def test_posterior_mean_matches_quadrature():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    rng = np.random.default_rng(3)
    w = np.array([0.2, 0.5, 0.3])
    sl = GMMSlice(weights=w, means=rng.normal(0, 1.5, (3, 2)),
                  sigmas=np.array([0.3, 0.5, 0.2]))
    x_t = rng.normal(0, 1, 2)
    got = analytic_posterior_mean(sl, x_t, 500, sched)
    assert np.max(np.abs(got - _quadrature_posterior_mean(sl, x_t, 500, sched))) < 1e-6


def test_single_component_posterior_closed_form():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    sl = GMMSlice(weights=np.array([1.0]), means=np.array([[2.0, -1.0]]),
                  sigmas=np.array([0.4]))
    x_t = np.array([0.3, 0.6])
    t = 300
    abar = sched.alpha_bar(t)
    var = abar * 0.4**2 + (1 - abar)
    shrink = np.sqrt(abar) * 0.4**2 / var
    expected = sl.means[0] + shrink * (x_t - np.sqrt(abar) * sl.means[0])
    assert np.allclose(analytic_posterior_mean(sl, x_t, t, sched), expected, atol=1e-14)


def test_zero_sigma_posterior_is_weighted_mean():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    sl = GMMSlice(weights=np.array([0.5, 0.5]),
                  means=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                  sigmas=np.zeros(2))
    x_t = np.zeros(2)
    resp = posterior_responsibilities(sl, x_t, 500, sched)
    expected = resp @ sl.means
    assert np.allclose(analytic_posterior_mean(sl, x_t, 500, sched), expected, atol=1e-14)


def test_responsibilities_sum_to_one():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    gmm = build_toy_gmm(2, 2, 4, seed=11)
    sl = gmm.slice(1, 0)
    for t in (1, 500, 1000):
        resp = posterior_responsibilities(sl, np.array([5.0, -3.0]), t, sched)
        assert resp.sum() == pytest.approx(1.0, abs=1e-12)


def test_underflow_falls_back_to_nearest_component():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    sl = GMMSlice(weights=np.array([0.5, 0.5]),
                  means=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                  sigmas=np.array([1e-12, 1e-12]))
    resp = posterior_responsibilities(sl, np.array([1e6, 0.0]), 1, sched)
    assert np.array_equal(resp, [1.0, 0.0])


def test_reconstruction_identity():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    gmm = build_toy_gmm(4, 4, 4, seed=11)
    model = AnalyticDenoiser(gmm, sched, 8, 8, 7)
    cond = embed_condition(0, 0, seed=7)
    rng = np.random.default_rng(5)
    for t in (100, 500, 900):
        x_t = rng.normal(0, 1, 2)
        abar = sched.alpha_bar(t)
        eps = model.predict_eps(x_t, t, cond)
        mean = analytic_posterior_mean(model.resolve_slice(cond), x_t, t, sched)
        assert np.max(np.abs(np.sqrt(1 - abar) * eps + np.sqrt(abar) * mean - x_t)) < 1e-10


def test_null_condition_uses_marginal():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    gmm = build_toy_gmm(2, 2, 2, seed=11)
    model = AnalyticDenoiser(gmm, sched, 8, 8, 7)
    marg = model.resolve_slice(NULL_CONDITION)
    assert len(marg.weights) == 2 * 2 * 2
    assert marg.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_nearest_neighbor_resolution_of_perturbed_vectors():
    sched = make_linear_schedule(1000, 1e-4, 0.02)
    gmm = build_toy_gmm(4, 4, 2, seed=11)
    model = AnalyticDenoiser(gmm, sched, 8, 8, 7)
    pos = embed_condition(2, 3, seed=7)
    assert model.resolve_slice(pos) is gmm.slice(2, 3)
    # A perturbed vector still resolves to some valid slice, deterministically.
    from dualguide.perturb import PerturbConfig, make_negative

    neg = make_negative(pos, PerturbConfig(), np.random.default_rng(0))
    a = model.resolve_slice(neg)
    b = model.resolve_slice(neg)
    assert a is b
    assert any(a is s for s in gmm.slices.values())


def test_predict_eps_input_validation():
    sched = make_linear_schedule(100, 1e-4, 0.02)
    gmm = build_toy_gmm(1, 1, 1, seed=0)
    model = AnalyticDenoiser(gmm, sched)
    cond = embed_condition(0, 0)
    with pytest.raises(ValueError):
        model.predict_eps(np.zeros(3), 50, cond)
    with pytest.raises(ValueError):
        model.predict_eps(np.zeros(2), 0, cond)
    with pytest.raises(ValueError):
        model.predict_eps(np.zeros(2), 101, cond)


def _tiny_training_setup():
    sched = make_linear_schedule(100, 1e-4, 0.02)
    gmm = build_toy_gmm(2, 2, 2, seed=11, sigma=0.05)
    dataset = []
    for c in range(2):
        for s in range(2):
            cond = embed_condition(c, s, seed=7)
            xs = sample_data(gmm, c, s, 64, seed=c * 10 + s)
            dataset.extend((x, cond) for x in xs)
    return sched, gmm, dataset


def test_training_loss_decreases():
    sched, _, dataset = _tiny_training_setup()
    _, losses = train_toy_denoiser(dataset, sched, epochs=8, seed=0)
    assert losses[-1] < losses[0]


def test_training_deterministic():
    sched, _, dataset = _tiny_training_setup()
    a, la = train_toy_denoiser(dataset, sched, epochs=2, seed=0)
    b, lb = train_toy_denoiser(dataset, sched, epochs=2, seed=0)
    assert la == lb
    for pa, pb in zip(a.params.flat(), b.params.flat()):
        assert np.array_equal(pa, pb)


def test_training_validation():
    sched, _, dataset = _tiny_training_setup()
    with pytest.raises(ConfigurationError):
        train_toy_denoiser([], sched)
    with pytest.raises(ConfigurationError):
        train_toy_denoiser(dataset, sched, cond_dropout_prob=1.0)


def test_checkpoint_roundtrip_and_byte_identity(tmp_path):
    sched, _, dataset = _tiny_training_setup()
    model, _ = train_toy_denoiser(dataset, sched, epochs=1, seed=0)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    model.save(p1)
    model.save(p2)
    assert p1.read_bytes() == p2.read_bytes()
    loaded = MLPDenoiser.load(p1)
    cond = embed_condition(1, 1, seed=7)
    x_t = np.array([0.4, -0.2])
    assert np.array_equal(loaded.predict_eps(x_t, 50, cond),
                          model.predict_eps(x_t, 50, cond))
    assert np.array_equal(loaded.predict_eps(x_t, 50, NULL_CONDITION),
                          model.predict_eps(x_t, 50, NULL_CONDITION))


def test_checkpoint_rejects_foreign_files(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"something else entirely\n")
    with pytest.raises(ConfigurationError):
        MLPDenoiser.load(bad)


def test_epsilon_disagreement_zero_for_identical_models():
    sched = make_linear_schedule(100, 1e-4, 0.02)
    gmm = build_toy_gmm(2, 2, 2, seed=11)
    model = AnalyticDenoiser(gmm, sched, 8, 8, 7)
    cond = embed_condition(0, 0, seed=7)
    d = epsilon_disagreement(model, model, gmm, sched, [cond], n_points=16, seed=0)
    assert d == 0.0
    with pytest.raises(ValueError):
        epsilon_disagreement(model, model, gmm, sched, [], n_points=16)
