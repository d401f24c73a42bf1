import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcsim.errors import StabilityError
from qcsim.filters import (
    GaussianBelief,
    GridDensity,
    gaussian_grid,
    gaussian_step,
    grid_step,
    unconditional_check,
)


def one_hot(n=11, k=4):
    w = np.zeros(n)
    w[k] = 1.0
    return GridDensity(np.linspace(-1, 1, n), w)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.3, 0.3))
def test_one_hot_is_fixed(dw):
    p = one_hot()
    out, clipped = grid_step(p, 2.0, dw, 1e-3)
    assert np.array_equal(out.weights, p.weights)
    assert clipped == 0


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(0.1, 5.0))
def test_grid_normalization(dw, gamma):
    p = gaussian_grid(0.3, 0.5)
    out, clipped = grid_step(p, gamma, dw, 1e-3)
    assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(out.weights >= 0)


def test_grid_tracks_gaussian_moments_under_shared_noise():
    gamma, dt = 1.0, 1e-4
    rng = np.random.default_rng(0)
    p = gaussian_grid(0.0, 1.0)
    b = GaussianBelief(0.0, 1.0)
    var_path = 1.0
    for dw in rng.standard_normal(100) * math.sqrt(dt):
        p, _ = grid_step(p, gamma, dw, dt)
        b = gaussian_step(b, gamma, dw, dt)
        # Ito update of a Gaussian density: sigma -> sigma - 2 Gamma sigma^2 dW^2
        var_path -= 2 * gamma * var_path**2 * dw**2
    assert p.mean == pytest.approx(b.mean, abs=1e-3)
    assert p.variance == pytest.approx(var_path, abs=1e-4)
    # the deterministic law differs only through sum(dW^2) - t fluctuations
    assert p.variance == pytest.approx(b.variance, abs=5e-3)


def test_grid_stability_error():
    with pytest.raises(StabilityError):
        grid_step(gaussian_grid(0.0, 1.0), 10.0, 0.0, 0.02)


def test_gaussian_exact_law():
    gamma, sigma0, dt = 2.0, 0.7, 1e-3
    b = GaussianBelief(0.2, sigma0)
    rng = np.random.default_rng(1)
    for k, dw in enumerate(rng.standard_normal(500) * math.sqrt(dt), start=1):
        b = gaussian_step(b, gamma, dw, dt)
        assert b.variance == pytest.approx(sigma0 * math.exp(-2 * gamma * k * dt), abs=1e-8)


def test_variance_is_deterministic_for_every_law():
    for law in ("exact", "euler", "riccati"):
        v1 = gaussian_step(GaussianBelief(0.0, 1.0), 1.0, 0.3, 1e-3, law).variance
        v2 = gaussian_step(GaussianBelief(0.0, 1.0), 1.0, -0.1, 1e-3, law).variance
        assert v1 == v2
    with pytest.raises(ValueError):
        gaussian_step(GaussianBelief(0.0, 1.0), 1.0, 0.0, 1e-3, "bogus")


def test_riccati_law_is_exact_for_its_ode():
    gamma, sigma0, dt, n = 1.0, 1.0, 1e-3, 1000
    b = GaussianBelief(0.0, sigma0)
    for _ in range(n):
        b = gaussian_step(b, gamma, 0.0, dt, "riccati")
    assert b.variance == pytest.approx(sigma0 / (1 + 2 * gamma * sigma0 * n * dt), rel=1e-12)


def test_zero_variance_freezes_mean():
    b = GaussianBelief(1.5, 0.0)
    for dw in (0.3, -2.0, 10.0):
        b = gaussian_step(b, 3.0, dw, 1e-3)
    assert b.mean == 1.5


def test_mean_is_martingale():
    gamma, dt, n = 1.0, 1e-3, 100_000
    dws = np.random.default_rng(2).standard_normal(n) * math.sqrt(dt)
    means = np.array([gaussian_step(GaussianBelief(0.4, 0.8), gamma, dw, dt).mean for dw in dws])
    se = means.std() / math.sqrt(n)
    assert abs(means.mean() - 0.4) < 3 * se


def test_unconditional_check_antithetic():
    for p in (one_hot(), gaussian_grid(0.0, 2.0)):
        ok, dev = unconditional_check(p, 1.0, 1e-3, 0.02)
        assert ok, dev


def test_unconditional_average_over_many_draws():
    gamma, dt, n = 1.0, 1e-3, 10_000
    p = gaussian_grid(0.0, 1.0, n=50)
    dws = np.random.default_rng(3).standard_normal(n) * math.sqrt(dt)
    stack = np.array([grid_step(p, gamma, dw, dt)[0].weights for dw in dws])
    se = stack.std(axis=0) / math.sqrt(n)
    # the step is linear in dW, so every weight shares the z-score of mean(dW)
    assert np.all(np.abs(stack.mean(axis=0) - p.weights) <= 3 * se + 1e-15)


def test_grid_density_validation():
    with pytest.raises(ValueError):
        GridDensity(np.array([0.0, 1.0]), np.array([0.7, 0.7]))
    with pytest.raises(ValueError):
        GridDensity(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        GaussianBelief(0.0, -1.0)
