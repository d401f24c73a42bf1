"""Classical conditional filters for a continuously observed controller variable.

Grid densities follow ``dP = sqrt(2 Gamma)(X - <X>) P dW``; Gaussian beliefs
carry ``(mean, variance)`` with ``d<X> = sqrt(2 Gamma) sigma dW``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import StabilityError

log = logging.getLogger(__name__)

GRID_POINTS = 200
GRID_HALFWIDTH_SD = 6.0
FILTER_STABILITY = 0.1
CLIP_WARN = 1e-6


@dataclass(frozen=True)
class GridDensity:
    """Normalized weights on an ascending grid of X values."""

    x_values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if x.ndim != 1 or x.shape != w.shape:
            raise ValueError("x_values and weights must be 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x_values must be strictly ascending")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "x_values", x)
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> float:
        return float(self.weights @ self.x_values)

    @property
    def variance(self) -> float:
        d = self.x_values - self.mean
        return float(self.weights @ (d * d))


@dataclass(frozen=True)
class GaussianBelief:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")


def gaussian_grid(mean: float, variance: float, n: int = GRID_POINTS,
                  halfwidth: float = GRID_HALFWIDTH_SD) -> GridDensity:
    """Gaussian sampled on ``n`` points over ``mean +/- halfwidth`` standard deviations."""
    if not variance > 0:
        raise ValueError("gaussian_grid needs a positive variance")
    sd = math.sqrt(variance)
    x = mean + sd * np.linspace(-halfwidth, halfwidth, n)
    w = np.exp(-0.5 * ((x - mean) / sd) ** 2)
    return GridDensity(x, w / w.sum())


def grid_step(p: GridDensity, gamma: float, dW: float, dt: float):
    """One Ito step of the conditional grid density.

    Returns ``(density, clipped_mass)``.  Negative weights are clipped to zero
    before renormalizing; the removed mass is reported.
    """
    if dt * gamma > FILTER_STABILITY:
        raise StabilityError(f"dt*gamma = {dt * gamma:.3g} exceeds {FILTER_STABILITY}")
    w = p.weights
    m = float(w @ p.x_values)
    w = w + math.sqrt(2.0 * gamma) * dW * (p.x_values - m) * w
    neg = w < 0
    clipped = float(-w[neg].sum())
    if clipped:
        w = np.where(neg, 0.0, w)
        if clipped > CLIP_WARN:
            log.warning("grid_step clipped mass %.2e", clipped)
    return GridDensity(p.x_values, w / w.sum()), clipped


def gaussian_step(b: GaussianBelief, gamma: float, dW: float, dt: float,
                  variance_law: str = "exact") -> GaussianBelief:
    """One step of the Gaussian moment equations.

    ``variance_law`` selects the variance update:

    ``"exact"``
        ``sigma * exp(-2 Gamma dt)``, the exponential law.
    ``"euler"``
        ``sigma * (1 - 2 Gamma dt)``.
    ``"riccati"``
        ``sigma / (1 + 2 Gamma sigma dt)``, the exact step of
        ``d sigma = -2 Gamma sigma^2 dt`` obeyed by a Bayesian Gaussian filter.
    """
    mean = b.mean + math.sqrt(2.0 * gamma) * b.variance * dW
    if variance_law == "exact":
        var = b.variance * math.exp(-2.0 * gamma * dt)
    elif variance_law == "euler":
        var = b.variance * (1.0 - 2.0 * gamma * dt)
    elif variance_law == "riccati":
        var = b.variance / (1.0 + 2.0 * gamma * b.variance * dt)
    else:
        raise ValueError(f"unknown variance_law {variance_law!r}")
    return GaussianBelief(mean, max(var, 0.0))


def unconditional_check(p: GridDensity, gamma: float, dt: float, dW: float, tol: float = 1e-12):
    """Average ``grid_step`` over the antithetic pair ``+dW, -dW``.

    Returns ``(ok, deviation)`` where ``deviation`` is the largest absolute
    difference between the pair average and ``p``.
    """
    up, c1 = grid_step(p, gamma, dW, dt)
    down, c2 = grid_step(p, gamma, -dW, dt)
    avg = 0.5 * (up.weights + down.weights)
    dev = float(np.max(np.abs(avg - p.weights)))
    return dev <= tol and c1 == 0 and c2 == 0, dev
