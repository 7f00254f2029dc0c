"""Variance-exploding noise machinery.

Defines the discrete geometric noise grid with its ``1/sigma`` prior,
the continuous schedule ``sigma(t) = sigma_min * (sigma_max/sigma_min)**t``
on ``t in [0, 1]``, the reverse-time drift/diffusion fields derived from
it, Tweedie's posterior-mean denoiser, and the closed-form flow of an
isotropic Gaussian under the probability-flow ODE.  The closed form is
the oracle every integrator is measured against: for a target
``N(0, s^2 I)`` the noise-level marginals are ``N(0, (s^2 + sigma^2) I)``
and the flow map is a pure rescaling.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NoiseGrid",
    "VESchedule",
    "reverse_drift",
    "tweedie_denoise",
    "gaussian_ode_solution",
    "isotropic_gaussian_score",
]

_T_TOL = 1e-12
_SIGMA_TOL = 1e-9


class NoiseGrid:
    """Geometric ladder of noise levels with a ``1/sigma`` prior.

    ``levels[m] = sigma_min * (sigma_max/sigma_min)**(m/(M-1))`` for
    ``m = 0..M-1``; endpoints are exact.  ``prior_weights`` is the
    normalized ``1/sigma`` law over the levels.
    """

    def __init__(self, sigma_min=0.01, sigma_max=50.0, n_levels=1000):
        sigma_min = float(sigma_min)
        sigma_max = float(sigma_max)
        n_levels = int(n_levels)
        if not (np.isfinite(sigma_min) and np.isfinite(sigma_max)):
            raise ValueError("sigma_min and sigma_max must be finite")
        if sigma_min <= 0:
            raise ValueError(f"sigma_min must be > 0, got {sigma_min}")
        if sigma_max <= sigma_min:
            raise ValueError(f"sigma_max must exceed sigma_min, got {sigma_max} <= {sigma_min}")
        if n_levels < 2:
            raise ValueError(f"n_levels must be >= 2, got {n_levels}")
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.n_levels = n_levels
        levels = np.geomspace(sigma_min, sigma_max, n_levels)
        levels[0] = sigma_min
        levels[-1] = sigma_max
        prior = 1.0 / levels
        prior /= prior.sum()
        self.levels = levels
        self.prior_weights = prior
        for arr in (self.levels, self.prior_weights):
            arr.setflags(write=False)

    def __len__(self):
        return self.n_levels

    def nearest_index(self, sigma):
        """Index of the level geometrically closest to ``sigma``."""
        sigma = float(sigma)
        if not np.isfinite(sigma) or sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {sigma}")
        return int(np.argmin(np.abs(np.log(self.levels) - np.log(sigma))))

    def __repr__(self):
        return (
            f"NoiseGrid(sigma_min={self.sigma_min}, sigma_max={self.sigma_max}, "
            f"n_levels={self.n_levels})"
        )


class VESchedule:
    """Continuous-time view of a noise grid.

    The forward process has zero drift and diffusion ``g(t)`` with
    ``g(t)^2 = d sigma^2(t) / dt = 2 sigma^2(t) ln(sigma_max/sigma_min)``,
    so its marginal at time ``t`` is the data convolved with
    ``N(0, sigma(t)^2 I)``.
    """

    def __init__(self, grid: NoiseGrid):
        self.grid = grid
        self.sigma_min = grid.sigma_min
        self.sigma_max = grid.sigma_max
        self.log_ratio = float(np.log(grid.sigma_max / grid.sigma_min))

    def sigma_of_t(self, t):
        t = float(t)
        if not np.isfinite(t) or t < -_T_TOL or t > 1.0 + _T_TOL:
            raise ValueError(f"t must lie in [0, 1], got {t}")
        t = min(max(t, 0.0), 1.0)
        return self.sigma_min * np.exp(t * self.log_ratio)

    def t_of_sigma(self, sigma):
        sigma = float(sigma)
        lo = self.sigma_min * (1.0 - _SIGMA_TOL)
        hi = self.sigma_max * (1.0 + _SIGMA_TOL)
        if not np.isfinite(sigma) or sigma < lo or sigma > hi:
            raise ValueError(
                f"sigma must lie in [{self.sigma_min}, {self.sigma_max}], got {sigma}"
            )
        sigma = min(max(sigma, self.sigma_min), self.sigma_max)
        return np.log(sigma / self.sigma_min) / self.log_ratio

    def g2(self, t):
        sigma = self.sigma_of_t(t)
        return 2.0 * sigma * sigma * self.log_ratio

    def g(self, t):
        return np.sqrt(self.g2(t))


def reverse_drift(score_fn, x, t, sched: VESchedule, mode="sde"):
    """Drift and diffusion of the reverse-time process at ``(x, t)``.

    ``mode="sde"`` gives the reverse SDE (drift ``-g^2 * score``,
    diffusion ``g``); ``mode="ode"`` gives the probability-flow ODE
    (drift ``-g^2/2 * score``, zero diffusion).  Both are dx/dt fields:
    integrating backwards in ``t`` uses negative time increments.
    """
    if mode not in ("sde", "ode"):
        raise ValueError(f"mode must be 'sde' or 'ode', got {mode!r}")
    g2 = sched.g2(t)
    score = score_fn(x, sched.sigma_of_t(t))
    if mode == "sde":
        return -g2 * score, float(np.sqrt(g2))
    return -0.5 * g2 * score, 0.0


def tweedie_denoise(score_fn, x, sigma):
    """Posterior-mean denoiser: ``x + sigma^2 * score(x, sigma)``."""
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return np.asarray(x, dtype=float) + sigma * sigma * score_fn(x, sigma)


def gaussian_ode_solution(s, x0, sigma0, sigma1):
    """Exact probability-flow map for an ``N(0, s^2 I)`` target.

    Transporting ``x0`` from noise level ``sigma0`` to ``sigma1`` along
    the probability-flow ODE rescales it by
    ``sqrt((s^2 + sigma1^2) / (s^2 + sigma0^2))``; works in either
    direction.
    """
    s = float(s)
    sigma0 = float(sigma0)
    sigma1 = float(sigma1)
    if s < 0:
        raise ValueError("s must be >= 0")
    if sigma0 <= 0 or sigma1 <= 0:
        raise ValueError("sigma0 and sigma1 must be > 0")
    factor = np.sqrt((s * s + sigma1 * sigma1) / (s * s + sigma0 * sigma0))
    return np.asarray(x0, dtype=float) * factor


def isotropic_gaussian_score(s):
    """Score of the sigma-smoothed ``N(0, s^2 I)``: ``-x / (s^2 + sigma^2)``."""
    s = float(s)
    if s < 0:
        raise ValueError("s must be >= 0")

    def score(x, sigma):
        return -np.asarray(x, dtype=float) / (s * s + float(sigma) ** 2)

    return score
