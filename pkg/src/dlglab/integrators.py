"""Reverse-time integrators parameterized by noise level.

Every integrator transports a state from ``sigma_start`` down to
``sigma_end`` (clamped to the grid floor, never zero) and reports the
exact number of score-function evaluations it performed, counted by an
instrumenting wrapper around the supplied score function.  Rejected
adaptive steps count; classifier calls never enter these totals.

The deterministic methods discretize the probability-flow field in
sigma, ``dx/dsigma = -sigma * score(x, sigma)``; the stochastic ones
discretize the reverse SDE with matching noise injection.  States may
be single points ``(d,)`` or batches ``(n, d)``: each evaluation of a
batch counts once, which makes the reported ``nfe`` the per-trajectory
figure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import VESchedule, reverse_drift
from .errors import DivergenceError, StalledSolverError

__all__ = [
    "CountingScore",
    "IntegratorRun",
    "IntegratorResult",
    "IntegratorSpec",
    "INTEGRATOR_NAMES",
    "euler_maruyama",
    "reverse_diffusion",
    "prob_flow_euler",
    "rk45",
    "karras_det",
    "karras_stoch",
    "karras_levels",
    "run_integrator",
]


class CountingScore:
    """Wrap a score function and count its evaluations."""

    __slots__ = ("fn", "calls")

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x, sigma):
        self.calls += 1
        return self.fn(x, sigma)


@dataclass
class IntegratorRun:
    """One integration request.

    ``budget`` is the intended number of score evaluations for the
    fixed-step methods (the Heun-based methods use the largest odd
    count that fits); the adaptive method ignores it in favor of its
    tolerances.  ``rng`` is only consulted by the stochastic methods.
    """

    x0: np.ndarray
    sigma_start: float
    sigma_end: float
    budget: int
    rng: object = None


@dataclass
class IntegratorResult:
    x_final: np.ndarray
    nfe: int
    steps: int


def _check_run(run: IntegratorRun, sched: VESchedule):
    x0 = np.asarray(run.x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    s0 = float(run.sigma_start)
    s1 = float(run.sigma_end)
    if not (np.isfinite(s0) and np.isfinite(s1)):
        raise ValueError("sigma_start and sigma_end must be finite")
    floor = sched.grid.sigma_min
    s1 = max(s1, floor)  # never integrate below the grid floor
    if s0 > sched.grid.sigma_max * (1.0 + 1e-9):
        raise ValueError(
            f"sigma_start {s0} exceeds the grid ceiling {sched.grid.sigma_max}"
        )
    if s0 < s1 - 1e-15:
        raise ValueError(f"sigma_start {s0} must be >= sigma_end {s1}")
    budget = int(run.budget)
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {run.budget}")
    if s1 > s0:
        s1 = s0  # equal within tolerance: treat as a zero-length interval
    return x0, s0, s1, budget


def _noise_like(rng, x):
    if rng is None:
        raise ValueError("this integrator is stochastic and needs an rng")
    return rng.standard_normal(np.shape(x))


def _guard(x, step, name):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"{name} produced a non-finite state at step {step}", step=step)


def euler_maruyama(run, score_fn, sched):
    """Euler-Maruyama on the reverse SDE with uniform time steps.

    The ladder is uniform in the schedule's time variable (geometric in
    sigma), the standard discretization for this process: a ladder
    uniform in sigma makes the time step near the noise floor orders of
    magnitude larger than elsewhere and destroys the terminal moments.
    """
    x, s0, s1, budget = _check_run(run, sched)
    if s0 == s1:
        return IntegratorResult(x, 0, 0)
    counted = CountingScore(score_fn)
    times = np.linspace(sched.t_of_sigma(s0), sched.t_of_sigma(s1), budget + 1)
    ladder = sched.sigma_min * np.exp(times * sched.log_ratio)
    for i in range(budget):
        drift, g = reverse_drift(counted, x, times[i], sched, mode="sde")
        dt = times[i + 1] - times[i]  # negative: time runs backwards
        x = x + drift * dt + g * np.sqrt(-dt) * _noise_like(run.rng, x)
        _guard(x, i, "euler_maruyama")
    return IntegratorResult(x, counted.calls, budget)


def reverse_diffusion(run, score_fn, sched):
    """Ancestral-style discretization over a geometric sigma ladder.

    Each step from level ``sigma_i`` to the next smaller ``sigma_j``
    applies ``x += (sigma_i^2 - sigma_j^2) * score(x, sigma_i)`` and
    injects noise of exactly the removed variance.
    """
    x, s0, s1, budget = _check_run(run, sched)
    if s0 == s1:
        return IntegratorResult(x, 0, 0)
    counted = CountingScore(score_fn)
    ladder = np.geomspace(s0, s1, budget + 1)
    for i in range(budget):
        dvar = ladder[i] ** 2 - ladder[i + 1] ** 2
        score = counted(x, ladder[i])
        x = x + dvar * score + np.sqrt(dvar) * _noise_like(run.rng, x)
        _guard(x, i, "reverse_diffusion")
    return IntegratorResult(x, counted.calls, budget)


def prob_flow_euler(run, score_fn, sched):
    """Explicit Euler on ``dx/dsigma = -sigma * score`` over a uniform ladder."""
    x, s0, s1, budget = _check_run(run, sched)
    if s0 == s1:
        return IntegratorResult(x, 0, 0)
    counted = CountingScore(score_fn)
    ladder = np.linspace(s0, s1, budget + 1)
    for i in range(budget):
        d = -ladder[i] * counted(x, ladder[i])
        x = x + (ladder[i + 1] - ladder[i]) * d
        _guard(x, i, "prob_flow_euler")
    return IntegratorResult(x, counted.calls, budget)


def karras_levels(sigma_start, sigma_end, n_steps, rho=7.0):
    """Warped sigma ladder: uniform in ``sigma**(1/rho)``; endpoints exact."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if rho <= 0:
        raise ValueError("rho must be > 0")
    ramp = np.linspace(0.0, 1.0, n_steps + 1)
    inv_start = sigma_start ** (1.0 / rho)
    inv_end = sigma_end ** (1.0 / rho)
    levels = (inv_start + ramp * (inv_end - inv_start)) ** rho
    levels[0] = sigma_start
    levels[-1] = sigma_end
    return levels


def _heun_sweep(run, score_fn, sched, rho, churn, s_noise):
    x, s0, s1, budget = _check_run(run, sched)
    if s0 == s1:
        return IntegratorResult(x, 0, 0)
    counted = CountingScore(score_fn)
    n_steps = max(1, (budget + 1) // 2)  # nfe = 2n - 1
    ladder = karras_levels(s0, s1, n_steps, rho)
    gamma = min(churn / n_steps, np.sqrt(2.0) - 1.0) if churn > 0 else 0.0
    for i in range(n_steps):
        sigma, sigma_next = ladder[i], ladder[i + 1]
        if gamma > 0:
            sigma_hat = sigma * (1.0 + gamma)
            bump = np.sqrt(sigma_hat**2 - sigma**2) * s_noise
            x = x + bump * _noise_like(run.rng, x)
        else:
            sigma_hat = sigma
        d = -sigma_hat * counted(x, sigma_hat)
        h = sigma_next - sigma_hat
        if i == n_steps - 1:
            x = x + h * d  # final step: plain Euler, no corrector
        else:
            x_pred = x + h * d
            d_next = -sigma_next * counted(x_pred, sigma_next)
            x = x + h * 0.5 * (d + d_next)
        _guard(x, i, "karras")
    return IntegratorResult(x, counted.calls, n_steps)


def karras_det(run, score_fn, sched, rho=7.0):
    """Heun's method on the warped ladder; final step plain Euler."""
    return _heun_sweep(run, score_fn, sched, rho, churn=0.0, s_noise=1.0)


def karras_stoch(run, score_fn, sched, rho=7.0, churn=0.0, s_noise=1.0):
    """Heun with per-step noise inflation.

    Before each step the level is inflated to ``sigma*(1+gamma)`` with
    ``gamma = min(churn/n_steps, sqrt(2)-1)`` and fresh noise of the
    corresponding variance (scaled by ``s_noise``) is added.  With
    ``churn=0`` no noise is drawn and the sweep is bit-identical to the
    deterministic variant.
    """
    if churn < 0:
        raise ValueError("churn must be >= 0")
    return _heun_sweep(run, score_fn, sched, rho, churn=churn, s_noise=s_noise)


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# Difference between the 5th- and 4th-order weights.
_DP_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_RK_SAFETY = 0.9
_RK_MIN_FACTOR = 0.2
_RK_MAX_FACTOR = 10.0


def rk45(run, score_fn, sched, rtol=1e-5, atol=1e-5, max_rejections=100_000):
    """Adaptive Dormand-Prince 5(4) on the probability-flow field.

    Step acceptance uses the RMS of the local error against the mixed
    tolerance ``atol + rtol * max(|x|, |x_new|)`` with safety factor
    0.9 and step-growth clamped to [0.2, 10].  Every stage evaluation
    counts toward ``nfe``, rejected attempts included; more than
    ``max_rejections`` consecutive rejections raises
    ``StalledSolverError``.
    """
    x, s0, s1, _ = _check_run(run, sched)
    if s0 == s1:
        return IntegratorResult(x, 0, 0)
    if rtol <= 0 or atol < 0:
        raise ValueError("rtol must be > 0 and atol >= 0")
    counted = CountingScore(score_fn)

    def f(sigma, y):
        return -sigma * counted(y, sigma)

    y = x
    sigma = s0
    f0 = f(sigma, y)
    h = _initial_step(f, sigma, y, f0, s1, rtol, atol)
    accepted = 0
    rejections = 0
    was_rejected = False
    k = [None] * 7
    while sigma > s1 + 1e-14 * s1:
        h = min(h, sigma - s1)
        if h < 1e-14 * max(sigma, 1.0):
            raise StalledSolverError(f"step size underflow at sigma={sigma}")
        delta = -h
        k[0] = f0
        for j in range(1, 7):
            y_stage = y + delta * sum(a * kk for a, kk in zip(_DP_A[j], k[:j]))
            k[j] = f(sigma + delta * _DP_C[j], y_stage)
        y_new = y + delta * sum(b * kk for b, kk in zip(_DP_B[:6], k[:6]))
        err = delta * sum(e * kk for e, kk in zip(_DP_E, k))
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if err_norm <= 1.0:
            sigma = sigma - h
            y = y_new
            f0 = k[6]  # FSAL: last stage is f at the accepted point
            accepted += 1
            rejections = 0
            factor = _RK_MAX_FACTOR if err_norm == 0 else _RK_SAFETY * err_norm ** -0.2
            if was_rejected:
                factor = min(factor, 1.0)
            h *= min(max(factor, _RK_MIN_FACTOR), _RK_MAX_FACTOR)
            was_rejected = False
            _guard(y, accepted, "rk45")
        else:
            rejections += 1
            was_rejected = True
            if rejections > max_rejections:
                raise StalledSolverError(
                    f"{rejections} consecutive rejected steps at sigma={sigma}"
                )
            h *= min(max(_RK_SAFETY * err_norm**-0.2, _RK_MIN_FACTOR), 1.0)
    return IntegratorResult(y, counted.calls, accepted)


def _initial_step(f, sigma0, y0, f0, sigma_end, rtol, atol):
    """Pick a starting step from two probe evaluations (one extra nfe)."""
    span = sigma0 - sigma_end
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 - h0 * f0
    f1 = f(sigma0 - h0, y1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


INTEGRATOR_NAMES = (
    "euler_maruyama",
    "reverse_diffusion",
    "prob_flow_euler",
    "rk45",
    "karras_det",
    "karras_stoch",
)

_STOCHASTIC = {"euler_maruyama", "reverse_diffusion", "karras_stoch"}


@dataclass(frozen=True)
class IntegratorSpec:
    """Named integrator plus its method parameters.

    This is the object samplers and the harness carry around; ``run``
    dispatches one integration with a per-call budget.
    """

    name: str = "karras_det"
    rtol: float = 1e-5
    atol: float = 1e-5
    rho: float = 7.0
    churn: float = 0.0
    s_noise: float = 1.0

    def __post_init__(self):
        if self.name not in INTEGRATOR_NAMES:
            raise ValueError(
                f"unknown integrator {self.name!r}; expected one of {INTEGRATOR_NAMES}"
            )

    @property
    def stochastic(self) -> bool:
        return self.name in _STOCHASTIC and not (
            self.name == "karras_stoch" and self.churn == 0
        )

    def run(self, x0, sigma_start, sigma_end, budget, score_fn, sched, rng=None):
        req = IntegratorRun(x0, sigma_start, sigma_end, budget, rng)
        if self.name == "euler_maruyama":
            return euler_maruyama(req, score_fn, sched)
        if self.name == "reverse_diffusion":
            return reverse_diffusion(req, score_fn, sched)
        if self.name == "prob_flow_euler":
            return prob_flow_euler(req, score_fn, sched)
        if self.name == "rk45":
            return rk45(req, score_fn, sched, rtol=self.rtol, atol=self.atol)
        if self.name == "karras_det":
            return karras_det(req, score_fn, sched, rho=self.rho)
        return karras_stoch(
            req, score_fn, sched, rho=self.rho, churn=self.churn, s_noise=self.s_noise
        )


def run_integrator(name, run, score_fn, sched, **params):
    """Functional dispatch by name; see ``IntegratorSpec`` for params."""
    spec = IntegratorSpec(name=name, **params)
    return spec.run(run.x0, run.sigma_start, run.sigma_end, run.budget, score_fn, sched, run.rng)
