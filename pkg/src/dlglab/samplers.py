"""Product-space Langevin-Gibbs sampling and its baselines.

The main sampler alternates two moves on the pair ``(x, sigma_index)``:
a Langevin update of ``x`` using the smoothed score at the current grid
level, and a classifier-driven update of the level given the new ``x``.
Because the level tracks how far the iterate has wandered from the data
manifold, large moves are self-correcting: the chain is re-smoothed
exactly as much as it needs, which is what lets it cross between far
modes that a fixed-level chain cannot.

Emitted samples are produced by splitting the chain into blocks of
``n_skip`` iterates, taking each block's lowest-level iterate (earliest
on ties), integrating it down to the grid floor with a configurable
reverse-time integrator under an ``n_den`` evaluation budget, and
applying one final Tweedie denoising step.  Score evaluations are
tallied by phase so the per-sample cost can be audited exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .diffusion import NoiseGrid, VESchedule, tweedie_denoise
from .errors import DivergenceError
from .integrators import CountingScore, IntegratorSpec
from .mixture import GaussianMixture, mixture_score_fn
from . import rngs

__all__ = [
    "ChainState",
    "GibbsInit",
    "DLGConfig",
    "ChainRecord",
    "SamplerRecord",
    "langevin_step",
    "sigma_update",
    "dlg_run",
    "ald_run",
    "plain_langevin_run",
    "eta_from_kappa",
]


def eta_from_kappa(kappa, dim):
    """Step size from per-dimension displacement: ``eta = sqrt(d) * kappa``.

    ``kappa`` expresses a Langevin step size in a dimension-free way, so
    a step tuned on one problem transfers to another of different
    dimension by holding ``kappa`` fixed.
    """
    kappa = float(kappa)
    dim = int(dim)
    if not np.isfinite(kappa) or kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return float(np.sqrt(dim) * kappa)


@dataclass(frozen=True)
class ChainState:
    """One product-space iterate: position, grid level, and counters."""

    x: np.ndarray
    sigma_index: int
    step: int = 0
    nfe_so_far: int = 0


def langevin_step(state: ChainState, score_fn, grid: NoiseGrid, eta, rng) -> ChainState:
    """One unadjusted Langevin move at the state's current noise level.

    ``x <- x + (eta/2) * score(x, tau) + sqrt(eta) * eps``; consumes one
    score evaluation.  ``eta=0`` leaves ``x`` unchanged (the evaluation
    still happens).
    """
    eta = float(eta)
    if not np.isfinite(eta) or eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    if not 0 <= state.sigma_index < grid.n_levels:
        raise ValueError(f"sigma_index {state.sigma_index} outside grid of {grid.n_levels} levels")
    tau = grid.levels[state.sigma_index]
    score = score_fn(state.x, tau)
    noise = rng.standard_normal(np.shape(state.x))
    x = state.x + 0.5 * eta * score + np.sqrt(eta) * noise
    if not np.all(np.isfinite(x)):
        raise DivergenceError(
            f"Langevin iterate became non-finite at step {state.step + 1}", step=state.step + 1
        )
    return ChainState(x, state.sigma_index, state.step + 1, state.nfe_so_far + 1)


def sigma_update(state: ChainState, classifier, grid: NoiseGrid, mode="argmax", rng=None) -> ChainState:
    """Refresh the noise level from the classifier's posterior over the grid.

    ``mode="argmax"`` takes the most probable level; ``mode="sampled"``
    draws one.  Classifier calls are free: no score evaluation happens.
    """
    if mode not in ("argmax", "sampled"):
        raise ValueError(f"mode must be 'argmax' or 'sampled', got {mode!r}")
    probs = np.asarray(classifier(state.x), dtype=float)
    if probs.shape != (grid.n_levels,):
        raise ValueError(
            f"classifier returned shape {probs.shape}, expected ({grid.n_levels},)"
        )
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise ValueError("classifier output must be finite and non-negative")
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"classifier output sums to {total}, expected 1")
    if mode == "argmax":
        idx = int(np.argmax(probs))
    else:
        if rng is None:
            raise ValueError("sampled sigma updates need an rng")
        idx = int(rng.choice(grid.n_levels, p=probs / total))
    return ChainState(state.x, idx, state.step, state.nfe_so_far)


@dataclass(frozen=True)
class GibbsInit:
    """How each chain is initialized.

    ``style="integrator"`` generates a rough sample by integrating pure
    noise down the full schedule under ``integrator_nfe`` evaluations,
    perturbs it with Gaussian noise of variance ``noise_var``, and runs
    ``gibbs_iters`` warm-up Gibbs iterations.  ``style="at_mode"``
    plants the chain on a chosen mixture mode instead (the worst-case
    start used by the mixing study), with the same optional perturbation
    and warm-up.
    """

    style: str = "integrator"
    mode_index: int = 0
    integrator_nfe: int = 37
    noise_var: float = 0.25
    gibbs_iters: int = 20


@dataclass(frozen=True)
class DLGConfig:
    """Sampler configuration.

    Exactly one of ``eta`` (absolute step size) or ``kappa``
    (per-dimension step size, converted via ``eta_from_kappa``) must be
    set.  ``n_skip`` is the thinning block length, ``n_den`` the score
    budget of the per-sample denoising integration.
    """

    eta: float | None = None
    kappa: float | None = None
    n_skip: int = 1
    n_den: int = 9
    sigma_update: str = "argmax"
    n_chains: int = 1
    samples_per_chain: int = 100
    init: GibbsInit = field(default_factory=GibbsInit)

    def resolve_eta(self, dim):
        if (self.eta is None) == (self.kappa is None):
            raise ValueError("exactly one of eta and kappa must be set")
        if self.eta is not None:
            eta = float(self.eta)
            if not np.isfinite(eta) or eta <= 0:
                raise ValueError(f"eta must be > 0, got {eta}")
            return eta
        return eta_from_kappa(self.kappa, dim)

    def check(self):
        if self.n_skip < 1:
            raise ValueError(f"n_skip must be >= 1, got {self.n_skip}")
        if self.n_den < 1:
            raise ValueError(f"n_den must be >= 1, got {self.n_den}")
        if self.sigma_update not in ("argmax", "sampled"):
            raise ValueError(f"unknown sigma_update mode {self.sigma_update!r}")
        if self.n_chains < 1:
            raise ValueError(f"n_chains must be >= 1, got {self.n_chains}")
        if self.samples_per_chain < 1:
            raise ValueError(f"samples_per_chain must be >= 1, got {self.samples_per_chain}")
        if self.init.style not in ("integrator", "at_mode"):
            raise ValueError(f"unknown init style {self.init.style!r}")
        if self.init.noise_var < 0:
            raise ValueError("init noise_var must be >= 0")
        if self.init.gibbs_iters < 0:
            raise ValueError("init gibbs_iters must be >= 0")
        if self.init.style == "integrator" and self.init.integrator_nfe < 1:
            raise ValueError("init integrator_nfe must be >= 1")


@dataclass
class ChainRecord:
    """Per-chain audit trail."""

    chain_index: int
    init_nfe: int
    langevin_nfe: int
    denoise_nfe: int
    per_sample_nfe: list
    sigma_trace: np.ndarray  # grid index after every Gibbs iteration
    emitted_sigma_index: np.ndarray  # block-minimum level for each emitted sample


@dataclass
class SamplerRecord:
    """Run-level audit: phase totals and per-chain records.

    ``average_nfe`` charges everything including initialization to the
    emitted samples; ``average_nfe_excluding_init`` drops the
    initialization cost, which per-sample budgets amortize away as the
    chains lengthen.
    """

    eta: float
    n_chains: int
    samples_per_chain: int
    chains: list

    @property
    def init_nfe(self):
        return sum(c.init_nfe for c in self.chains)

    @property
    def langevin_nfe(self):
        return sum(c.langevin_nfe for c in self.chains)

    @property
    def denoise_nfe(self):
        return sum(c.denoise_nfe for c in self.chains)

    @property
    def total_nfe(self):
        return self.init_nfe + self.langevin_nfe + self.denoise_nfe

    @property
    def samples_emitted(self):
        return self.n_chains * self.samples_per_chain

    @property
    def average_nfe(self):
        return self.total_nfe / self.samples_emitted

    @property
    def average_nfe_excluding_init(self):
        return (self.langevin_nfe + self.denoise_nfe) / self.samples_emitted


def _resolve_score_fn(target):
    if isinstance(target, GaussianMixture):
        return mixture_score_fn(target)
    if callable(target):
        return target
    raise TypeError("target must be a GaussianMixture or a score callable")


def dlg_run(
    target,
    classifier,
    grid: NoiseGrid,
    sched: VESchedule,
    integrator: IntegratorSpec,
    cfg: DLGConfig,
    seed,
    dim=None,
    threads=1,
):
    """Run the product-space Langevin-Gibbs sampler.

    ``target`` is a ``GaussianMixture`` or a score callable; ``classifier``
    maps a point to a probability vector over the grid (the exact
    posterior and the trained classifier are interchangeable here).
    ``dim`` is only needed for bare score callables, whose dimension
    cannot be probed.  Returns ``(samples, record)`` with ``samples`` of
    shape ``(n_chains, samples_per_chain, d)``; chains use independent
    streams derived from ``seed``, so results are bit-identical for any
    ``threads`` value and any execution order.
    """
    cfg.check()
    score_fn = _resolve_score_fn(target)
    mix = target if isinstance(target, GaussianMixture) else None
    if cfg.init.style == "at_mode":
        if mix is None:
            raise ValueError("at_mode initialization requires a mixture target")
        if not 0 <= cfg.init.mode_index < mix.n_modes:
            raise ValueError(
                f"init mode_index {cfg.init.mode_index} outside [0, {mix.n_modes})"
            )
    if mix is not None:
        dim = mix.dim
    elif dim is None:
        raise ValueError("dim is required when target is a bare score function")
    eta = cfg.resolve_eta(dim)

    def one(c):
        rng = rngs.stream(seed, rngs.KIND_SAMPLER, c)
        return _run_chain(
            c, score_fn, mix, dim, classifier, grid, sched, integrator, cfg, eta, rng
        )

    if int(threads) > 1 and cfg.n_chains > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            results = list(pool.map(one, range(cfg.n_chains)))
    else:
        results = [one(c) for c in range(cfg.n_chains)]
    all_samples = [samples for samples, _ in results]
    chains = [rec for _, rec in results]
    record = SamplerRecord(
        eta=eta,
        n_chains=cfg.n_chains,
        samples_per_chain=cfg.samples_per_chain,
        chains=chains,
    )
    return np.stack(all_samples), record


def _run_chain(chain_index, score_fn, mix, dim, classifier, grid, sched, integrator, cfg, eta, rng):
    counted = CountingScore(score_fn)
    init = cfg.init
    try:
        if init.style == "integrator":
            x = rng.standard_normal(dim) * grid.sigma_max
            res = integrator.run(
                x, grid.sigma_max, grid.sigma_min, init.integrator_nfe, counted, sched, rng
            )
            x = tweedie_denoise(counted, res.x_final, grid.sigma_min)
        else:
            x = mix.means[init.mode_index].copy()
        if init.noise_var > 0:
            x = x + np.sqrt(init.noise_var) * rng.standard_normal(np.shape(x))
        state = ChainState(x, 0, 0, 0)
        state = sigma_update(state, classifier, grid, cfg.sigma_update, rng)
        for _ in range(init.gibbs_iters):
            state = langevin_step(state, counted, grid, eta, rng)
            state = sigma_update(state, classifier, grid, cfg.sigma_update, rng)
        init_nfe = counted.calls

        samples = np.empty((cfg.samples_per_chain, len(state.x)))
        per_sample = []
        emitted_idx = np.empty(cfg.samples_per_chain, dtype=int)
        sigma_trace = np.empty(cfg.samples_per_chain * cfg.n_skip, dtype=int)
        langevin_nfe = 0
        denoise_nfe = 0
        pos = 0
        for s in range(cfg.samples_per_chain):
            start_calls = counted.calls
            best = None
            for _ in range(cfg.n_skip):
                state = langevin_step(state, counted, grid, eta, rng)
                state = sigma_update(state, classifier, grid, cfg.sigma_update, rng)
                sigma_trace[pos] = state.sigma_index
                pos += 1
                if best is None or state.sigma_index < best.sigma_index:
                    best = state  # strict <: ties keep the earliest iterate
            langevin_nfe += counted.calls - start_calls
            mid_calls = counted.calls
            tau = grid.levels[best.sigma_index]
            res = integrator.run(best.x, tau, grid.sigma_min, cfg.n_den, counted, sched, rng)
            y = tweedie_denoise(counted, res.x_final, grid.sigma_min)
            denoise_nfe += counted.calls - mid_calls
            per_sample.append(counted.calls - start_calls)
            emitted_idx[s] = best.sigma_index
            samples[s] = y
    except DivergenceError as err:
        raise DivergenceError(
            f"chain {chain_index}: {err}", step=err.step, chain=chain_index
        ) from err
    rec = ChainRecord(
        chain_index=chain_index,
        init_nfe=init_nfe,
        langevin_nfe=langevin_nfe,
        denoise_nfe=denoise_nfe,
        per_sample_nfe=per_sample,
        sigma_trace=sigma_trace,
        emitted_sigma_index=emitted_idx,
    )
    return samples, rec


@dataclass
class BaselineRecord:
    nfe: int
    n_steps: int
    eta: float


def plain_langevin_run(target, sigma, eta, n_steps, rng, x0):
    """Unadjusted Langevin at one fixed noise level; returns all iterates."""
    score_fn = _resolve_score_fn(target)
    sigma = float(sigma)
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    eta = float(eta)
    if eta < 0:
        raise ValueError("eta must be >= 0")
    counted = CountingScore(score_fn)
    x = np.array(x0, dtype=float)
    out = np.empty((n_steps, x.shape[-1]))
    for i in range(n_steps):
        score = counted(x, sigma)
        x = x + 0.5 * eta * score + np.sqrt(eta) * rng.standard_normal(np.shape(x))
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"Langevin iterate non-finite at step {i + 1}", step=i + 1)
        out[i] = x
    return out, BaselineRecord(nfe=counted.calls, n_steps=n_steps, eta=eta)


def ald_run(target, levels, eta, iters_per_level, rng, x0=None):
    """Annealed Langevin: sweep the levels from high to low.

    At level ``tau`` the step size is ``eta * (tau / min(levels))**2``,
    the usual variance-proportional annealing rule; ``eta`` is therefore
    the step size at the lowest level.  A single level degenerates to
    ``plain_langevin_run``.  Returns every iterate of the sweep.
    """
    score_fn = _resolve_score_fn(target)
    levels = np.sort(np.asarray(levels, dtype=float))[::-1]
    if levels.size == 0 or np.any(levels <= 0):
        raise ValueError("levels must be positive")
    iters_per_level = int(iters_per_level)
    if iters_per_level < 1:
        raise ValueError("iters_per_level must be >= 1")
    eta = float(eta)
    if eta < 0:
        raise ValueError("eta must be >= 0")
    floor = levels.min()
    counted = CountingScore(score_fn)
    if x0 is None:
        dim = target.dim if isinstance(target, GaussianMixture) else None
        if dim is None:
            raise ValueError("x0 is required when target is a bare score function")
        x = rng.standard_normal(dim) * levels.max()
    else:
        x = np.array(x0, dtype=float)
    out = np.empty((levels.size * iters_per_level, x.shape[-1]))
    pos = 0
    for tau in levels:
        eta_lvl = eta * (tau / floor) ** 2
        for _ in range(iters_per_level):
            score = counted(x, tau)
            x = x + 0.5 * eta_lvl * score + np.sqrt(eta_lvl) * rng.standard_normal(np.shape(x))
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"annealed iterate non-finite at step {pos + 1}", step=pos + 1)
            out[pos] = x
            pos += 1
    return out, BaselineRecord(nfe=counted.calls, n_steps=out.shape[0], eta=eta)
