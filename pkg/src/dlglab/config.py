"""Typed experiment configuration with strict, collect-everything validation.

A run is described by one JSON document made of small blocks, each
mirrored by a frozen dataclass below.  Parsing is strict — unknown keys
and type mismatches are reported, not ignored — and validation gathers
every problem before raising ``ConfigError``, so a bad config surfaces
all of its violations in one round trip.

``ExperimentConfig.to_dict`` emits the fully resolved snapshot (every
default made explicit).  Feeding that snapshot back through
``ExperimentConfig.from_dict`` reproduces the exact same configuration,
which is what makes manifest-driven re-runs byte-for-byte repeatable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .diffusion import NoiseGrid, VESchedule
from .errors import ConfigError
from .integrators import INTEGRATOR_NAMES, IntegratorSpec
from .mixture import GaussianMixture, load_mixture, make_benchmark_mixture
from .samplers import DLGConfig, GibbsInit

__all__ = [
    "MixturePreset",
    "MixtureBlock",
    "ScheduleBlock",
    "InitBlock",
    "SamplerBlock",
    "BaselineBlock",
    "IntegratorBlock",
    "DiagnosticsBlock",
    "BenchmarkBlock",
    "AblationBlock",
    "TrainBlock",
    "ExperimentConfig",
    "load_config",
]


class _Reader:
    """Pulls typed values out of a raw dict, recording every complaint."""

    def __init__(self, raw, prefix, problems):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            problems.append(f"{prefix}: expected an object, got {type(raw).__name__}")
            raw = {}
        self.raw = dict(raw)
        self.prefix = prefix
        self.problems = problems

    def _at(self, key):
        return f"{self.prefix}.{key}" if self.prefix else key

    def take(self, key, default):
        return self.raw.pop(key, default)

    def take_int(self, key, default):
        value = self.raw.pop(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            self.problems.append(f"{self._at(key)}: expected an integer, got {value!r}")
            return default
        return value

    def take_float(self, key, default):
        value = self.raw.pop(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.problems.append(f"{self._at(key)}: expected a number, got {value!r}")
            return default
        return float(value)

    def take_str(self, key, default):
        value = self.raw.pop(key, default)
        if value is None:
            return None
        if not isinstance(value, str):
            self.problems.append(f"{self._at(key)}: expected a string, got {value!r}")
            return default
        return value

    def take_bool(self, key, default):
        value = self.raw.pop(key, default)
        if value is None:
            return None
        if not isinstance(value, bool):
            self.problems.append(f"{self._at(key)}: expected true/false, got {value!r}")
            return default
        return value

    def take_numbers(self, key, default):
        value = self.raw.pop(key, None)
        if value is None:
            return tuple(default)
        if not isinstance(value, (list, tuple)) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value
        ):
            self.problems.append(f"{self._at(key)}: expected a list of numbers, got {value!r}")
            return tuple(default)
        return tuple(float(v) for v in value)

    def take_ints(self, key, default):
        value = self.raw.pop(key, None)
        if value is None:
            return tuple(default)
        if not isinstance(value, (list, tuple)) or any(
            isinstance(v, bool) or not isinstance(v, int) for v in value
        ):
            self.problems.append(f"{self._at(key)}: expected a list of integers, got {value!r}")
            return tuple(default)
        return tuple(int(v) for v in value)

    def finish(self):
        for key in sorted(self.raw):
            self.problems.append(f"{self._at(key)}: unknown field")


def _require(problems, condition, message):
    if not condition:
        problems.append(message)


@dataclass(frozen=True)
class MixturePreset:
    """Parameters for the built-in benchmark target generator."""

    n_modes: int = 50
    dim: int = 16
    mode_scale: float = 0.75
    min_separation: float = 2.0
    base_variance: float = 0.0
    seed: int = 0

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            n_modes=r.take_int("n_modes", cls.n_modes),
            dim=r.take_int("dim", cls.dim),
            mode_scale=r.take_float("mode_scale", cls.mode_scale),
            min_separation=r.take_float("min_separation", cls.min_separation),
            base_variance=r.take_float("base_variance", cls.base_variance),
            seed=r.take_int("seed", cls.seed),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(out, self.n_modes >= 1, f"{prefix}.n_modes: must be >= 1 (got {self.n_modes})")
        _require(out, self.dim >= 1, f"{prefix}.dim: must be >= 1 (got {self.dim})")
        _require(out, self.mode_scale > 0, f"{prefix}.mode_scale: must be > 0 (got {self.mode_scale})")
        _require(
            out,
            self.min_separation >= 0,
            f"{prefix}.min_separation: must be >= 0 (got {self.min_separation})",
        )
        _require(
            out,
            self.base_variance >= 0,
            f"{prefix}.base_variance: must be >= 0 (got {self.base_variance})",
        )
        _require(out, self.seed >= 0, f"{prefix}.seed: must be >= 0 (got {self.seed})")
        return out

    def to_dict(self):
        return {
            "n_modes": self.n_modes,
            "dim": self.dim,
            "mode_scale": self.mode_scale,
            "min_separation": self.min_separation,
            "base_variance": self.base_variance,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class MixtureBlock:
    """Target definition: a saved mixture file or a generator preset."""

    file: str | None = None
    preset: MixturePreset | None = None

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        file = r.take_str("file", None)
        preset_raw = r.take("preset", None)
        preset = (
            MixturePreset.from_dict(preset_raw, f"{prefix}.preset", problems)
            if preset_raw is not None
            else None
        )
        r.finish()
        if file is None and preset is None:
            preset = MixturePreset()
        return cls(file=file, preset=preset)

    def problems(self, prefix):
        out = []
        if self.file is not None and self.preset is not None:
            out.append(f"{prefix}: give either 'file' or 'preset', not both")
        if self.preset is not None:
            out.extend(self.preset.problems(f"{prefix}.preset"))
        return out

    def build(self) -> GaussianMixture:
        if self.file is not None:
            return load_mixture(self.file)
        p = self.preset
        return make_benchmark_mixture(
            n_modes=p.n_modes,
            dim=p.dim,
            mode_scale=p.mode_scale,
            min_separation=p.min_separation,
            base_variance=p.base_variance,
            seed=p.seed,
        )

    def to_dict(self):
        if self.file is not None:
            return {"file": self.file}
        return {"preset": self.preset.to_dict()}


@dataclass(frozen=True)
class ScheduleBlock:
    """Geometric noise grid bounds and resolution."""

    sigma_min: float = 0.01
    sigma_max: float = 50.0
    n_levels: int = 1000

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            sigma_min=r.take_float("sigma_min", cls.sigma_min),
            sigma_max=r.take_float("sigma_max", cls.sigma_max),
            n_levels=r.take_int("n_levels", cls.n_levels),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(out, self.sigma_min > 0, f"{prefix}.sigma_min: must be > 0 (got {self.sigma_min})")
        _require(
            out,
            self.sigma_max > self.sigma_min,
            f"{prefix}.sigma_max: must exceed sigma_min (got {self.sigma_max} <= {self.sigma_min})",
        )
        _require(out, self.n_levels >= 2, f"{prefix}.n_levels: must be >= 2 (got {self.n_levels})")
        return out

    def grid(self) -> NoiseGrid:
        return NoiseGrid(self.sigma_min, self.sigma_max, self.n_levels)

    def schedule(self) -> VESchedule:
        return VESchedule(self.grid())

    def to_dict(self):
        return {
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "n_levels": self.n_levels,
        }


@dataclass(frozen=True)
class InitBlock:
    """Chain initialization policy."""

    style: str = "integrator"
    mode_index: int = 0
    integrator_nfe: int = 37
    noise_var: float = 0.25
    gibbs_iters: int = 20

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            style=r.take_str("style", cls.style),
            mode_index=r.take_int("mode_index", cls.mode_index),
            integrator_nfe=r.take_int("integrator_nfe", cls.integrator_nfe),
            noise_var=r.take_float("noise_var", cls.noise_var),
            gibbs_iters=r.take_int("gibbs_iters", cls.gibbs_iters),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(
            out,
            self.style in ("integrator", "at_mode"),
            f"{prefix}.style: must be 'integrator' or 'at_mode' (got {self.style!r})",
        )
        _require(out, self.mode_index >= 0, f"{prefix}.mode_index: must be >= 0 (got {self.mode_index})")
        _require(
            out,
            self.integrator_nfe >= 1,
            f"{prefix}.integrator_nfe: must be >= 1 (got {self.integrator_nfe})",
        )
        _require(out, self.noise_var >= 0, f"{prefix}.noise_var: must be >= 0 (got {self.noise_var})")
        _require(out, self.gibbs_iters >= 0, f"{prefix}.gibbs_iters: must be >= 0 (got {self.gibbs_iters})")
        return out

    def build(self) -> GibbsInit:
        return GibbsInit(
            style=self.style,
            mode_index=self.mode_index,
            integrator_nfe=self.integrator_nfe,
            noise_var=self.noise_var,
            gibbs_iters=self.gibbs_iters,
        )

    def to_dict(self):
        return {
            "style": self.style,
            "mode_index": self.mode_index,
            "integrator_nfe": self.integrator_nfe,
            "noise_var": self.noise_var,
            "gibbs_iters": self.gibbs_iters,
        }


@dataclass(frozen=True)
class SamplerBlock:
    """Main sampler settings (step scale, block structure, budgets)."""

    algo: str = "dlg"
    eta: float | None = 2.0
    kappa: float | None = None
    n_skip: int = 1
    n_den: int = 9
    sigma_update: str = "argmax"
    n_chains: int = 1
    samples_per_chain: int = 100
    classifier: str = "exact"
    init: InitBlock = field(default_factory=InitBlock)

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        eta = r.take_float("eta", None)
        kappa = r.take_float("kappa", None)
        if eta is None and kappa is None:
            eta = cls.eta
        out = cls(
            algo=r.take_str("algo", cls.algo),
            eta=eta,
            kappa=kappa,
            n_skip=r.take_int("n_skip", cls.n_skip),
            n_den=r.take_int("n_den", cls.n_den),
            sigma_update=r.take_str("sigma_update", cls.sigma_update),
            n_chains=r.take_int("n_chains", cls.n_chains),
            samples_per_chain=r.take_int("samples_per_chain", cls.samples_per_chain),
            classifier=r.take_str("classifier", cls.classifier),
            init=InitBlock.from_dict(r.take("init", None), f"{prefix}.init", problems),
        )
        r.finish()
        return out

    def resolved_eta(self, dim):
        return self.build().resolve_eta(dim)

    def problems(self, prefix):
        out = []
        _require(out, self.algo == "dlg", f"{prefix}.algo: must be 'dlg' (got {self.algo!r})")
        given = (self.eta is not None) + (self.kappa is not None)
        if given == 0:
            out.append(f"{prefix}: one of eta or kappa is required")
        elif given == 2:
            out.append(f"{prefix}: give either eta or kappa, not both")
        if self.eta is not None:
            _require(out, self.eta >= 0, f"{prefix}.eta: must be >= 0 (got {self.eta})")
        if self.kappa is not None:
            _require(out, self.kappa >= 0, f"{prefix}.kappa: must be >= 0 (got {self.kappa})")
        _require(out, self.n_skip >= 1, f"{prefix}.n_skip: must be >= 1 (got {self.n_skip})")
        _require(out, self.n_den >= 1, f"{prefix}.n_den: must be >= 1 (got {self.n_den})")
        _require(
            out,
            self.sigma_update in ("argmax", "sampled"),
            f"{prefix}.sigma_update: must be 'argmax' or 'sampled' (got {self.sigma_update!r})",
        )
        _require(out, self.n_chains >= 1, f"{prefix}.n_chains: must be >= 1 (got {self.n_chains})")
        _require(
            out,
            self.samples_per_chain >= 1,
            f"{prefix}.samples_per_chain: must be >= 1 (got {self.samples_per_chain})",
        )
        _require(
            out,
            bool(self.classifier),
            f"{prefix}.classifier: must be 'exact' or a classifier JSON path (got {self.classifier!r})",
        )
        out.extend(self.init.problems(f"{prefix}.init"))
        return out

    def build(self) -> DLGConfig:
        return DLGConfig(
            eta=self.eta,
            kappa=self.kappa,
            n_skip=self.n_skip,
            n_den=self.n_den,
            sigma_update=self.sigma_update,
            n_chains=self.n_chains,
            samples_per_chain=self.samples_per_chain,
            init=self.init.build(),
        )

    def to_dict(self):
        return {
            "algo": self.algo,
            "eta": self.eta,
            "kappa": self.kappa,
            "n_skip": self.n_skip,
            "n_den": self.n_den,
            "sigma_update": self.sigma_update,
            "n_chains": self.n_chains,
            "samples_per_chain": self.samples_per_chain,
            "classifier": self.classifier,
            "init": self.init.to_dict(),
        }


@dataclass(frozen=True)
class BaselineBlock:
    """Fixed-level or annealed Langevin baseline run alongside the sampler."""

    algo: str = "langevin"
    eta: float = 1e-4
    n_steps: int = 5000
    iters_per_level: int = 100
    sigma: float | None = None
    init_mode: int = 0

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            algo=r.take_str("algo", cls.algo),
            eta=r.take_float("eta", cls.eta),
            n_steps=r.take_int("n_steps", cls.n_steps),
            iters_per_level=r.take_int("iters_per_level", cls.iters_per_level),
            sigma=r.take_float("sigma", None),
            init_mode=r.take_int("init_mode", cls.init_mode),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(
            out,
            self.algo in ("langevin", "ald", "none"),
            f"{prefix}.algo: must be 'langevin', 'ald', or 'none' (got {self.algo!r})",
        )
        _require(out, self.eta > 0, f"{prefix}.eta: must be > 0 (got {self.eta})")
        _require(out, self.n_steps >= 1, f"{prefix}.n_steps: must be >= 1 (got {self.n_steps})")
        _require(
            out,
            self.iters_per_level >= 1,
            f"{prefix}.iters_per_level: must be >= 1 (got {self.iters_per_level})",
        )
        if self.sigma is not None:
            _require(out, self.sigma > 0, f"{prefix}.sigma: must be > 0 (got {self.sigma})")
        _require(out, self.init_mode >= 0, f"{prefix}.init_mode: must be >= 0 (got {self.init_mode})")
        return out

    def to_dict(self):
        return {
            "algo": self.algo,
            "eta": self.eta,
            "n_steps": self.n_steps,
            "iters_per_level": self.iters_per_level,
            "sigma": self.sigma,
            "init_mode": self.init_mode,
        }


@dataclass(frozen=True)
class IntegratorBlock:
    """Reverse-time integrator choice and its tuning knobs."""

    name: str = "karras_det"
    rtol: float = 1e-5
    atol: float = 1e-5
    rho: float = 7.0
    churn: float = 0.0
    s_noise: float = 1.0

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            name=r.take_str("name", cls.name),
            rtol=r.take_float("rtol", cls.rtol),
            atol=r.take_float("atol", cls.atol),
            rho=r.take_float("rho", cls.rho),
            churn=r.take_float("churn", cls.churn),
            s_noise=r.take_float("s_noise", cls.s_noise),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(
            out,
            self.name in INTEGRATOR_NAMES,
            f"{prefix}.name: must be one of {sorted(INTEGRATOR_NAMES)} (got {self.name!r})",
        )
        _require(out, self.rtol > 0, f"{prefix}.rtol: must be > 0 (got {self.rtol})")
        _require(out, self.atol > 0, f"{prefix}.atol: must be > 0 (got {self.atol})")
        _require(out, self.rho > 0, f"{prefix}.rho: must be > 0 (got {self.rho})")
        _require(out, self.churn >= 0, f"{prefix}.churn: must be >= 0 (got {self.churn})")
        _require(out, self.s_noise > 0, f"{prefix}.s_noise: must be > 0 (got {self.s_noise})")
        return out

    def build(self) -> IntegratorSpec:
        return IntegratorSpec(
            name=self.name,
            rtol=self.rtol,
            atol=self.atol,
            rho=self.rho,
            churn=self.churn,
            s_noise=self.s_noise,
        )

    def to_dict(self):
        return {
            "name": self.name,
            "rtol": self.rtol,
            "atol": self.atol,
            "rho": self.rho,
            "churn": self.churn,
            "s_noise": self.s_noise,
        }


@dataclass(frozen=True)
class DiagnosticsBlock:
    """Post-run diagnostics settings."""

    coverage_threshold_multiple: float = 3.0
    autocorr_max_lag: int = 100
    fgd_truth_samples: int | None = None
    fgd_diag: bool | None = None

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            coverage_threshold_multiple=r.take_float(
                "coverage_threshold_multiple", cls.coverage_threshold_multiple
            ),
            autocorr_max_lag=r.take_int("autocorr_max_lag", cls.autocorr_max_lag),
            fgd_truth_samples=r.take_int("fgd_truth_samples", None),
            fgd_diag=r.take_bool("fgd_diag", None),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(
            out,
            self.coverage_threshold_multiple > 0,
            f"{prefix}.coverage_threshold_multiple: must be > 0 "
            f"(got {self.coverage_threshold_multiple})",
        )
        _require(
            out,
            self.autocorr_max_lag >= 1,
            f"{prefix}.autocorr_max_lag: must be >= 1 (got {self.autocorr_max_lag})",
        )
        if self.fgd_truth_samples is not None:
            _require(
                out,
                self.fgd_truth_samples >= 2,
                f"{prefix}.fgd_truth_samples: must be >= 2 (got {self.fgd_truth_samples})",
            )
        return out

    def to_dict(self):
        return {
            "coverage_threshold_multiple": self.coverage_threshold_multiple,
            "autocorr_max_lag": self.autocorr_max_lag,
            "fgd_truth_samples": self.fgd_truth_samples,
            "fgd_diag": self.fgd_diag,
        }


_DEFAULT_BENCH_INTEGRATORS = (
    IntegratorBlock(name="euler_maruyama"),
    IntegratorBlock(name="reverse_diffusion"),
    IntegratorBlock(name="prob_flow_euler"),
    IntegratorBlock(name="karras_det"),
)


@dataclass(frozen=True)
class BenchmarkBlock:
    """Integrator sweep: Gaussian-oracle error table and mixture FGD table."""

    integrators: tuple[IntegratorBlock, ...] = _DEFAULT_BENCH_INTEGRATORS
    sigma_starts: tuple[float, ...] = (0.5, 50.0)
    budgets: tuple[int, ...] = (8, 16, 32, 64)
    data_scale: float = 2.0
    sigma_end: float | None = None
    run_mixture: bool = True
    mixture_budgets: tuple[int, ...] = (8, 16, 32, 64)
    mixture_samples: int = 1000

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        raw_specs = r.take("integrators", None)
        if raw_specs is None:
            integrators = _DEFAULT_BENCH_INTEGRATORS
        elif not isinstance(raw_specs, list):
            problems.append(f"{prefix}.integrators: expected a list, got {raw_specs!r}")
            integrators = _DEFAULT_BENCH_INTEGRATORS
        else:
            integrators = tuple(
                IntegratorBlock.from_dict(item, f"{prefix}.integrators[{i}]", problems)
                for i, item in enumerate(raw_specs)
            )
        out = cls(
            integrators=integrators,
            sigma_starts=r.take_numbers("sigma_starts", cls.sigma_starts),
            budgets=r.take_ints("budgets", cls.budgets),
            data_scale=r.take_float("data_scale", cls.data_scale),
            sigma_end=r.take_float("sigma_end", None),
            run_mixture=r.take_bool("run_mixture", cls.run_mixture),
            mixture_budgets=r.take_ints("mixture_budgets", cls.mixture_budgets),
            mixture_samples=r.take_int("mixture_samples", cls.mixture_samples),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(out, len(self.integrators) > 0, f"{prefix}.integrators: must not be empty")
        for i, block in enumerate(self.integrators):
            out.extend(block.problems(f"{prefix}.integrators[{i}]"))
        _require(out, len(self.sigma_starts) > 0, f"{prefix}.sigma_starts: must not be empty")
        for s in self.sigma_starts:
            _require(out, s > 0, f"{prefix}.sigma_starts: levels must be > 0 (got {s})")
        _require(out, len(self.budgets) > 0, f"{prefix}.budgets: must not be empty")
        for b in self.budgets:
            _require(out, b >= 1, f"{prefix}.budgets: budgets must be >= 1 (got {b})")
        _require(out, self.data_scale > 0, f"{prefix}.data_scale: must be > 0 (got {self.data_scale})")
        if self.sigma_end is not None:
            _require(out, self.sigma_end > 0, f"{prefix}.sigma_end: must be > 0 (got {self.sigma_end})")
        if self.run_mixture:
            _require(
                out,
                len(self.mixture_budgets) > 0,
                f"{prefix}.mixture_budgets: must not be empty",
            )
            for b in self.mixture_budgets:
                _require(out, b >= 1, f"{prefix}.mixture_budgets: budgets must be >= 1 (got {b})")
            _require(
                out,
                self.mixture_samples >= 2,
                f"{prefix}.mixture_samples: must be >= 2 (got {self.mixture_samples})",
            )
        return out

    def to_dict(self):
        return {
            "integrators": [b.to_dict() for b in self.integrators],
            "sigma_starts": list(self.sigma_starts),
            "budgets": list(self.budgets),
            "data_scale": self.data_scale,
            "sigma_end": self.sigma_end,
            "run_mixture": self.run_mixture,
            "mixture_budgets": list(self.mixture_budgets),
            "mixture_samples": self.mixture_samples,
        }


@dataclass(frozen=True)
class AblationBlock:
    """Step-scale × denoise-fraction × budget sweep grid."""

    etas: tuple[float, ...] = (2.0,)
    nden_fracs: tuple[float, ...] = (0.25, 0.5, 0.75, 0.9)
    budgets: tuple[int, ...] = (20,)
    n_chains: int = 20
    samples_per_chain: int = 200

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            etas=r.take_numbers("etas", cls.etas),
            nden_fracs=r.take_numbers("nden_fracs", cls.nden_fracs),
            budgets=r.take_ints("budgets", cls.budgets),
            n_chains=r.take_int("n_chains", cls.n_chains),
            samples_per_chain=r.take_int("samples_per_chain", cls.samples_per_chain),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(out, len(self.etas) > 0, f"{prefix}.etas: must not be empty")
        for e in self.etas:
            _require(out, e > 0, f"{prefix}.etas: values must be > 0 (got {e})")
        _require(out, len(self.nden_fracs) > 0, f"{prefix}.nden_fracs: must not be empty")
        for f in self.nden_fracs:
            _require(out, 0 < f < 1, f"{prefix}.nden_fracs: values must lie in (0, 1) (got {f})")
        _require(out, len(self.budgets) > 0, f"{prefix}.budgets: must not be empty")
        for b in self.budgets:
            _require(out, b >= 2, f"{prefix}.budgets: budgets must be >= 2 (got {b})")
        _require(out, self.n_chains >= 1, f"{prefix}.n_chains: must be >= 1 (got {self.n_chains})")
        _require(
            out,
            self.samples_per_chain >= 1,
            f"{prefix}.samples_per_chain: must be >= 1 (got {self.samples_per_chain})",
        )
        return out

    def to_dict(self):
        return {
            "etas": list(self.etas),
            "nden_fracs": list(self.nden_fracs),
            "budgets": list(self.budgets),
            "n_chains": self.n_chains,
            "samples_per_chain": self.samples_per_chain,
        }


@dataclass(frozen=True)
class TrainBlock:
    """Noise-level classifier training settings."""

    n_per_level: int = 400
    epochs: int = 150
    lr: float = 2.0
    batch_size: int | None = 256
    codebook_size: int = 512
    weighting: str = "prior"
    val_fraction: float = 0.2
    within_k: int = 2
    warm_start: bool = True

    @classmethod
    def from_dict(cls, raw, prefix, problems):
        r = _Reader(raw, prefix, problems)
        out = cls(
            n_per_level=r.take_int("n_per_level", cls.n_per_level),
            epochs=r.take_int("epochs", cls.epochs),
            lr=r.take_float("lr", cls.lr),
            batch_size=r.take_int("batch_size", cls.batch_size),
            codebook_size=r.take_int("codebook_size", cls.codebook_size),
            weighting=r.take_str("weighting", cls.weighting),
            val_fraction=r.take_float("val_fraction", cls.val_fraction),
            within_k=r.take_int("within_k", cls.within_k),
            warm_start=r.take_bool("warm_start", cls.warm_start),
        )
        r.finish()
        return out

    def problems(self, prefix):
        out = []
        _require(out, self.n_per_level >= 1, f"{prefix}.n_per_level: must be >= 1 (got {self.n_per_level})")
        _require(out, self.epochs >= 0, f"{prefix}.epochs: must be >= 0 (got {self.epochs})")
        _require(out, self.lr > 0, f"{prefix}.lr: must be > 0 (got {self.lr})")
        if self.batch_size is not None:
            _require(out, self.batch_size >= 1, f"{prefix}.batch_size: must be >= 1 (got {self.batch_size})")
        _require(
            out,
            self.codebook_size >= 2,
            f"{prefix}.codebook_size: must be >= 2 (got {self.codebook_size})",
        )
        _require(
            out,
            self.weighting in ("prior", "uniform"),
            f"{prefix}.weighting: must be 'prior' or 'uniform' (got {self.weighting!r})",
        )
        _require(
            out,
            0 <= self.val_fraction < 1,
            f"{prefix}.val_fraction: must lie in [0, 1) (got {self.val_fraction})",
        )
        _require(out, self.within_k >= 0, f"{prefix}.within_k: must be >= 0 (got {self.within_k})")
        return out

    def to_dict(self):
        return {
            "n_per_level": self.n_per_level,
            "epochs": self.epochs,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "codebook_size": self.codebook_size,
            "weighting": self.weighting,
            "val_fraction": self.val_fraction,
            "within_k": self.within_k,
            "warm_start": self.warm_start,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete run description; every command consumes one of these."""

    mixture: MixtureBlock = field(default_factory=MixtureBlock)
    schedule: ScheduleBlock = field(default_factory=ScheduleBlock)
    sampler: SamplerBlock = field(default_factory=SamplerBlock)
    baseline: BaselineBlock = field(default_factory=BaselineBlock)
    integrator: IntegratorBlock = field(default_factory=IntegratorBlock)
    diagnostics: DiagnosticsBlock = field(default_factory=DiagnosticsBlock)
    benchmark: BenchmarkBlock = field(default_factory=BenchmarkBlock)
    ablation: AblationBlock = field(default_factory=AblationBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    out_dir: str | None = None
    master_seed: int | None = None

    @classmethod
    def from_dict(cls, raw):
        """Parse a raw JSON object; raises ``ConfigError`` listing every problem."""
        problems: list[str] = []
        r = _Reader(raw, "", problems)
        cfg = cls(
            mixture=MixtureBlock.from_dict(r.take("mixture", None), "mixture", problems),
            schedule=ScheduleBlock.from_dict(r.take("schedule", None), "schedule", problems),
            sampler=SamplerBlock.from_dict(r.take("sampler", None), "sampler", problems),
            baseline=BaselineBlock.from_dict(r.take("baseline", None), "baseline", problems),
            integrator=IntegratorBlock.from_dict(r.take("integrator", None), "integrator", problems),
            diagnostics=DiagnosticsBlock.from_dict(
                r.take("diagnostics", None), "diagnostics", problems
            ),
            benchmark=BenchmarkBlock.from_dict(r.take("benchmark", None), "benchmark", problems),
            ablation=AblationBlock.from_dict(r.take("ablation", None), "ablation", problems),
            train=TrainBlock.from_dict(r.take("train", None), "train", problems),
            out_dir=r.take_str("out_dir", None),
            master_seed=r.take_int("master_seed", None),
        )
        r.finish()
        if problems:
            raise ConfigError(problems)
        return cfg

    def with_overrides(self, out_dir=None, master_seed=None):
        """Apply command-line overrides, returning a new config."""
        changes = {}
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        if master_seed is not None:
            changes["master_seed"] = int(master_seed)
        return replace(self, **changes) if changes else self

    def validate(self, require_output=True):
        """Check every block; raises ``ConfigError`` listing all violations."""
        problems: list[str] = []
        problems.extend(self.mixture.problems("mixture"))
        problems.extend(self.schedule.problems("schedule"))
        problems.extend(self.sampler.problems("sampler"))
        problems.extend(self.baseline.problems("baseline"))
        problems.extend(self.integrator.problems("integrator"))
        problems.extend(self.diagnostics.problems("diagnostics"))
        problems.extend(self.benchmark.problems("benchmark"))
        problems.extend(self.ablation.problems("ablation"))
        problems.extend(self.train.problems("train"))
        if require_output:
            if self.out_dir is None:
                problems.append("out_dir: required (set in the config or pass --out)")
            if self.master_seed is None:
                problems.append("master_seed: required (set in the config or pass --seed)")
        if self.master_seed is not None and self.master_seed < 0:
            problems.append(f"master_seed: must be >= 0 (got {self.master_seed})")
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self):
        """Fully resolved snapshot; round-trips through ``from_dict`` exactly."""
        return {
            "mixture": self.mixture.to_dict(),
            "schedule": self.schedule.to_dict(),
            "sampler": self.sampler.to_dict(),
            "baseline": self.baseline.to_dict(),
            "integrator": self.integrator.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
            "benchmark": self.benchmark.to_dict(),
            "ablation": self.ablation.to_dict(),
            "train": self.train.to_dict(),
            "out_dir": self.out_dir,
            "master_seed": self.master_seed,
        }


def load_config(path) -> ExperimentConfig:
    """Read a JSON config file; parse or syntax problems raise ``ConfigError``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"config file {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file {path}: invalid JSON ({exc})"]) from exc
    return ExperimentConfig.from_dict(raw)
