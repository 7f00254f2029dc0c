"""Measured score-evaluation cost per emitted sample for a few block settings.

Quick sanity table for the cost model: one Langevin evaluation per
inner step, the denoise budget per emitted sample, plus the final
posterior-mean hop, with initialization amortized across the chain.
"""

import numpy as np

from dlglab.diffusion import NoiseGrid, VESchedule
from dlglab.integrators import IntegratorSpec
from dlglab.mixture import make_benchmark_mixture, sigma_posterior
from dlglab.samplers import DLGConfig, GibbsInit, dlg_run

PAIRS = [(1, 9), (3, 17), (24, 27)]


def main():
    mix = make_benchmark_mixture()
    grid = NoiseGrid()
    sched = VESchedule(grid)
    spec = IntegratorSpec(name="karras_det")
    classifier = lambda x: sigma_posterior(mix, x, grid)

    print(f"{'n_skip':>6} {'n_den':>6} {'budget':>7} {'avg NFE':>8} {'amortized':>10}")
    for n_skip, n_den in PAIRS:
        cfg = DLGConfig(
            eta=0.5,
            n_skip=n_skip,
            n_den=n_den,
            n_chains=1,
            samples_per_chain=1000,
            init=GibbsInit(style="integrator"),
        )
        _, rec = dlg_run(mix, classifier, grid, sched, spec, cfg, seed=5)
        budget = n_skip + n_den
        print(
            f"{n_skip:>6} {n_den:>6} {budget:>7} {rec.average_nfe:>8.2f} "
            f"{rec.average_nfe_excluding_init:>10.2f}"
        )


if __name__ == "__main__":
    main()
