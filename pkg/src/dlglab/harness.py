"""Experiment orchestration: run commands, write CSVs, manifests, rasters.

Every command validates its configuration before touching the output
directory, derives all randomness from the master seed through the
stream map in :mod:`dlglab.rngs`, and finishes by writing a manifest
that embeds the fully resolved config snapshot.  Re-running a command
from that snapshot (same code, same seed) reproduces every CSV byte for
byte; wall-clock timings live only in the manifest, never in CSVs.

File layout is flat: each command writes its tables, optional rasters,
and ``manifest.json`` directly into the output directory.  Nothing is
ever written outside it.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import rngs
from .bench import gaussian_terminal_error, mixture_benchmark
from .classifier import (
    FEATURE_VERSION,
    ExactSigmaClassifier,
    build_feature_map,
    init_from_moments,
    load_classifier,
    make_training_set,
    new_classifier,
    save_classifier,
    train,
)
from .config import ExperimentConfig
from .diagnostics import (
    NfeLedger,
    chi_square_class_fit,
    class_autocorrelation,
    frechet_gaussian_distance,
    mode_coverage,
)
from .errors import ConfigError
from .mixture import sample_smoothed
from .samplers import DLGConfig, dlg_run, ald_run, plain_langevin_run
from . import __version__

__all__ = [
    "SCHEMA_VERSIONS",
    "SCHEMA_COLUMNS",
    "cmd_mixing",
    "cmd_benchmark_integrators",
    "cmd_ablation",
    "cmd_train_classifier",
]

MANIFEST_VERSION = 1

# Versioned CSV schemas.  Bumping a version signals a column change to
# downstream consumers; manifests record the version next to each file.
SCHEMA_VERSIONS = {
    "coverage": 1,
    "classes": 1,
    "autocorr": 1,
    "bench": 1,
    "ablation": 1,
    "losses": 1,
}
SCHEMA_COLUMNS = {
    "coverage": ("step", "modes_covered"),
    "classes": ("mode_index", "count"),
    "autocorr": ("lag", "value"),
    "bench": ("integrator", "sigma_start", "nfe"),  # + "error" or "fgd"
    "ablation": ("eta", "nden_frac", "nfe", "fgd"),
    "losses": ("epoch", "cross_entropy"),
}


class RunDir:
    """Output-directory guard: every artifact lands inside one directory."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.outputs: list[dict] = []

    def path(self, name):
        if os.sep in name or (os.altsep and os.altsep in name) or name.startswith("."):
            raise ValueError(f"output names must be plain file names, got {name!r}")
        return self.root / name

    def _write_atomic(self, name, data: bytes):
        target = self.path(name)
        tmp = target.with_name(target.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)

    def write_csv(self, name, schema, header, rows):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
        self._write_atomic(name, buf.getvalue().encode("utf-8"))
        self.outputs.append(
            {"file": name, "schema": schema, "schema_version": SCHEMA_VERSIONS[schema]}
        )

    def write_json(self, name, obj, kind):
        data = (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")
        self._write_atomic(name, data)
        if kind is not None:
            self.outputs.append({"file": name, "kind": kind})

    def add_output(self, name, kind):
        self.outputs.append({"file": name, "kind": kind})

    def write_manifest(self, manifest):
        manifest = dict(manifest)
        manifest["outputs"] = sorted(self.outputs, key=lambda o: o["file"])
        self.write_json("manifest.json", manifest, kind=None)
        return manifest


def _format_cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _base_manifest(command, cfg: ExperimentConfig, threads):
    return {
        "manifest_version": MANIFEST_VERSION,
        "artifact_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "seed_derivation": rngs.SCHEME,
        "schema_versions": dict(SCHEMA_VERSIONS),
        "threads": int(threads),
    }


def _resolve_classifier(cfg: ExperimentConfig, mix, grid):
    name = cfg.sampler.classifier
    if name == "exact":
        return ExactSigmaClassifier(mix, grid)
    clf = load_classifier(name)
    cg = clf.grid
    if (
        cg.n_levels != grid.n_levels
        or abs(cg.sigma_min - grid.sigma_min) > 1e-12
        or abs(cg.sigma_max - grid.sigma_max) > 1e-12
    ):
        raise ConfigError(
            [
                "sampler.classifier: classifier grid "
                f"({cg.sigma_min}, {cg.sigma_max}, {cg.n_levels}) does not match the "
                f"schedule grid ({grid.sigma_min}, {grid.sigma_max}, {grid.n_levels})"
            ]
        )
    return clf


def _sample_diagnostics(samples, mix, grid, diag_cfg, truth_rng):
    """Coverage, occupancy fit, class autocorrelation, and distribution score."""
    ma = mode_coverage(
        samples,
        mix,
        threshold_multiple=diag_cfg.coverage_threshold_multiple,
        sigma_min=grid.sigma_min,
    )
    counts = np.bincount(
        np.asarray(ma.nearest_index)[np.asarray(ma.assigned)].ravel(), minlength=mix.n_modes
    )
    chi2, dof = chi_square_class_fit(counts, mix.weights)

    length = np.asarray(samples).shape[-2]
    max_lag = min(diag_cfg.autocorr_max_lag, length - 1) if length > 1 else 0
    autocorr = class_autocorrelation(ma.nearest_index, max_lag)

    flat = np.asarray(samples, dtype=float).reshape(-1, mix.dim)
    truth_n = diag_cfg.fgd_truth_samples or flat.shape[0]
    truth_a = sample_smoothed(mix, 0.0, truth_rng, n=truth_n)
    truth_b = sample_smoothed(mix, 0.0, truth_rng, n=truth_n)
    fgd = frechet_gaussian_distance(flat, truth_a, diag=diag_cfg.fgd_diag)
    fgd_truth_pair = frechet_gaussian_distance(truth_b, truth_a, diag=diag_cfg.fgd_diag)

    summary = {
        "coverage_final": ma.covered,
        "n_modes": mix.n_modes,
        "unassigned": ma.unassigned,
        "chi_square": float(chi2),
        "chi_square_dof": int(dof),
        "fgd": float(fgd),
        "fgd_truth_pair": float(fgd_truth_pair),
        "fgd_truth_samples": int(truth_n),
    }
    return ma, counts, autocorr, summary


def _write_sample_tables(run, tag, ma, counts, autocorr):
    run.write_csv(
        f"coverage_{tag}.csv",
        "coverage",
        SCHEMA_COLUMNS["coverage"],
        [(j + 1, int(v)) for j, v in enumerate(ma.coverage_curve)],
    )
    run.write_csv(
        f"classes_{tag}.csv",
        "classes",
        SCHEMA_COLUMNS["classes"],
        [(i, int(c)) for i, c in enumerate(counts)],
    )
    run.write_csv(
        f"autocorr_{tag}.csv",
        "autocorr",
        SCHEMA_COLUMNS["autocorr"],
        [(lag, float(v)) for lag, v in enumerate(autocorr)],
    )


def _render_scatter(run, name, mix, samples, title):
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    arr = np.asarray(samples, dtype=float)
    flat = arr.reshape(-1, 2)
    fig, ax = plt.subplots(figsize=(5, 5), dpi=150)
    ax.scatter(flat[:, 0], flat[:, 1], s=4, alpha=0.35, linewidths=0, label="samples")
    if arr.ndim == 3:
        ax.plot(arr[0, :, 0], arr[0, :, 1], lw=0.4, alpha=0.5, color="tab:orange",
                label="chain 0 path")
    ax.scatter(mix.means[:, 0], mix.means[:, 1], marker="x", s=40, color="k", label="modes")
    ax.set_title(title)
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right", fontsize=7)
    target = run.path(name)
    tmp = target.with_name(target.name + ".tmp")
    fig.savefig(tmp, format="png")
    plt.close(fig)
    os.replace(tmp, target)
    run.add_output(name, "raster-png")


def _run_baseline(cfg: ExperimentConfig, mix, grid):
    """Run the configured fixed-level or annealed baseline chains."""
    block = cfg.baseline
    chains = []
    nfe = 0
    x0 = mix.means[block.init_mode]
    for c in range(cfg.sampler.n_chains):
        rng = rngs.stream(cfg.master_seed, rngs.KIND_BASELINE, c)
        if block.algo == "langevin":
            sigma = block.sigma if block.sigma is not None else grid.sigma_min
            out, rec = plain_langevin_run(mix, sigma, block.eta, block.n_steps, rng, x0)
        else:
            out, rec = ald_run(mix, grid.levels, block.eta, block.iters_per_level, rng, x0=x0)
        chains.append(out)
        nfe += rec.nfe
    return np.stack(chains), nfe


def cmd_mixing(cfg: ExperimentConfig, threads=1):
    """Mixing study: the product-space sampler vs. the configured baseline."""
    cfg.validate()
    t_start = time.perf_counter()
    mix = cfg.mixture.build()
    grid = cfg.schedule.grid()
    sched = cfg.schedule.schedule()
    spec = cfg.integrator.build()
    classifier = _resolve_classifier(cfg, mix, grid)
    if cfg.baseline.algo != "none" and not 0 <= cfg.baseline.init_mode < mix.n_modes:
        raise ConfigError(
            [f"baseline.init_mode: {cfg.baseline.init_mode} outside [0, {mix.n_modes})"]
        )

    run = RunDir(cfg.out_dir)
    timings = {}

    t0 = time.perf_counter()
    samples, record = dlg_run(
        mix, classifier, grid, sched, spec, cfg.sampler.build(), cfg.master_seed,
        threads=threads,
    )
    timings["sampler_seconds"] = time.perf_counter() - t0

    truth_rng = rngs.stream(cfg.master_seed, rngs.KIND_TRUTH)
    ma, counts, autocorr, summary = _sample_diagnostics(
        samples, mix, grid, cfg.diagnostics, truth_rng
    )
    _write_sample_tables(run, "dlg", ma, counts, autocorr)
    if mix.dim == 2:
        _render_scatter(run, "scatter_dlg.png", mix, samples, "product-space sampler")

    diagnostics = {"dlg": summary}
    nfe = {"dlg": NfeLedger.from_sampler_record(record).as_dict()}

    if cfg.baseline.algo != "none":
        t0 = time.perf_counter()
        base_samples, base_nfe = _run_baseline(cfg, mix, grid)
        timings["baseline_seconds"] = time.perf_counter() - t0
        truth_rng = rngs.stream(cfg.master_seed, rngs.KIND_TRUTH)
        bma, bcounts, bautocorr, bsummary = _sample_diagnostics(
            base_samples, mix, grid, cfg.diagnostics, truth_rng
        )
        _write_sample_tables(run, "baseline", bma, bcounts, bautocorr)
        if mix.dim == 2:
            _render_scatter(
                run, "scatter_baseline.png", mix, base_samples,
                f"{cfg.baseline.algo} baseline",
            )
        diagnostics["baseline"] = bsummary
        nfe["baseline"] = {
            "total_nfe": int(base_nfe),
            "samples_emitted": int(base_samples.shape[0] * base_samples.shape[1]),
        }

    manifest = _base_manifest("mixing", cfg, threads)
    manifest["nfe"] = nfe
    manifest["diagnostics"] = diagnostics
    timings["total_seconds"] = time.perf_counter() - t_start
    manifest["wall_clock_seconds"] = timings
    return run.write_manifest(manifest)


def _richardson_orders(results):
    """Mean observed convergence order per (integrator, start level)."""
    by_cell = {}
    for r in results:
        by_cell.setdefault((r.integrator, r.sigma_start), []).append(r)
    orders = {}
    for (name, start), cells in by_cell.items():
        cells.sort(key=lambda r: r.nfe)
        rates = []
        for lo, hi in zip(cells, cells[1:]):
            if lo.error > 0 and hi.error > 0 and hi.nfe > lo.nfe:
                rates.append(np.log(lo.error / hi.error) / np.log(hi.nfe / lo.nfe))
        if rates:
            orders[f"{name}@sigma_start={start:g}"] = float(np.mean(rates))
    return orders


def cmd_benchmark_integrators(cfg: ExperimentConfig, threads=1):
    """Integrator sweep on the Gaussian oracle and the benchmark target."""
    cfg.validate()
    t_start = time.perf_counter()
    sched = cfg.schedule.schedule()
    specs = [b.build() for b in cfg.benchmark.integrators]

    run = RunDir(cfg.out_dir)
    timings = {}

    t0 = time.perf_counter()
    cells = [
        (spec, sigma_start, budget)
        for spec in specs
        for sigma_start in cfg.benchmark.sigma_starts
        for budget in cfg.benchmark.budgets
    ]

    def gauss_cell(args):
        spec, sigma_start, budget = args
        sigma_end = (
            cfg.benchmark.sigma_end
            if cfg.benchmark.sigma_end is not None
            else sched.grid.sigma_min
        )
        return gaussian_terminal_error(
            spec, sched, sigma_start, sigma_end, budget, s=cfg.benchmark.data_scale
        )

    if int(threads) > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            gaussian = list(pool.map(gauss_cell, cells))
    else:
        gaussian = [gauss_cell(c) for c in cells]
    timings["gaussian_seconds"] = time.perf_counter() - t0

    run.write_csv(
        "bench_gaussian.csv",
        "bench",
        SCHEMA_COLUMNS["bench"] + ("error",),
        [(r.integrator, r.sigma_start, r.nfe, r.error) for r in gaussian],
    )

    diagnostics = {"orders": _richardson_orders(gaussian)}

    if cfg.benchmark.run_mixture:
        mix = cfg.mixture.build()
        t0 = time.perf_counter()
        mixture_rows = mixture_benchmark(
            specs,
            mix,
            sched,
            cfg.benchmark.mixture_budgets,
            cfg.benchmark.mixture_samples,
            cfg.master_seed,
        )
        timings["mixture_seconds"] = time.perf_counter() - t0
        run.write_csv(
            "bench_mixture.csv",
            "bench",
            SCHEMA_COLUMNS["bench"] + ("fgd",),
            [(r.integrator, r.sigma_start, r.nfe, r.error) for r in mixture_rows],
        )

    manifest = _base_manifest("benchmark-integrators", cfg, threads)
    manifest["nfe"] = None
    manifest["diagnostics"] = diagnostics
    timings["total_seconds"] = time.perf_counter() - t_start
    manifest["wall_clock_seconds"] = timings
    return run.write_manifest(manifest)


def _ablation_cells(block):
    """Grid order: budgets (panels) outermost, then etas, then fractions."""
    cells = []
    for nfe in block.budgets:
        for eta in block.etas:
            for frac in block.nden_fracs:
                n_den = max(1, min(nfe - 1, round(frac * nfe)))
                n_skip = nfe - n_den
                cells.append((nfe, eta, frac, n_skip, n_den))
    return cells


def cmd_ablation(cfg: ExperimentConfig, threads=1):
    """Sweep step scale × denoise fraction × per-sample budget."""
    cfg.validate()
    t_start = time.perf_counter()
    mix = cfg.mixture.build()
    grid = cfg.schedule.grid()
    sched = cfg.schedule.schedule()
    spec = cfg.integrator.build()
    classifier = _resolve_classifier(cfg, mix, grid)

    run = RunDir(cfg.out_dir)
    cells = _ablation_cells(cfg.ablation)

    def one_cell(cell):
        nfe, eta, frac, n_skip, n_den = cell
        dlg_cfg = DLGConfig(
            eta=eta,
            n_skip=n_skip,
            n_den=n_den,
            sigma_update=cfg.sampler.sigma_update,
            n_chains=cfg.ablation.n_chains,
            samples_per_chain=cfg.ablation.samples_per_chain,
            init=cfg.sampler.init.build(),
        )
        samples, record = dlg_run(
            mix, classifier, grid, sched, spec, dlg_cfg, cfg.master_seed
        )
        flat = samples.reshape(-1, mix.dim)
        truth_n = cfg.diagnostics.fgd_truth_samples or flat.shape[0]
        truth = sample_smoothed(
            mix, 0.0, rngs.stream(cfg.master_seed, rngs.KIND_TRUTH), n=truth_n
        )
        fgd = frechet_gaussian_distance(flat, truth, diag=cfg.diagnostics.fgd_diag)
        return float(fgd), NfeLedger.from_sampler_record(record)

    t0 = time.perf_counter()
    if int(threads) > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            outcomes = list(pool.map(one_cell, cells))
    else:
        outcomes = [one_cell(c) for c in cells]
    sweep_seconds = time.perf_counter() - t0

    rows = [
        (eta, frac, nfe, fgd)
        for (nfe, eta, frac, _, _), (fgd, _) in zip(cells, outcomes)
    ]
    run.write_csv("ablation.csv", "ablation", SCHEMA_COLUMNS["ablation"], rows)

    optima = []
    for panel_nfe in cfg.ablation.budgets:
        panel = [
            (fgd, eta, frac)
            for (nfe, eta, frac, _, _), (fgd, _) in zip(cells, outcomes)
            if nfe == panel_nfe
        ]
        fgd, eta, frac = min(panel)
        optima.append({"nfe": int(panel_nfe), "eta": eta, "nden_frac": frac, "fgd": fgd})

    total_ledger = {
        "total_nfe": int(sum(led.total_nfe for _, led in outcomes)),
        "samples_emitted": int(sum(led.samples_emitted for _, led in outcomes)),
        "cells": len(cells),
    }
    manifest = _base_manifest("ablation", cfg, threads)
    manifest["nfe"] = total_ledger
    manifest["diagnostics"] = {"optima": optima}
    manifest["wall_clock_seconds"] = {
        "sweep_seconds": sweep_seconds,
        "total_seconds": time.perf_counter() - t_start,
    }
    return run.write_manifest(manifest)


def cmd_train_classifier(cfg: ExperimentConfig, threads=1):
    """Fit the noise-level classifier and persist it with its training report."""
    cfg.validate()
    t_start = time.perf_counter()
    mix = cfg.mixture.build()
    grid = cfg.schedule.grid()
    block = cfg.train

    run = RunDir(cfg.out_dir)

    fmap = build_feature_map(
        mix, rngs.stream(cfg.master_seed, rngs.KIND_CLASSIFIER, 0),
        n_codebook=block.codebook_size,
    )
    tset = make_training_set(
        mix, grid, block.n_per_level,
        rngs.stream(cfg.master_seed, rngs.KIND_CLASSIFIER, 1),
        weighting=block.weighting,
    )
    clf = new_classifier(fmap, grid)
    if block.warm_start:
        init_from_moments(clf, tset)
    report = train(
        clf,
        tset,
        epochs=block.epochs,
        lr=block.lr,
        rng=rngs.stream(cfg.master_seed, rngs.KIND_CLASSIFIER, 2),
        batch_size=block.batch_size,
        val_fraction=block.val_fraction,
        within_k=block.within_k,
    )

    save_classifier(clf, run.path("classifier.json"))
    run.add_output("classifier.json", "classifier-json")
    run.write_csv(
        "losses.csv",
        "losses",
        SCHEMA_COLUMNS["losses"],
        [(epoch + 1, float(v)) for epoch, v in enumerate(report.loss_curve)],
    )

    manifest = _base_manifest("train-classifier", cfg, threads)
    manifest["nfe"] = None
    manifest["diagnostics"] = {
        "epochs": report.epochs,
        "final_cross_entropy": report.final_cross_entropy,
        "top1_accuracy": report.top1_accuracy,
        "within_k_accuracy": report.within_k_accuracy,
        "within_k": report.k,
        "feature_version": FEATURE_VERSION,
        "training_points": int(tset.x.shape[0]),
    }
    manifest["wall_clock_seconds"] = {"total_seconds": time.perf_counter() - t_start}
    return run.write_manifest(manifest)
