"""Quantitative evaluation of sampler output.

Everything here is a deterministic, side-effect-free function of its
inputs: nearest-mode coverage with an emission-order coverage curve,
class-sequence autocorrelation, a chi-square fit of class counts, a
moment-matched Gaussian Fréchet distance (a raw-space, desk-scale
surrogate for feature-space sample distances), and the score-evaluation
ledger used to audit per-sample cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import GaussianMixture

__all__ = [
    "ModeAssignment",
    "NfeLedger",
    "mode_coverage",
    "class_autocorrelation",
    "chi_square_class_fit",
    "frechet_gaussian_distance",
]


@dataclass(frozen=True)
class NfeLedger:
    """Score evaluations by phase, reconciled against the call counter.

    ``init_nfe`` covers chain initialization (rough integrator sample,
    warm-up Gibbs iterations); ``langevin_nfe`` the per-block Langevin
    moves; ``denoise_nfe`` the per-sample reverse integration plus the
    final posterior-mean step.  Initialization is a fixed cost, so the
    two averages bracket the long-chain per-sample price.
    """

    init_nfe: int
    langevin_nfe: int
    denoise_nfe: int
    samples_emitted: int

    def __post_init__(self):
        for name in ("init_nfe", "langevin_nfe", "denoise_nfe"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.samples_emitted < 1:
            raise ValueError("samples_emitted must be >= 1")

    @property
    def total_nfe(self):
        return self.init_nfe + self.langevin_nfe + self.denoise_nfe

    @property
    def average_nfe(self):
        return self.total_nfe / self.samples_emitted

    @property
    def average_nfe_excluding_init(self):
        return (self.langevin_nfe + self.denoise_nfe) / self.samples_emitted

    @classmethod
    def from_sampler_record(cls, record):
        return cls(
            init_nfe=record.init_nfe,
            langevin_nfe=record.langevin_nfe,
            denoise_nfe=record.denoise_nfe,
            samples_emitted=record.samples_emitted,
        )

    def as_dict(self):
        return {
            "init_nfe": self.init_nfe,
            "langevin_nfe": self.langevin_nfe,
            "denoise_nfe": self.denoise_nfe,
            "total_nfe": self.total_nfe,
            "samples_emitted": self.samples_emitted,
            "average_nfe": self.average_nfe,
            "average_nfe_excluding_init": self.average_nfe_excluding_init,
        }


@dataclass(frozen=True)
class ModeAssignment:
    """Nearest-mode bookkeeping for a batch of samples.

    ``nearest_index``/``distance`` follow emission order (chains
    interleaved position by position when the input is stacked);
    ``coverage_curve[j]`` counts distinct modes hit by assigned samples
    among every chain's first ``j + 1`` emissions.  Samples farther than
    the threshold from every mode are reported in ``unassigned``, never
    dropped.
    """

    nearest_index: np.ndarray
    distance: np.ndarray
    assigned: np.ndarray
    coverage_curve: np.ndarray
    threshold: float

    @property
    def covered(self):
        return int(self.coverage_curve[-1]) if self.coverage_curve.size else 0

    @property
    def unassigned(self):
        return int((~self.assigned).sum())


def mode_coverage(samples, mix: GaussianMixture, threshold_multiple=3.0, sigma_min=0.01):
    """Assign samples to nearest modes and trace coverage over emission order.

    ``samples`` is ``(n, d)`` for a single chain or ``(C, S, d)`` for
    stacked chains; the coverage curve is indexed by per-chain length in
    the stacked case.  A sample counts as assigned when its nearest-mode
    distance is below ``threshold_multiple * sigma_min * sqrt(d)`` — a
    few-sigma ball around the mode after the final denoising step.
    """
    threshold_multiple = float(threshold_multiple)
    if threshold_multiple <= 0:
        raise ValueError(f"threshold_multiple must be > 0, got {threshold_multiple}")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != mix.dim:
        raise ValueError(
            f"samples must be (n, {mix.dim}) or (chains, n, {mix.dim}), got {np.shape(samples)}"
        )
    n_chains, length, d = arr.shape
    if length == 0:
        raise ValueError("samples is empty")
    threshold = threshold_multiple * float(sigma_min) * np.sqrt(d)

    flat = arr.reshape(-1, d)
    d2 = ((flat[:, None, :] - mix.means[None, :, :]) ** 2).sum(axis=-1)
    nearest = d2.argmin(axis=1)
    dist = np.sqrt(d2[np.arange(flat.shape[0]), nearest])
    assigned = dist <= threshold

    nearest_cs = nearest.reshape(n_chains, length)
    assigned_cs = assigned.reshape(n_chains, length)
    seen = np.zeros(mix.n_modes, dtype=bool)
    curve = np.empty(length, dtype=int)
    for j in range(length):
        hit = nearest_cs[assigned_cs[:, j], j]
        seen[hit] = True
        curve[j] = int(seen.sum())
    return ModeAssignment(
        nearest_index=nearest_cs.squeeze(0) if np.asarray(samples).ndim == 2 else nearest_cs,
        distance=dist.reshape(n_chains, length).squeeze(0)
        if np.asarray(samples).ndim == 2
        else dist.reshape(n_chains, length),
        assigned=assigned_cs.squeeze(0) if np.asarray(samples).ndim == 2 else assigned_cs,
        coverage_curve=curve,
        threshold=threshold,
    )


def class_autocorrelation(class_sequence, max_lag, per_class=False):
    """Autocorrelation of a class-index sequence via one-hot indicators.

    Each class indicator is centered at its empirical frequency; the
    pooled estimate (default) is the ratio of summed-over-classes
    autocovariances to the summed lag-0 variances, so it equals 1 at lag
    0 and weighs classes by how much they actually vary.  With
    ``per_class=True`` a ``(K, max_lag + 1)`` matrix of per-class
    autocorrelations is returned instead.  A constant sequence has no
    variance to correlate; by convention it is reported as perfectly
    correlated (all ones).

    ``class_sequence`` may also be ``(chains, length)``: lagged products
    are then taken within each chain (never across the chain boundary)
    and pooled, with indicators centered at the all-chain frequency.
    """
    seq = np.asarray(class_sequence)
    if seq.ndim == 1:
        seq = seq[None, :]
    if seq.ndim != 2:
        raise ValueError(
            f"class_sequence must be 1-D or (chains, length), got shape {np.shape(class_sequence)}"
        )
    n_chains, n = seq.shape
    max_lag = int(max_lag)
    if not 0 <= max_lag < n:
        raise ValueError(f"max_lag must be in [0, {n}), got {max_lag}")
    classes, codes = np.unique(seq, return_inverse=True)
    k = classes.size
    onehot = np.zeros((n_chains * n, k))
    onehot[np.arange(n_chains * n), codes.ravel()] = 1.0
    onehot = onehot.reshape(n_chains, n, k)
    centered = onehot - onehot.mean(axis=(0, 1), keepdims=True)

    cov = np.empty((k, max_lag + 1))
    for lag in range(max_lag + 1):
        head = centered[:, : n - lag]
        tail = centered[:, lag:]
        cov[:, lag] = (head * tail).sum(axis=(0, 1)) / (n_chains * n)
    var = cov[:, 0]
    if per_class:
        out = np.ones((k, max_lag + 1))
        live = var > 0
        out[live] = cov[live] / var[live, None]
        return out
    total = var.sum()
    if total <= 0:
        return np.ones(max_lag + 1)
    return cov.sum(axis=0) / total


def chi_square_class_fit(class_counts, true_weights):
    """Pearson chi-square of observed class counts against target weights.

    Returns ``(statistic, dof)`` with ``dof = K - 1``.
    """
    counts = np.asarray(class_counts, dtype=float)
    weights = np.asarray(true_weights, dtype=float)
    if counts.shape != weights.shape or counts.ndim != 1:
        raise ValueError(
            f"counts and weights must be matching 1-D arrays, got {counts.shape} vs {weights.shape}"
        )
    if np.any(counts < 0):
        raise ValueError("counts must be >= 0")
    if np.any(weights <= 0):
        raise ValueError("weights must be > 0")
    n = counts.sum()
    if n <= 0:
        raise ValueError("counts sum to zero")
    expected = n * weights / weights.sum()
    stat = float(((counts - expected) ** 2 / expected).sum())
    return stat, counts.size - 1


def _psd_sqrt(mat):
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_gaussian_distance(samples_a, samples_b, diag=None):
    """Fréchet distance between Gaussians moment-matched to two sample sets.

    ``‖μ_a − μ_b‖² + tr(Σ_a + Σ_b − 2 (Σ_a Σ_b)^{1/2})``, with the
    matrix square root taken through a symmetric eigendecomposition and
    negative eigenvalues (sampling noise can make the product
    indefinite) clamped at zero.  ``diag=True`` matches diagonal
    covariances instead, the cheap mode for high-dimensional input;
    by default it kicks in above d = 64.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(
            f"inputs must be (n, d) with matching d, got {a.shape} and {b.shape}"
        )
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("need at least 2 samples per set to estimate covariances")
    d = a.shape[1]
    if diag is None:
        diag = d > 64
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    mean_term = float(((mu_a - mu_b) ** 2).sum())
    if diag:
        va = a.var(axis=0, ddof=1)
        vb = b.var(axis=0, ddof=1)
        cov_term = float((va + vb - 2.0 * np.sqrt(va * vb)).sum())
    else:
        ca = np.cov(a, rowvar=False)
        cb = np.cov(b, rowvar=False)
        ca = np.atleast_2d(ca)
        cb = np.atleast_2d(cb)
        root_a = _psd_sqrt(ca)
        middle = _psd_sqrt(root_a @ cb @ root_a)
        cov_term = float(np.trace(ca) + np.trace(cb) - 2.0 * np.trace(middle))
    return max(mean_term + cov_term, 0.0)
