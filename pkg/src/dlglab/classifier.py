"""Trainable noise-level classifier over a geometric grid.

A softmax-linear model on a fixed, mode-agnostic feature map stands in
for a learned network: the features summarize how far a point sits from
the clean data (codebook distances) and how energetic it is (norm and
neighbor-difference statistics), all on log scales so geometric noise
levels become linearly separable.  The convex objective trains with
plain mini-batch gradient descent, deterministically for a given seed.

The exact grid posterior is wrapped behind the same calling convention,
so samplers can swap between the trained model and the oracle without
code changes.  Classifier evaluations are free: they never touch score
counters.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .diffusion import NoiseGrid
from .errors import TrainingDivergedError
from .mixture import GaussianMixture, sample_smoothed, sigma_posterior

__all__ = [
    "FeatureMap",
    "build_feature_map",
    "TrainingSet",
    "make_training_set",
    "NoiseClassifier",
    "new_classifier",
    "init_from_moments",
    "train",
    "TrainReport",
    "ExactSigmaClassifier",
    "save_classifier",
    "load_classifier",
]

FEATURE_VERSION = "codebook-logdist-v1"


@dataclass
class FeatureMap:
    """Fixed transform of a point into noise-level summary statistics.

    Features (before z-scoring): log nearest / second-nearest / mean
    squared distance to a small codebook of clean draws, log squared
    norm, log neighbor-difference energy, and the squares of the three
    log-distance statistics so decision boundaries can be quadratic on
    the log scale.  The codebook rows are sorted, which makes the map
    invariant to how the generating mixture ordered its modes.
    """

    codebook: np.ndarray
    eps: float = 1e-12
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    version: str = FEATURE_VERSION

    N_FEATURES = 8

    def __post_init__(self):
        self.codebook = np.asarray(self.codebook, dtype=float)
        if self.codebook.ndim != 2 or self.codebook.shape[0] < 2:
            raise ValueError("codebook must be (B, d) with B >= 2")

    @property
    def dim(self):
        return self.codebook.shape[1]

    def raw(self, x):
        """Un-normalized features; accepts (d,) or (n, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.ndim != 2 or xb.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got shape {x.shape}")
        d = float(self.dim)
        d2 = ((xb[:, None, :] - self.codebook[None, :, :]) ** 2).sum(axis=-1)
        d2.sort(axis=1)
        log_min = 0.5 * np.log(d2[:, 0] / d + self.eps)
        log_second = 0.5 * np.log(d2[:, min(1, d2.shape[1] - 1)] / d + self.eps)
        log_mean = 0.5 * np.log(d2.mean(axis=1) / d + self.eps)
        log_norm = 0.5 * np.log((xb * xb).sum(axis=1) / d + self.eps)
        diffs = np.diff(xb, axis=1)
        denom = max(self.dim - 1, 1)
        log_diff = 0.5 * np.log((diffs * diffs).sum(axis=1) / denom + self.eps)
        feats = np.stack(
            [
                log_min,
                log_min**2,
                log_second,
                log_second**2,
                log_mean,
                log_mean**2,
                log_norm,
                log_diff,
            ],
            axis=1,
        )
        return feats[0] if single else feats

    def set_normalization(self, features):
        feats = np.asarray(features, dtype=float)
        self.norm_mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        self.norm_std = np.where(std > 0, std, 1.0)

    def __call__(self, x):
        feats = self.raw(x)
        if self.norm_mean is None:
            return feats
        return (feats - self.norm_mean) / self.norm_std


def build_feature_map(mix: GaussianMixture, rng, n_codebook=256):
    """Codebook of clean mixture draws, canonicalized by row sort.

    Duplicate draws (exact for point-mass modes) collapse, so the
    codebook is a set of clean-data locations with no record of draw
    order or mode identity.
    """
    if n_codebook < 2:
        raise ValueError("n_codebook must be >= 2")
    draws = sample_smoothed(mix, 0.0, rng, n=n_codebook)
    codebook = np.unique(np.asarray(draws, dtype=float), axis=0)
    if codebook.shape[0] < 2:
        # a single distinct clean point: keep two copies so the
        # second-nearest statistic stays defined
        codebook = np.repeat(codebook, 2, axis=0)
    return FeatureMap(codebook=codebook)


@dataclass(frozen=True)
class TrainingSet:
    """Stratified corruption draws: equal counts per level, prior in the weights.

    Each grid level contributes the same number of draws; the 1/sigma
    prior enters as per-sample loss weights (normalized to mean 1), so
    the fitted model targets the posterior with that prior while every
    level still gets enough draws to be learnable.  ``weighting="uniform"``
    switches the weights off for ablation.
    """

    x: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    n_levels: int


def make_training_set(mix: GaussianMixture, grid: NoiseGrid, n_per_level, rng, weighting="prior"):
    n_per_level = int(n_per_level)
    if n_per_level < 1:
        raise ValueError("n_per_level must be >= 1")
    if weighting not in ("prior", "uniform"):
        raise ValueError(f"weighting must be 'prior' or 'uniform', got {weighting!r}")
    xs = []
    labels = []
    for m, tau in enumerate(grid.levels):
        xs.append(sample_smoothed(mix, float(tau), rng, n=n_per_level))
        labels.append(np.full(n_per_level, m, dtype=int))
    x = np.concatenate(xs)
    labels = np.concatenate(labels)
    if weighting == "prior":
        w = grid.prior_weights[labels]
        weights = w * (labels.size / w.sum())
    else:
        weights = np.ones(labels.size)
    return TrainingSet(x=x, labels=labels, weights=weights, n_levels=grid.n_levels)


@dataclass
class NoiseClassifier:
    """Softmax-linear model ``softmax(W^T phi(x) + b)`` over the grid levels."""

    feature_map: FeatureMap
    weights: np.ndarray  # (F, M)
    bias: np.ndarray  # (M,)
    grid: NoiseGrid

    def __post_init__(self):
        f, m = self.weights.shape
        if f != self.feature_map.N_FEATURES:
            raise ValueError(f"weights have {f} feature rows, expected {self.feature_map.N_FEATURES}")
        if m != self.grid.n_levels or self.bias.shape != (m,):
            raise ValueError("weights/bias shape does not match the grid")

    def logits(self, x):
        feats = self.feature_map(x)
        return feats @ self.weights + self.bias

    def predict(self, x):
        """Probability vector over the grid; accepts (d,) or (n, d)."""
        z = self.logits(x)
        z = z - z.max(axis=-1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=-1, keepdims=True)

    __call__ = predict


def new_classifier(feature_map: FeatureMap, grid: NoiseGrid):
    f = feature_map.N_FEATURES
    return NoiseClassifier(
        feature_map=feature_map,
        weights=np.zeros((f, grid.n_levels)),
        bias=np.zeros(grid.n_levels),
        grid=grid,
    )


def init_from_moments(classifier: NoiseClassifier, tset: TrainingSet):
    """Warm-start from per-level feature moments (diagonal Gaussian scores).

    Sets ``W, b`` to the linear discriminant implied by per-level feature
    means, a pooled diagonal covariance, and the training weights as a
    level prior.  Gradient descent then only refines an already sensible
    solution, so levels carrying little loss weight are classified well
    from the start rather than waiting on their tiny gradients.
    """
    if tset.n_levels != classifier.grid.n_levels:
        raise ValueError("training set and classifier use different grids")
    fm = classifier.feature_map
    if fm.norm_mean is None:
        fm.set_normalization(fm.raw(tset.x))
    feats = fm(tset.x)
    m = classifier.grid.n_levels
    n, f = feats.shape
    means = np.zeros((m, f))
    pooled = np.zeros(f)
    prior = np.zeros(m)
    for lvl in range(m):
        mask = tset.labels == lvl
        if not mask.any():
            raise ValueError(f"training set has no draws for level {lvl}")
        sub = feats[mask]
        means[lvl] = sub.mean(axis=0)
        pooled += ((sub - means[lvl]) ** 2).sum(axis=0)
        prior[lvl] = tset.weights[mask].sum()
    pooled = pooled / n + 1e-6
    prior = prior / prior.sum()
    classifier.weights[:] = (means / pooled[None, :]).T
    classifier.bias[:] = -0.5 * (means**2 / pooled[None, :]).sum(axis=1) + np.log(prior)
    return classifier


@dataclass(frozen=True)
class TrainReport:
    epochs: int
    final_cross_entropy: float
    top1_accuracy: float
    within_k_accuracy: float
    k: int
    loss_curve: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        for name in ("top1_accuracy", "within_k_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def _weighted_ce(logits, labels, weights):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    picked = logp[np.arange(labels.size), labels]
    return float(-(weights * picked).sum() / weights.sum())


def train(
    classifier: NoiseClassifier,
    tset: TrainingSet,
    epochs,
    lr,
    rng,
    batch_size=None,
    val_fraction=0.2,
    within_k=2,
):
    """Mini-batch gradient descent on the weighted cross-entropy.

    ``batch_size=None`` runs full-batch steps (monotone for small
    enough ``lr`` on this convex objective).  Feature normalization is
    fitted from the training split on first use.  A non-finite loss or
    gradient aborts with ``TrainingDivergedError``.  Held-out top-1 and
    within-±k accuracies are measured on a ``val_fraction`` split.
    """
    epochs = int(epochs)
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    lr = float(lr)
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if tset.n_levels != classifier.grid.n_levels:
        raise ValueError("training set and classifier use different grids")
    if not 0.0 <= val_fraction < 1.0:
        raise ValueError("val_fraction must lie in [0, 1)")

    n = tset.labels.size
    perm = rng.permutation(n)
    n_val = int(round(val_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        raise ValueError("training split is empty")

    fm = classifier.feature_map
    if fm.norm_mean is None:
        fm.set_normalization(fm.raw(tset.x[train_idx]))
    feats = fm(tset.x)
    labels, weights = tset.labels, tset.weights

    w, b = classifier.weights, classifier.bias
    m = classifier.grid.n_levels
    batch = train_idx.size if batch_size is None else int(batch_size)
    if batch < 1:
        raise ValueError("batch_size must be >= 1")

    losses = np.empty(epochs)
    for epoch in range(epochs):
        order = train_idx if batch_size is None else rng.permutation(train_idx)
        for start in range(0, order.size, batch):
            idx = order[start : start + batch]
            f = feats[idx]
            y = labels[idx]
            wt = weights[idx]
            z = f @ w + b
            z -= z.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(y.size), y] -= 1.0
            p *= (wt / wt.size)[:, None]
            grad_w = f.T @ p
            grad_b = p.sum(axis=0)
            if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
                raise TrainingDivergedError(f"non-finite gradient at epoch {epoch}")
            w -= lr * grad_w
            b -= lr * grad_b
        losses[epoch] = _weighted_ce(feats[train_idx] @ w + b, labels[train_idx], weights[train_idx])
        if not np.isfinite(losses[epoch]):
            raise TrainingDivergedError(f"non-finite loss {losses[epoch]} at epoch {epoch}")

    eval_idx = val_idx if val_idx.size else train_idx
    logits = feats[eval_idx] @ w + b
    final_ce = _weighted_ce(logits, labels[eval_idx], weights[eval_idx])
    pred = logits.argmax(axis=1)
    truth = labels[eval_idx]
    top1 = float((pred == truth).mean())
    withink = float((np.abs(pred - truth) <= within_k).mean())
    assert 0 <= pred.min() and pred.max() < m
    return TrainReport(
        epochs=epochs,
        final_cross_entropy=final_ce,
        top1_accuracy=top1,
        within_k_accuracy=withink,
        k=within_k,
        loss_curve=losses,
    )


class ExactSigmaClassifier:
    """The analytic grid posterior behind the classifier calling convention."""

    def __init__(self, mix: GaussianMixture, grid: NoiseGrid):
        self.mix = mix
        self.grid = grid

    def predict(self, x):
        return sigma_posterior(self.mix, x, self.grid)

    __call__ = predict


def save_classifier(classifier: NoiseClassifier, path):
    """Persist weights, grid, and feature map as a JSON document."""
    fm = classifier.feature_map
    doc = {
        "format_version": 1,
        "feature_version": fm.version,
        "grid": {
            "sigma_min": classifier.grid.sigma_min,
            "sigma_max": classifier.grid.sigma_max,
            "n_levels": classifier.grid.n_levels,
        },
        "weights": classifier.weights.tolist(),
        "bias": classifier.bias.tolist(),
        "feature_map": {
            "codebook": fm.codebook.tolist(),
            "eps": fm.eps,
            "norm_mean": None if fm.norm_mean is None else fm.norm_mean.tolist(),
            "norm_std": None if fm.norm_std is None else fm.norm_std.tolist(),
        },
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_classifier(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != 1:
        raise ValueError(f"unsupported classifier file version {doc.get('format_version')!r}")
    if doc.get("feature_version") != FEATURE_VERSION:
        raise ValueError(
            f"classifier was saved with feature map {doc.get('feature_version')!r}, "
            f"this build uses {FEATURE_VERSION!r}"
        )
    g = doc["grid"]
    grid = NoiseGrid(g["sigma_min"], g["sigma_max"], g["n_levels"])
    fdoc = doc["feature_map"]
    fm = FeatureMap(
        codebook=np.array(fdoc["codebook"], dtype=float),
        eps=fdoc["eps"],
        norm_mean=None if fdoc["norm_mean"] is None else np.array(fdoc["norm_mean"]),
        norm_std=None if fdoc["norm_std"] is None else np.array(fdoc["norm_std"]),
    )
    return NoiseClassifier(
        feature_map=fm,
        weights=np.array(doc["weights"], dtype=float),
        bias=np.array(doc["bias"], dtype=float),
        grid=grid,
    )
