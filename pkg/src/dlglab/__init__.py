"""Product-space Langevin-Gibbs sampling with reverse-time denoising.

A small numerical laboratory built around analytic Gaussian-mixture
targets: exact smoothed scores and noise-level posteriors, a family of
reverse-SDE/ODE integrators with honest evaluation accounting, a
product-space Langevin-Gibbs sampler with baselines, a trainable
noise-level classifier, and the diagnostics and experiment harness to
compare them.
"""

__version__ = "0.1.0"
