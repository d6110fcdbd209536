"""Scalar Gaussian mixture models for foreground/background appearance.

Segmentation runs on a single windowed grayscale slice, so mixtures are
one-dimensional: K components with weight, mean, and variance. Fitting is
seeded k-means initialization followed by EM; everything is deterministic
for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

LIKELIHOOD_FLOOR = 1e-12


@dataclass
class Mixture:
    """K-component 1D Gaussian mixture (weights sum to 1, variances floored)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def k(self) -> int:
        return len(self.weights)

    def pdf(self, z: np.ndarray) -> np.ndarray:
        """Mixture density at each sample."""
        z = np.asarray(z, dtype=np.float64)
        diff = z[..., None] - self.means
        comp = np.exp(-0.5 * diff * diff / self.variances) / np.sqrt(
            2.0 * np.pi * self.variances
        )
        return comp @ self.weights

    def neg_log_likelihood(self, z: np.ndarray) -> np.ndarray:
        """-log p(z), with the density floored to stay finite."""
        return -np.log(np.maximum(self.pdf(z), LIKELIHOOD_FLOOR))

    def assign(self, z: np.ndarray) -> np.ndarray:
        """Most plausible component per sample (argmin of the per-component
        data term -log w_k + -log N(z; mu_k, var_k)); zero-weight components
        are never chosen."""
        z = np.asarray(z, dtype=np.float64)
        diff = z[..., None] - self.means
        with np.errstate(divide="ignore"):
            cost = (
                -np.log(np.maximum(self.weights, 1e-300))
                + 0.5 * np.log(2.0 * np.pi * self.variances)
                + 0.5 * diff * diff / self.variances
            )
        cost[..., self.weights <= 0] = np.inf
        return np.argmin(cost, axis=-1)


@dataclass
class GmmModel:
    """Foreground and background appearance mixtures."""

    fg: Mixture
    bg: Mixture


def _kmeans_init(samples, k, rng):
    """Seeded Lloyd iterations; returns integer cluster labels."""
    n = len(samples)
    idx = rng.choice(n, size=k, replace=n < k)
    centers = samples[idx].astype(np.float64)
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(20):
        new_labels = np.argmin(np.abs(samples[:, None] - centers[None, :]), axis=1)
        if np.array_equal(new_labels, labels) and _ > 0:
            break
        labels = new_labels
        for j in range(k):
            sel = labels == j
            if sel.any():
                centers[j] = samples[sel].mean()
            else:
                centers[j] = samples[rng.integers(n)]
    return labels


def _mixture_from_hard_labels(samples, labels, k, variance_floor):
    weights = np.zeros(k)
    means = np.zeros(k)
    variances = np.full(k, variance_floor)
    for j in range(k):
        sel = labels == j
        cnt = int(sel.sum())
        weights[j] = cnt / len(samples)
        if cnt:
            means[j] = samples[sel].mean()
            variances[j] = max(float(samples[sel].var()), variance_floor)
    return Mixture(weights, means, variances)


def fit_gmm(
    samples: np.ndarray,
    k: int = 5,
    variance_floor: float = 0.25,
    rng_seed: int = 0,
) -> Mixture:
    """Fit a K-component scalar mixture to intensity samples.

    Deterministic for a fixed seed: seeded k-means initialization, then EM
    until the log-likelihood improves by less than 1e-6 or 100 iterations.
    Components that lose all their mass are re-seeded by splitting the
    largest-variance component. Variances never drop below the floor.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValidationError("cannot fit a mixture to zero samples")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(rng_seed)

    labels = _kmeans_init(samples, k, rng)
    mix = _mixture_from_hard_labels(samples, labels, k, variance_floor)

    n = samples.size
    prev_ll = -np.inf
    for _ in range(100):
        # E-step on active components.
        diff = samples[:, None] - mix.means
        comp = np.exp(-0.5 * diff * diff / mix.variances) / np.sqrt(
            2.0 * np.pi * mix.variances
        )
        weighted = comp * mix.weights
        total = weighted.sum(axis=1)
        ll = float(np.log(np.maximum(total, LIKELIHOOD_FLOOR)).sum())
        if ll - prev_ll < 1e-6 and np.isfinite(prev_ll):
            break
        prev_ll = ll
        resp = weighted / np.maximum(total[:, None], 1e-300)

        # M-step.
        mass = resp.sum(axis=0)
        empty = mass < 1e-9
        mix.weights = mass / n
        with np.errstate(invalid="ignore"):
            mix.means = np.where(empty, mix.means, resp.T @ samples / np.maximum(mass, 1e-300))
            var = resp.T @ (samples * samples) / np.maximum(mass, 1e-300) - mix.means**2
        mix.variances = np.where(empty, mix.variances, np.maximum(var, variance_floor))

        # Re-seed dead components by splitting the widest live one.
        if empty.any() and not empty.all():
            big = int(np.argmax(np.where(empty, -np.inf, mix.variances)))
            for j in np.flatnonzero(empty):
                mix.means[j] = mix.means[big] + np.sqrt(mix.variances[big])
                mix.variances[j] = max(mix.variances[big], variance_floor)
                mix.weights[j] = mix.weights[big] / 2.0
                mix.weights[big] /= 2.0
            mix.weights = mix.weights / mix.weights.sum()

    mix.weights = mix.weights / mix.weights.sum()
    return mix


def refit_hard(
    mix: Mixture,
    samples: np.ndarray,
    variance_floor: float,
) -> Mixture:
    """One hard-assignment refit round: assign each sample to its best
    component of `mix`, then recompute weights/means/variances per
    component. Components left empty keep their parameters with weight 0.
    Used by the segmentation alternation, where it can only lower the
    per-component data energy."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise ValidationError("cannot refit a mixture on zero samples")
    labels = mix.assign(samples)
    k = mix.k
    weights = np.zeros(k)
    means = mix.means.copy()
    variances = mix.variances.copy()
    for j in range(k):
        sel = labels == j
        cnt = int(sel.sum())
        weights[j] = cnt / samples.size
        if cnt:
            means[j] = samples[sel].mean()
            variances[j] = max(float(samples[sel].var()), variance_floor)
    return Mixture(weights, means, variances)
