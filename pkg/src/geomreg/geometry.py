"""Hypersphere sampling, the two geometric losses, and coverage diagnostics.

The latent trace is handled as its ordered per-bin centroids. The enveloping
loss is the soft coverage objective: minus the mean over reference sphere
points of their best cosine to any centroid (gradient reaches only that
argmax centroid). The homogeneity loss is the discrete arc-length energy
sum ||c_{k+1} - c_k||^2 / (y_{k+1} - y_k); with a fixed centroid image it is
minimized exactly when label gaps are proportional to chord lengths, i.e. the
trace is traversed at uniform speed.

The epsilon-tube itself is kept out of training: it survives only in the
hard, non-differentiable coverage diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

DEFAULT_EPSILON = 0.95  # report-only default for the hard coverage diagnostic


@dataclass(frozen=True)
class SphereSample:
    """Approximately uniform unit vectors used as coverage probes."""
    points: np.ndarray  # (N, d), unit rows
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def sample_hypersphere(n: int, d: int, seed: int) -> SphereSample:
    """N i.i.d. Gaussian vectors normalized to the unit sphere in R^d."""
    if n < 1:
        raise ValueError("need at least one point")
    if d < 2:
        raise ValueError("hypersphere sampling needs d >= 2")
    g = np.random.default_rng(seed).standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return SphereSample(points=g, seed=seed)


def _points_of(sample) -> np.ndarray:
    pts = sample.points if isinstance(sample, SphereSample) else np.asarray(sample)
    if pts.ndim != 2:
        raise ValueError("sample must be an (N, d) array of unit vectors")
    return pts


def _check_unit_rows(name: str, rows: np.ndarray, atol: float = 1e-5) -> None:
    norms = np.linalg.norm(rows, axis=1)
    if rows.shape[0] == 0:
        raise ValueError(f"{name}: must be nonempty")
    if np.abs(norms - 1.0).max() > atol:
        raise ValueError(f"{name}: rows must be unit-norm "
                         f"(worst deviation {np.abs(norms - 1.0).max():.2e})")


def enveloping_loss(sample, centroids: ad.Var) -> ad.Var:
    """Soft coverage objective: -(1/N) * sum_i max_k (p_i . c_k), in [-1, 1]."""
    pts = _points_of(sample)
    if centroids.data.ndim != 2:
        raise ValueError("centroids must be a (K, d) array")
    if centroids.data.shape[1] != pts.shape[1]:
        raise ValueError(f"dim mismatch: sample d={pts.shape[1]}, "
                         f"centroids d={centroids.data.shape[1]}")
    _check_unit_rows("centroids", centroids.data)
    tape = centroids.tape
    sims = ad.matmul(tape.constant(pts), ad.transpose(centroids))
    return ad.neg(ad.mean_all(ad.rowmax(sims)))


def homogeneity_loss(centroids: ad.Var, labels) -> ad.Var:
    """Discrete arc-length energy sum_k ||c_{k+1}-c_k||^2 / (y_{k+1}-y_k)."""
    labels = np.asarray(labels, dtype=np.float64)
    k = centroids.data.shape[0]
    if k < 2:
        raise ValueError("homogeneity needs at least two centroids")
    if labels.shape != (k,):
        raise ValueError("one label per centroid required")
    gaps = np.diff(labels)
    if not (gaps > 0).all():
        raise ValueError("labels must be strictly increasing")
    d = ad.sub(ad.slice_rows(centroids, 1, k), ad.slice_rows(centroids, 0, k - 1))
    sq = ad.sum_rows(ad.mul(d, d))
    inv = centroids.tape.constant(1.0 / gaps)
    return ad.sum_all(ad.mul(sq, inv))


def geometric_loss(sample, centroids: ad.Var, labels,
                   lambda_e: float, lambda_h: float) -> ad.Var:
    """Weighted combination lambda_e * enveloping + lambda_h * homogeneity.

    Zero-weight components are skipped entirely, so a zero weight means the
    component is never evaluated (and contributes an exact zero).
    """
    if lambda_e < 0 or lambda_h < 0 or not np.isfinite([lambda_e, lambda_h]).all():
        raise ValueError("loss weights must be finite and nonnegative")
    tape = centroids.tape
    total = None
    if lambda_e > 0.0:
        total = ad.mul(enveloping_loss(sample, centroids), lambda_e)
    if lambda_h > 0.0:
        term = ad.mul(homogeneity_loss(centroids, labels), lambda_h)
        total = term if total is None else ad.add(total, term)
    return total if total is not None else tape.constant(np.asarray(0.0))


def enveloping_value(sample, centroids: np.ndarray) -> float:
    tape = ad.Tape()
    return float(enveloping_loss(sample, tape.constant(centroids)).data)


def homogeneity_value(centroids: np.ndarray, labels) -> float:
    tape = ad.Tape()
    return float(homogeneity_loss(tape.constant(centroids), labels).data)


def coverage_at_epsilon(sample, centroids: np.ndarray, epsilon: float) -> float:
    """Hard diagnostic: fraction of probes with max cosine strictly above eps.

    Configured tubes use eps in (0, 1); eps = 0 is additionally accepted here
    because the half-space fraction is a useful analytic reference.
    """
    if not (0.0 <= epsilon < 1.0):
        raise ValueError("epsilon must lie in [0, 1)")
    pts = _points_of(sample)
    centroids = np.asarray(centroids)
    _check_unit_rows("centroids", centroids)
    best = (pts @ centroids.T).max(axis=1)
    return float((best > epsilon).mean())


def nearest_centroid(sample, centroids: np.ndarray) -> np.ndarray:
    """Index of the max-cosine centroid per probe; ties go to the lowest index."""
    pts = _points_of(sample)
    return np.argmax(pts @ np.asarray(centroids).T, axis=1)


def few_shot_proportion(sample, centroids: np.ndarray, regions) -> float:
    """Fraction of probes whose nearest centroid belongs to a few-shot bin."""
    centroids = np.asarray(centroids)
    _check_unit_rows("surrogate centroids", centroids)
    regions = np.asarray(regions)
    if regions.shape[0] != centroids.shape[0]:
        raise ValueError("one region tag per centroid required")
    owner = nearest_centroid(sample, centroids)
    return float((regions[owner] == "few").mean())
