"""Per-bin centroid surrogate: batch centroids, refill, momentum, contrastive.

The surrogate keeps one unit-norm centroid per training bin across epochs.
Within a batch, present bins get fresh gradient-carrying centroids (normalized
means of member representations); missing bins are refilled from the stored
surrogate as constants. At epoch end the stored surrogate is blended with the
epoch's running mean and re-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class Surrogate:
    """Complete ordered set of per-bin centroids (one row per training bin)."""
    bin_values: np.ndarray  # (K,) strictly increasing bin centers
    centroids: np.ndarray   # (K, d) unit rows
    epoch: int = 0

    def __post_init__(self):
        self.bin_values = np.asarray(self.bin_values, dtype=np.float64)
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.shape[0] != self.bin_values.shape[0]:
            raise ValueError("one centroid per bin required")
        if not (np.diff(self.bin_values) > 0).all():
            raise ValueError("bin values must be strictly increasing")

    @property
    def k(self) -> int:
        return self.bin_values.shape[0]


@dataclass
class BatchCentroids:
    """Centroids for the bins present in one batch."""
    positions: np.ndarray   # (B,) sorted indices into the full bin list
    counts: np.ndarray      # (B,) members per bin
    centroids: ad.Var       # (B, d) unit rows, gradient-carrying


def batch_centroids(z: ad.Var, positions) -> BatchCentroids:
    """Normalized per-bin means of the batch representations.

    ``positions[i]`` is the surrogate slot of row i. Averaging is one matmul
    with a constant (B, M) weight matrix, so the whole op costs two tape nodes.
    """
    positions = np.asarray(positions, dtype=np.intp)
    m = z.data.shape[0]
    if m == 0:
        raise ValueError("empty batch")
    if positions.shape != (m,):
        raise ValueError("one bin position per representation row required")
    present, inverse, counts = np.unique(positions, return_inverse=True,
                                         return_counts=True)
    avg = np.zeros((present.shape[0], m))
    avg[inverse, np.arange(m)] = 1.0 / counts[inverse]
    mean = ad.matmul(z.tape.constant(avg), z)
    return BatchCentroids(positions=present, counts=counts,
                          centroids=ad.l2_normalize(mean))


def refill(batch: BatchCentroids, prev: Surrogate) -> ad.Var:
    """Full (K, d) centroid matrix: batch rows live, missing rows constant.

    Rows at ``batch.positions`` carry gradients; every other row is the stored
    previous-epoch centroid with no gradient path.
    """
    if batch.positions.size and batch.positions.max() >= prev.k:
        raise ValueError("batch bin position outside the stored surrogate")
    return ad.scatter_rows(prev.centroids, batch.positions, batch.centroids)


class RunningMean:
    """Accumulates per-bin means of batch centroids over one epoch."""

    def __init__(self, k: int, dim: int):
        self.sums = np.zeros((k, dim))
        self.counts = np.zeros(k, dtype=np.int64)

    def update(self, batch: BatchCentroids) -> None:
        self.sums[batch.positions] += batch.centroids.data
        self.counts[batch.positions] += 1

    def finalize(self, prev: Surrogate | None, bin_values) -> Surrogate:
        """Normalized mean per seen bin; unseen bins inherit the previous row."""
        seen = self.counts > 0
        if prev is None and not seen.all():
            raise ValueError("first epoch left bins unseen; surrogate incomplete")
        cents = np.array(prev.centroids) if prev is not None else np.zeros_like(self.sums)
        mean = self.sums[seen] / self.counts[seen, None]
        norms = np.linalg.norm(mean, axis=1, keepdims=True)
        if norms.size and norms.min() < ad.EPS_NORM:
            raise ad.NumericError("running-mean centroid collapsed to zero norm")
        cents[seen] = mean / norms
        epoch = prev.epoch if prev is not None else 0
        return Surrogate(bin_values=np.asarray(bin_values, dtype=np.float64),
                         centroids=cents, epoch=epoch)


def momentum_update(current: Surrogate, running: Surrogate, alpha: float) -> Surrogate:
    """Blend alpha*current + (1-alpha)*running per bin, then re-normalize."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    if current.k != running.k or not np.array_equal(current.bin_values,
                                                    running.bin_values):
        raise ValueError("surrogates cover different bins")
    blend = alpha * current.centroids + (1.0 - alpha) * running.centroids
    norms = np.linalg.norm(blend, axis=1, keepdims=True)
    if norms.min() < ad.EPS_NORM:
        raise ad.NumericError("momentum blend collapsed to zero norm")
    return Surrogate(bin_values=current.bin_values.copy(),
                     centroids=blend / norms, epoch=current.epoch + 1)


def contrastive_loss(z: ad.Var, positions, centroids: ad.Var, tau: float) -> ad.Var:
    """Sum over the batch of -log softmax(sim(z_m, c)/tau) at the own-bin slot.

    The own-bin centroid is the positive; every other surrogate centroid is a
    negative. ``centroids`` is normally the refilled (K, d) matrix so that the
    loss sees the complete label range.
    """
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    positions = np.asarray(positions, dtype=np.intp)
    if positions.shape != (z.data.shape[0],):
        raise ValueError("one bin position per representation row required")
    if positions.size and positions.max() >= centroids.data.shape[0]:
        raise ValueError("batch bin position outside the surrogate")
    logits = ad.div(ad.matmul(z, ad.transpose(centroids)), tau)
    lse = ad.logsumexp_rows(logits)
    pos = ad.gather_rows(logits, positions)
    return ad.sum_all(ad.sub(lse, pos))
