"""64-bit gradient verification suite shared by the test suite and the CLI.

Builds randomized configurations of the four training losses (MSE over an
MLP, enveloping, homogeneity, contrastive) across representation dims and bin
counts, and checks analytic gradients against central finite differences.

Max-style reductions are piecewise smooth, so the finite-difference oracle is
only valid away from argmax ties (and ReLU kinks). Builders therefore reject
configurations whose tie margin is inside the FD stencil and redraw with a
shifted seed; this guards the oracle, not the gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import geometry, surrogate
from .nn import init_mlp, mlp_apply

FD_STEP = 1e-5
TOLERANCE = 1e-5
DIMS = (2, 8, 32)
BIN_COUNTS = (2, 5, 20)
# A single-coordinate FD step of h moves any cosine (or preactivation) by
# O(h), so a 10h margin keeps argmax/kink flips outside the stencil.
_MARGIN = 10.0 * FD_STEP


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    passed: bool


def _random_unit_rows(rng, k, d):
    v = rng.standard_normal((k, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def mse_config(seed: int, d: int, batch: int = 8):
    """MSE of a small two-hidden-layer MLP; redraws if a ReLU sits on its kink."""
    for attempt in range(64):
        rng = np.random.default_rng(seed + 1000 * attempt)
        x = rng.standard_normal((batch, d))
        y = rng.standard_normal((batch, 1))
        mlp = init_mlp([d, 6, 4, 1], "relu", seed=seed + 7 + 1000 * attempt)
        params = mlp.params()

        h = x
        clear = True
        for i in range(len(mlp.weights) - 1):
            h = h @ mlp.weights[i] + mlp.biases[i]
            if np.abs(h).min() < _MARGIN:
                clear = False
                break
            h = np.maximum(h, 0.0)
        if not clear:
            continue

        def f(ps, x=x, y=y):
            tape = ps[0].tape
            pred = mlp_apply(ps, tape.constant(x), "relu")
            dlt = ad.sub(pred, tape.constant(y))
            return ad.mean_all(ad.mul(dlt, dlt))

        return f, params
    raise RuntimeError("could not draw a kink-free MSE configuration")


def enveloping_config(seed: int, d: int, k: int, n: int = 100):
    """Enveloping loss of k random centroids; redraws on near-argmax ties."""
    for attempt in range(64):
        rng = np.random.default_rng(seed + 1000 * attempt)
        pts = geometry.sample_hypersphere(n, d, seed=seed + 3 + 1000 * attempt).points
        cents = _random_unit_rows(rng, k, d)
        sims = np.sort(pts @ cents.T, axis=1)
        if k >= 2 and (sims[:, -1] - sims[:, -2]).min() < _MARGIN:
            continue

        def f(ps, pts=pts):
            return geometry.enveloping_loss(pts, ad.l2_normalize(ps[0]))

        return f, [cents]
    raise RuntimeError("could not draw a tie-free enveloping configuration")


def homogeneity_config(seed: int, d: int, k: int):
    rng = np.random.default_rng(seed)
    cents = _random_unit_rows(rng, max(k, 2), d)
    labels = np.sort(rng.uniform(0.0, 1.0, size=max(k, 2)))
    labels += np.arange(labels.size) * 1e-3  # enforce strict monotonicity

    def f(ps, labels=labels):
        return geometry.homogeneity_loss(ad.l2_normalize(ps[0]), labels)

    return f, [cents]


def contrastive_config(seed: int, d: int, k: int, batch: int = 8):
    rng = np.random.default_rng(seed)
    z = _random_unit_rows(rng, batch, d)
    cents = _random_unit_rows(rng, k, d)
    positions = rng.integers(0, k, size=batch)

    def f(ps, positions=positions):
        zz = ad.l2_normalize(ps[0])
        cc = ad.l2_normalize(ps[1])
        return surrogate.contrastive_loss(zz, positions, cc, tau=0.1)

    return f, [z, cents]


def run_suite(h: float = FD_STEP, tolerance: float = TOLERANCE,
              dims=DIMS, bin_counts=BIN_COUNTS, seeds=(0, 1)) -> list[CheckResult]:
    """Grid of loss configurations; >= 64 checks at the default settings."""
    results = []
    for d in dims:
        for k in bin_counts:
            for s in seeds:
                seed = 10_000 * d + 100 * k + s
                for name, builder in (
                    ("mse", lambda: mse_config(seed, d)),
                    ("enveloping", lambda: enveloping_config(seed, d, k)),
                    ("homogeneity", lambda: homogeneity_config(seed, d, k)),
                    ("contrastive", lambda: contrastive_config(seed, d, k)),
                ):
                    f, params = builder()
                    err = ad.grad_check(f, params, h=h)
                    results.append(CheckResult(name=f"{name}(d={d},K={k},s={s})",
                                               max_rel_err=err,
                                               passed=err <= tolerance))
    return results
