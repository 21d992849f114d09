import numpy as np
import pytest

import geomreg.autodiff as ad
from geomreg.geometry import (coverage_at_epsilon, enveloping_loss,
                              enveloping_value, few_shot_proportion,
                              geometric_loss, homogeneity_loss,
                              homogeneity_value, sample_hypersphere)


def unit_rows(rng, k, d):
    v = rng.standard_normal((k, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def circle_points(k, offset=0.0):
    ang = offset + 2.0 * np.pi * np.arange(k) / k
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def uniform_arc_labels(centroids, lo=0.0, hi=1.0):
    """Label spacing proportional to chord lengths (uniform-speed traversal)."""
    chords = np.linalg.norm(np.diff(centroids, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(chords)])
    return lo + (hi - lo) * cum / cum[-1]


# ------------------------------------------------------------ sphere sample


def test_sample_determinism_and_norms():
    a = sample_hypersphere(500, 7, seed=42)
    b = sample_hypersphere(500, 7, seed=42)
    assert np.array_equal(a.points, b.points)
    assert np.allclose(np.linalg.norm(a.points, axis=1), 1.0, atol=1e-6)


def test_sample_mean_vector_is_near_zero():
    s = sample_hypersphere(100_000, 3, seed=0)
    assert np.linalg.norm(s.points.mean(axis=0)) < 0.02


def test_sample_rejects_low_dim():
    with pytest.raises(ValueError):
        sample_hypersphere(10, 1, seed=0)


# ---------------------------------------------------------- enveloping loss


def test_enveloping_single_centroid_is_zero_mean():
    s = sample_hypersphere(100_000, 2, seed=1)
    val = enveloping_value(s, np.array([[1.0, 0.0]]))
    assert abs(val) <= 0.01


def test_enveloping_dense_circle_trace_saturates():
    s = sample_hypersphere(100_000, 2, seed=2)
    val = enveloping_value(s, circle_points(256))
    assert val <= -0.9999


def test_enveloping_self_match_is_exactly_minus_one():
    # axis-aligned unit vectors are exactly representable; self-cosine is 1.0
    eye = np.concatenate([np.eye(4), -np.eye(4)])
    assert enveloping_value(eye, eye) == -1.0
    # random sample: exact up to normalization rounding
    s = sample_hypersphere(20_000, 5, seed=3)
    assert enveloping_value(s, s.points) == pytest.approx(-1.0, abs=1e-12)


def test_enveloping_range_and_permutation_invariance():
    rng = np.random.default_rng(4)
    s = sample_hypersphere(2_000, 6, seed=5)
    cents = unit_rows(rng, 9, 6)
    val = enveloping_value(s, cents)
    assert -1.0 <= val <= 1.0
    perm = rng.permutation(9)
    assert enveloping_value(s, cents[perm]) == val


def test_enveloping_gradient_reaches_only_argmax_centroids():
    rng = np.random.default_rng(6)
    # probes concentrated in a cap around +e1; the south-pole centroid can
    # never be anyone's best match
    pts = np.broadcast_to([1.0, 0, 0, 0], (50, 4)) + 0.2 * rng.standard_normal((50, 4))
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    cap = unit_rows(rng, 3, 4) * 0.3 + np.array([1.0, 0, 0, 0])
    cents = np.vstack([cap / np.linalg.norm(cap, axis=1, keepdims=True),
                       [[-1.0, 0.0, 0.0, 0.0]]])
    owners = np.argmax(pts @ cents.T, axis=1)
    unchosen = np.setdiff1d(np.arange(4), owners)
    assert 3 in unchosen

    def f(ps):
        return enveloping_loss(pts, ps[0])

    _, grads = ad.value_and_grad(f, [cents])
    for k in unchosen:
        assert np.array_equal(grads[0][k], np.zeros(4))
    for k in np.unique(owners):
        assert np.linalg.norm(grads[0][k]) > 0


def test_enveloping_validates_inputs():
    s = sample_hypersphere(10, 3, seed=0)
    tape = ad.Tape()
    with pytest.raises(ValueError):
        enveloping_loss(s, tape.constant(np.empty((0, 3))))
    with pytest.raises(ValueError):
        enveloping_loss(s, tape.constant(unit_rows(np.random.default_rng(0), 2, 4)))
    with pytest.raises(ValueError):
        enveloping_loss(s, tape.constant(np.full((2, 3), 0.5)))


# --------------------------------------------------------- homogeneity loss


def test_homogeneity_coincident_points_are_free():
    c = np.array([[0.6, 0.8], [0.6, 0.8]])
    assert homogeneity_value(c, np.array([0.0, 1.0])) == 0.0


def test_homogeneity_right_angle_unit_gap():
    c = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert homogeneity_value(c, np.array([0.0, 1.0])) == pytest.approx(2.0, abs=1e-15)


def test_homogeneity_rejects_bad_labels():
    c = np.eye(3)
    with pytest.raises(ValueError):
        homogeneity_value(c, np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        homogeneity_value(c[:1], np.array([0.0]))


def test_homogeneity_reversal_invariance():
    rng = np.random.default_rng(7)
    c = unit_rows(rng, 12, 5)
    y = np.sort(rng.uniform(0.0, 4.0, size=12))
    y += np.arange(12) * 1e-6
    flipped = (y.min() + y.max() - y)[::-1]
    assert homogeneity_value(c[::-1], flipped) == pytest.approx(
        homogeneity_value(c, y), rel=1e-12)


def test_homogeneity_cauchy_schwarz_lower_bound():
    rng = np.random.default_rng(8)
    for _ in range(64):
        k = int(rng.integers(2, 24))
        c = unit_rows(rng, k, int(rng.integers(2, 6)))
        y = np.sort(rng.uniform(0.0, 3.0, size=k))
        y += np.arange(k) * 1e-4
        chords = np.linalg.norm(np.diff(c, axis=0), axis=1)
        bound = chords.sum() ** 2 / (y[-1] - y[0])
        assert homogeneity_value(c, y) >= bound - 1e-12


def test_uniform_arc_length_spacing_minimizes_homogeneity():
    rng = np.random.default_rng(9)
    for _ in range(5):
        cents = unit_rows(rng, 32, 3)
        uniform = homogeneity_value(cents, uniform_arc_labels(cents))
        for _ in range(200):
            interior = np.sort(rng.uniform(0.0, 1.0, size=30))
            labels = np.concatenate([[0.0], interior, [1.0]])
            if not (np.diff(labels) > 0).all():
                continue
            assert homogeneity_value(cents, labels) - uniform > 1e-9


def test_equal_angle_circle_with_uniform_labels_beats_random_respacings():
    rng = np.random.default_rng(10)
    cents = circle_points(32)  # equal chords along the trace
    labels = np.linspace(0.0, 1.0, 32)
    base = homogeneity_value(cents, labels)
    for _ in range(1000):
        interior = np.sort(rng.uniform(0.0, 1.0, size=30))
        respaced = np.concatenate([[0.0], interior, [1.0]])
        if not (np.diff(respaced) > 0).all():
            continue
        assert homogeneity_value(cents, respaced) - base > 1e-9


# ------------------------------------------------------------ combined loss


def test_geometric_loss_weights():
    rng = np.random.default_rng(11)
    s = sample_hypersphere(500, 4, seed=12)
    cents = unit_rows(rng, 6, 4)
    labels = np.linspace(0.0, 1.0, 6)

    def value(le, lh):
        tape = ad.Tape()
        return float(geometric_loss(s, tape.constant(cents), labels, le, lh).data)

    env = enveloping_value(s, cents)
    homo = homogeneity_value(cents, labels)
    assert value(0.0, 0.0) == 0.0
    assert value(1.0, 0.0) == env
    assert abs(value(0.1, 0.1) - 0.1 * (env + homo)) < 1e-12


def test_geometric_loss_gradient_is_weighted_sum():
    rng = np.random.default_rng(13)
    s = sample_hypersphere(200, 3, seed=14)
    cents = unit_rows(rng, 5, 3)
    labels = np.linspace(0.0, 2.0, 5)

    def grad_of(f):
        return ad.value_and_grad(f, [cents])[1][0]

    g_env = grad_of(lambda ps: enveloping_loss(s, ps[0]))
    g_homo = grad_of(lambda ps: homogeneity_loss(ps[0], labels))
    g_mix = grad_of(lambda ps: geometric_loss(s, ps[0], labels, 0.3, 0.7))
    assert np.allclose(g_mix, 0.3 * g_env + 0.7 * g_homo, atol=1e-12)


# ------------------------------------------------------------- diagnostics


def test_coverage_self_match_is_total():
    s = sample_hypersphere(5_000, 4, seed=15)
    assert coverage_at_epsilon(s, s.points, 0.9999) == 1.0


def test_coverage_half_sphere_for_single_centroid():
    s = sample_hypersphere(100_000, 2, seed=16)
    frac = coverage_at_epsilon(s, np.array([[0.0, 1.0]]), 0.0)
    assert abs(frac - 0.5) < 0.01


def test_coverage_dense_circle_at_tight_epsilon():
    s = sample_hypersphere(100_000, 2, seed=17)
    assert coverage_at_epsilon(s, circle_points(256), 0.99) >= 0.99


def test_coverage_monotone_in_epsilon():
    rng = np.random.default_rng(18)
    s = sample_hypersphere(20_000, 3, seed=19)
    cents = unit_rows(rng, 8, 3)
    fracs = [coverage_at_epsilon(s, cents, e) for e in (0.8, 0.9, 0.95, 0.99)]
    assert all(a >= b for a, b in zip(fracs, fracs[1:]))


def test_few_shot_proportion_all_and_split():
    s = sample_hypersphere(100_000, 2, seed=20)
    cents = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert few_shot_proportion(s, cents, np.array(["few", "few"])) == 1.0
    frac = few_shot_proportion(s, cents, np.array(["few", "many"]))
    assert abs(frac - 0.5) < 0.01
