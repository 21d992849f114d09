import numpy as np
import pytest

import geomreg.autodiff as ad
from geomreg.autodiff import NumericError, Tape
from geomreg.surrogate import (BatchCentroids, RunningMean, Surrogate,
                               batch_centroids, contrastive_loss,
                               momentum_update, refill)


def unit_rows(rng, k, d):
    v = rng.standard_normal((k, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def brute_force_centroids(z, positions):
    """Independent recomputation of Eq.-style normalized per-bin means."""
    out = {}
    for p in np.unique(positions):
        mean = z[positions == p].mean(axis=0)
        out[int(p)] = mean / np.linalg.norm(mean)
    return out


def make_batch(tape, z, positions):
    return batch_centroids(tape.leaf(z), positions)


# ------------------------------------------------------------- batch means


def test_single_member_bin_is_its_own_centroid():
    rng = np.random.default_rng(0)
    z = unit_rows(rng, 3, 5)
    bc = make_batch(Tape(), z, np.array([0, 1, 2]))
    assert np.allclose(bc.centroids.data, z, atol=1e-12)
    assert np.array_equal(bc.counts, np.ones(3, dtype=int))


def test_duplicate_rows_collapse_to_the_row():
    z = np.tile(np.array([[0.6, 0.8]]), (2, 1))
    bc = make_batch(Tape(), z, np.array([4, 4]))
    assert np.allclose(bc.centroids.data, [[0.6, 0.8]], atol=1e-12)
    assert np.array_equal(bc.positions, [4])


def test_orthogonal_pair_averages_to_diagonal():
    z = np.array([[1.0, 0.0], [0.0, 1.0]])
    bc = make_batch(Tape(), z, np.array([2, 2]))
    r = 1.0 / np.sqrt(2.0)
    assert np.allclose(bc.centroids.data, [[r, r]], atol=1e-15)


def test_batch_centroids_match_brute_force():
    rng = np.random.default_rng(1)
    z = unit_rows(rng, 40, 6)
    positions = rng.integers(0, 7, size=40)
    bc = make_batch(Tape(), z, positions)
    oracle = brute_force_centroids(z, positions)
    for row, p in zip(bc.centroids.data, bc.positions):
        assert np.allclose(row, oracle[int(p)], atol=1e-12)


def test_batch_centroids_rejects_empty_and_antialigned():
    with pytest.raises(ValueError):
        make_batch(Tape(), np.empty((0, 3)), np.empty(0, dtype=int))
    z = np.array([[1.0, 0.0], [-1.0, 0.0]])
    with pytest.raises(NumericError):
        make_batch(Tape(), z, np.array([0, 0]))


def test_batch_centroids_are_differentiable():
    rng = np.random.default_rng(2)
    z0 = unit_rows(rng, 10, 4)
    positions = rng.integers(0, 3, size=10)
    target = unit_rows(rng, 3, 4)

    def f(ps):
        bc = batch_centroids(ps[0], positions)
        d = ad.sub(bc.centroids, bc.centroids.tape.constant(target))
        return ad.sum_all(ad.mul(d, d))

    assert ad.grad_check(f, [z0]) < 1e-6


# ------------------------------------------------------------------ refill


def prev_surrogate(rng, k, d):
    return Surrogate(bin_values=np.arange(k, dtype=float) + 0.5,
                     centroids=unit_rows(rng, k, d), epoch=3)


def test_refill_full_coverage_keeps_batch_exactly():
    rng = np.random.default_rng(3)
    prev = prev_surrogate(rng, 4, 3)
    z = unit_rows(rng, 8, 3)
    bc = make_batch(Tape(), z, np.array([0, 0, 1, 1, 2, 2, 3, 3]))
    filled = refill(bc, prev)
    assert np.array_equal(filled.data, bc.centroids.data)


def test_refill_no_coverage_returns_prev_exactly():
    rng = np.random.default_rng(4)
    prev = prev_surrogate(rng, 5, 3)
    bc = BatchCentroids(positions=np.empty(0, dtype=np.intp),
                        counts=np.empty(0, dtype=int),
                        centroids=Tape().leaf(np.empty((0, 3))))
    assert np.array_equal(refill(bc, prev).data, prev.centroids)


def test_refill_matches_elementwise_oracle():
    rng = np.random.default_rng(5)
    for _ in range(25):
        k = int(rng.integers(2, 9))
        d = int(rng.integers(2, 6))
        prev = prev_surrogate(rng, k, d)
        m = int(rng.integers(1, 12))
        positions = rng.integers(0, k, size=m)
        z = unit_rows(rng, m, d)
        bc = make_batch(Tape(), z, positions)
        filled = refill(bc, prev).data

        oracle = brute_force_centroids(z, positions)
        for slot in range(k):
            want = oracle.get(slot, prev.centroids[slot])
            assert np.allclose(filled[slot], want, atol=1e-12)


def test_refill_gradient_skips_stored_rows():
    rng = np.random.default_rng(6)
    prev = prev_surrogate(rng, 5, 4)
    z0 = unit_rows(rng, 6, 4)
    positions = np.array([1, 1, 3, 3, 3, 1])

    def f(ps):
        bc = batch_centroids(ps[0], positions)
        filled = refill(bc, prev)
        return ad.sum_all(ad.mul(filled, filled))

    val, grads = ad.value_and_grad(f, [z0])
    assert np.linalg.norm(grads[0]) > 0
    # rows 0, 2, 4 are constants: perturbing z must not change their part
    assert ad.grad_check(f, [z0]) < 1e-6


# --------------------------------------------------- running mean, momentum


def test_running_mean_single_batch_epoch():
    rng = np.random.default_rng(7)
    prev = prev_surrogate(rng, 3, 4)
    z = unit_rows(rng, 9, 4)
    positions = np.array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    bc = make_batch(Tape(), z, positions)
    acc = RunningMean(3, 4)
    acc.update(bc)
    got = acc.finalize(prev, prev.bin_values)
    assert np.allclose(got.centroids, bc.centroids.data, atol=1e-12)


def test_running_mean_of_identical_centroids_is_that_centroid():
    rng = np.random.default_rng(8)
    prev = prev_surrogate(rng, 2, 3)
    z = np.tile(unit_rows(rng, 1, 3), (4, 1))
    acc = RunningMean(2, 3)
    for _ in range(2):
        acc.update(make_batch(Tape(), z, np.array([1, 1, 1, 1])))
    got = acc.finalize(prev, prev.bin_values)
    assert np.allclose(got.centroids[1], z[0], atol=1e-12)
    assert np.array_equal(got.centroids[0], prev.centroids[0])


def test_running_mean_matches_brute_force_over_three_batches():
    rng = np.random.default_rng(9)
    k, d = 6, 5
    prev = prev_surrogate(rng, k, d)
    acc = RunningMean(k, d)
    per_batch = {p: [] for p in range(k)}
    for _ in range(3):
        m = int(rng.integers(4, 14))
        z = unit_rows(rng, m, d)
        positions = rng.integers(0, k, size=m)
        bc = make_batch(Tape(), z, positions)
        acc.update(bc)
        for row, p in zip(bc.centroids.data, bc.positions):
            per_batch[int(p)].append(row)
    got = acc.finalize(prev, prev.bin_values)
    for p in range(k):
        if per_batch[p]:
            mean = np.mean(per_batch[p], axis=0)
            assert np.allclose(got.centroids[p], mean / np.linalg.norm(mean),
                               atol=1e-12)
        else:
            assert np.array_equal(got.centroids[p], prev.centroids[p])


def test_momentum_endpoints_and_blend():
    rng = np.random.default_rng(10)
    cur = prev_surrogate(rng, 3, 2)
    run = Surrogate(bin_values=cur.bin_values, centroids=unit_rows(rng, 3, 2))
    assert np.allclose(momentum_update(cur, run, 1.0).centroids, cur.centroids,
                       atol=1e-15)
    assert np.allclose(momentum_update(cur, run, 0.0).centroids, run.centroids,
                       atol=1e-15)

    cur2 = Surrogate(bin_values=[0.5], centroids=np.array([[1.0, 0.0]]))
    run2 = Surrogate(bin_values=[0.5], centroids=np.array([[0.0, 1.0]]))
    out = momentum_update(cur2, run2, 0.9)
    assert np.allclose(out.centroids, [[0.9, 0.1]] / np.sqrt(0.82), atol=1e-12)
    assert out.epoch == cur2.epoch + 1


def test_momentum_output_norms_are_unit_for_any_alpha():
    rng = np.random.default_rng(11)
    cur = prev_surrogate(rng, 8, 6)
    run = Surrogate(bin_values=cur.bin_values, centroids=unit_rows(rng, 8, 6))
    for alpha in (0.0, 0.25, 0.5, 0.9, 1.0):
        out = momentum_update(cur, run, alpha)
        assert np.allclose(np.linalg.norm(out.centroids, axis=1), 1.0, atol=1e-12)


def test_momentum_rejects_bin_mismatch_and_collapse():
    rng = np.random.default_rng(12)
    cur = prev_surrogate(rng, 3, 2)
    other = Surrogate(bin_values=[9.0, 10.0, 11.0], centroids=unit_rows(rng, 3, 2))
    with pytest.raises(ValueError):
        momentum_update(cur, other, 0.9)
    anti = Surrogate(bin_values=cur.bin_values, centroids=-cur.centroids)
    with pytest.raises(NumericError):
        momentum_update(cur, anti, 0.5)


# ------------------------------------------------------------- contrastive


def test_contrastive_single_bin_is_exactly_zero():
    tape = Tape()
    z = tape.leaf(np.array([[1.0, 0.0], [0.0, 1.0]]))
    c = tape.constant(np.array([[1.0, 0.0]]))
    out = contrastive_loss(z, np.array([0, 0]), c, tau=0.1)
    assert float(out.data) == 0.0


def test_contrastive_matched_sample_formula():
    tape = Tape()
    z = tape.leaf(np.array([[1.0, 0.0]]))
    c = tape.constant(np.array([[1.0, 0.0], [0.0, 1.0]]))
    out = contrastive_loss(z, np.array([0]), c, tau=0.1)
    assert float(out.data) == pytest.approx(np.log1p(np.exp(-10.0)), rel=1e-12)


def test_contrastive_rotating_toward_positive_decreases_loss():
    rng = np.random.default_rng(13)
    cents = unit_rows(rng, 5, 4)
    z = unit_rows(rng, 1, 4)
    pos = np.array([2])

    def value(zrow):
        tape = Tape()
        return float(contrastive_loss(tape.constant(zrow), pos,
                                      tape.constant(cents), tau=0.1).data)

    before = value(z)
    toward = z + 0.05 * (cents[2] - z)
    toward /= np.linalg.norm(toward)
    assert value(toward) < before


def test_contrastive_rejects_bad_inputs():
    tape = Tape()
    z = tape.leaf(np.array([[1.0, 0.0]]))
    c = tape.constant(np.eye(2))
    with pytest.raises(ValueError):
        contrastive_loss(z, np.array([5]), c, tau=0.1)
    with pytest.raises(ValueError):
        contrastive_loss(z, np.array([0]), c, tau=0.0)
