import numpy as np
import pytest

from sketchcluster import (FrequencyMatrix, Sketch, analytic_sketch,
                           compute_sketch, draw_frequencies, estimate_scale,
                           merge_sketches, sketch_residual)
from sketchcluster.data import SynthSpec, gen_gmm


def test_direction_rows_unit_norm():
    for law in ("gaussian", "adapted_radius"):
        freqs = draw_frequencies(3, 5, law, 1.0, seed=7)
        norms = np.linalg.norm(freqs.directions, axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-12
        assert np.all(freqs.radii > 0)


def test_draw_frequencies_deterministic():
    a = draw_frequencies(4, 16, "adapted_radius", 2.0, seed=3)
    b = draw_frequencies(4, 16, "adapted_radius", 2.0, seed=3)
    assert np.array_equal(a.directions, b.directions)
    assert np.array_equal(a.radii, b.radii)


def test_gaussian_radii_second_moment():
    # radii are scale^-1 chi_N draws, so E r^2 = N / scale^2
    freqs = draw_frequencies(2, 10_000, "gaussian", 1.0, seed=0)
    assert np.mean(freqs.radii ** 2) == pytest.approx(2.0, rel=0.05)


def test_draw_frequencies_validation():
    with pytest.raises(ValueError):
        draw_frequencies(0, 5)
    with pytest.raises(ValueError):
        draw_frequencies(3, 0)
    with pytest.raises(ValueError):
        draw_frequencies(3, 5, scale=0.0)
    with pytest.raises(ValueError):
        draw_frequencies(3, 5, radius_law="cauchy")


def test_frequency_matrix_invariants():
    with pytest.raises(ValueError):
        FrequencyMatrix(np.array([[2.0, 0.0]]), np.array([1.0]), 0,
                        "gaussian", 1.0)
    with pytest.raises(ValueError):
        FrequencyMatrix(np.array([[1.0, 0.0]]), np.array([-1.0]), 0,
                        "gaussian", 1.0)


def test_estimate_scale_unit_variance_1d():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((1, 5000))
    assert estimate_scale(X) == pytest.approx(1.0, rel=0.10)


def test_estimate_scale_homogeneity():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((4, 800))
    assert estimate_scale(10.0 * X) == pytest.approx(10.0 * estimate_scale(X),
                                                     rel=0.01)


def test_estimate_scale_degenerate():
    X = np.tile(np.array([[1.0], [2.0]]), (1, 50))
    with pytest.raises(ValueError, match="degenerate"):
        estimate_scale(X)


def test_sketch_of_zero_data_is_one():
    freqs = draw_frequencies(3, 8, "gaussian", 1.0, seed=0)
    sk = compute_sketch(np.zeros((3, 10)), freqs)
    assert np.allclose(sk.values, 1.0 + 0.0j)


def test_sketch_symmetric_pair_is_cosine():
    freqs = FrequencyMatrix(np.array([[1.0]]), np.array([np.pi]), 0,
                            "gaussian", 1.0)
    sk = compute_sketch(np.array([[1.0, -1.0]]), freqs)
    assert sk.values[0] == pytest.approx(np.cos(np.pi), abs=1e-12)


def test_sketch_modulus_bound():
    rng = np.random.default_rng(2)
    freqs = draw_frequencies(4, 64, "gaussian", 1.0, seed=2)
    sk = compute_sketch(rng.standard_normal((4, 300)), freqs)
    assert np.all(np.abs(sk.values) <= 1.0 + 1e-15)


def test_sketch_gaussian_concentration():
    # single Gaussian N(c, I): empirical sketch within 5/sqrt(T) of the limit
    rng = np.random.default_rng(5)
    n, t = 5, 100_000
    c = rng.standard_normal((n, 1))
    freqs = draw_frequencies(n, 50, "gaussian",
                             float(np.sqrt(n + np.sum(c * c))), seed=5)
    X = c + rng.standard_normal((n, t))
    ya = analytic_sketch(c, np.array([1.0]), np.array([1.0]), freqs)
    err = np.max(np.abs(compute_sketch(X, freqs).values - ya))
    assert err <= 5.0 / np.sqrt(t)


def test_sketch_error_halves_when_samples_quadruple():
    # O(1/sqrt(T)) rate: quadrupling T halves the error, within a factor 1.5
    n, m = 5, 100
    ratios = []
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        c = rng.standard_normal((n, 1))
        freqs = draw_frequencies(n, m, "gaussian",
                                 float(np.sqrt(n + np.sum(c * c))), seed=seed)
        ya = analytic_sketch(c, np.array([1.0]), np.array([1.0]), freqs)

        def max_err(t):
            X = c + rng.standard_normal((n, t))
            return np.max(np.abs(compute_sketch(X, freqs).values - ya))

        ratios.append(max_err(40_000) / max_err(10_000))
    med = np.median(ratios)
    assert 0.5 / 1.5 <= med <= 0.5 * 1.5


def test_chunk_invariance():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((4, 500))
    freqs = draw_frequencies(4, 32, "gaussian", 2.0, seed=3)
    ref = compute_sketch(X, freqs, chunk=500).values
    for chunk in (7, 64, 128, 4096):
        vals = compute_sketch(X, freqs, chunk=chunk).values
        assert np.max(np.abs(vals - ref)) <= 1e-12


def test_merge_with_empty_is_identity():
    rng = np.random.default_rng(4)
    freqs = draw_frequencies(3, 16, "gaussian", 1.0, seed=4)
    a = compute_sketch(rng.standard_normal((3, 40)), freqs)
    empty = Sketch(np.zeros(16, complex), a.seed, a.radius_law, a.scale, 0, 3)
    merged = merge_sketches(a, empty)
    assert np.max(np.abs(merged.values - a.values)) <= 1e-15
    assert merged.sample_count == a.sample_count


def test_merge_halves_and_commutativity():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((3, 101))
    freqs = draw_frequencies(3, 16, "gaussian", 1.0, seed=6)
    a = compute_sketch(X[:, :40], freqs)
    b = compute_sketch(X[:, 40:], freqs)
    full = compute_sketch(X, freqs)
    ab, ba = merge_sketches(a, b), merge_sketches(b, a)
    assert np.max(np.abs(ab.values - full.values)) <= 1e-12
    assert np.max(np.abs(ab.values - ba.values)) <= 1e-15


def test_merge_rejects_mismatched_provenance():
    freqs = draw_frequencies(3, 16, "gaussian", 1.0, seed=6)
    other = draw_frequencies(3, 16, "gaussian", 1.0, seed=7)
    X = np.ones((3, 5))
    with pytest.raises(ValueError):
        merge_sketches(compute_sketch(X, freqs), compute_sketch(X, other))


def test_analytic_sketch_single_center_at_origin():
    freqs = FrequencyMatrix(np.array([[1.0, 0.0]]), np.array([1.0]), 0,
                            "gaussian", 1.0)
    y = analytic_sketch(np.zeros((2, 1)), np.array([1.0]), np.array([1.0]),
                        freqs)
    assert y[0] == pytest.approx(np.exp(-0.5), abs=1e-12)


def test_analytic_sketch_zero_variance_is_pure_phase():
    freqs = draw_frequencies(3, 20, "gaussian", 1.0, seed=1)
    y = analytic_sketch(np.array([[1.0], [2.0], [-0.5]]), np.array([1.0]),
                        np.array([0.0]), freqs)
    assert np.allclose(np.abs(y), 1.0)


def test_analytic_sketch_mirrored_pair_is_real_cosine():
    freqs = draw_frequencies(3, 20, "gaussian", 1.0, seed=2)
    c1 = np.array([0.5, -1.0, 2.0])
    C = np.stack([c1, -c1], axis=1)
    y = analytic_sketch(C, np.array([0.5, 0.5]), np.zeros(2), freqs)
    expected = np.cos(freqs.radii * (freqs.directions @ c1))
    assert np.max(np.abs(y.imag)) <= 1e-12
    assert np.allclose(y.real, expected)


def test_analytic_sketch_vanishes_for_huge_variance():
    freqs = draw_frequencies(3, 20, "gaussian", 1.0, seed=2)
    y = analytic_sketch(np.ones((3, 1)), np.array([1.0]), np.array([1e6]),
                        freqs)
    assert np.max(np.abs(y)) <= 1e-10


def test_analytic_sketch_validation():
    freqs = draw_frequencies(2, 4, "gaussian", 1.0, seed=0)
    C = np.ones((2, 2))
    with pytest.raises(ValueError):
        analytic_sketch(C, np.array([0.7, 0.7]), np.zeros(2), freqs)
    with pytest.raises(ValueError):
        analytic_sketch(C, np.array([0.5, 0.5]), np.array([-1.0, 0.0]), freqs)


def test_sketch_residual_zero_and_modulus():
    freqs = draw_frequencies(2, 8, "gaussian", 1.0, seed=0)
    C = np.array([[1.0], [0.5]])
    alpha, tau = np.array([1.0]), np.array([0.3])
    assert sketch_residual(analytic_sketch(C, alpha, tau, freqs),
                           C, alpha, tau, freqs) == 0.0
    # zero sketch vs pure-phase model: every term contributes |yhat|^2 = 1
    resid = sketch_residual(np.zeros(8, complex), C, alpha,
                            np.array([0.0]), freqs)
    assert resid == pytest.approx(8.0, abs=1e-12)


def test_residual_prefers_truth_over_corruption():
    k, n, t = 3, 5, 10_000
    m = 5 * k * n
    wins = 0
    for seed in range(100):
        train, _, means, _, _ = gen_gmm(SynthSpec(k, n, t, seed=seed))
        scale = estimate_scale(train, seed=seed)
        freqs = draw_frequencies(n, m, "gaussian", scale, seed)
        sk = compute_sketch(train, freqs)
        alpha, tau = np.full(k, 1.0 / k), np.ones(k)
        truth = sketch_residual(sk, means, alpha, tau, freqs)
        corrupted = means[::-1, :]  # coordinates permuted
        if truth <= sketch_residual(sk, corrupted, alpha, tau, freqs):
            wins += 1
    assert wins >= 95
