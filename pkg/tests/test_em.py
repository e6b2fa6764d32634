import numpy as np
import pytest

import oracles
from sketchcluster.em import (EmWorkspace, em_gradient, em_objective,
                              project_simplex, update_hyperparams)


def reference_objective(alpha, tau, ws):
    """Closed-form objective recomputed from first principles in the test."""
    total = 0.0
    for m in range(ws.y.size):
        g = ws.g[m]
        a = np.exp(1j * g * ws.zhat[m] - g * g * (ws.qz[m] + tau) / 2.0)
        d = np.exp(-g * g * tau) * (1.0 - np.exp(-g * g * ws.qz[m]))
        total += abs(ws.y[m] - np.sum(alpha * a)) ** 2 + np.sum(alpha ** 2 * d)
    return -total


def random_workspace(rng, m=20, k=3, qz_scale=0.3):
    zhat = rng.normal(0, 1, (m, k))
    qz = rng.uniform(0.01, qz_scale, (m, k))
    y = rng.uniform(-1, 1, m) + 1j * rng.uniform(-1, 1, m)
    g = rng.uniform(0.5, 2.0, m)
    return EmWorkspace(zhat, qz, y, g)


def test_objective_single_component_small_qz():
    rng = np.random.default_rng(0)
    m = 10
    zhat = rng.normal(0, 1, (m, 1))
    g = rng.uniform(0.5, 2.0, m)
    y = rng.uniform(-1, 1, m) + 1j * rng.uniform(-1, 1, m)
    tau = np.array([0.4])
    ws = EmWorkspace(zhat, np.full((m, 1), 1e-30), y, g)
    direct = -np.sum(np.abs(y - np.exp(1j * g * zhat[:, 0]
                                       - g * g * tau[0] / 2.0)) ** 2)
    assert em_objective(np.array([1.0]), tau, ws) == pytest.approx(direct,
                                                                   abs=1e-12)


def test_objective_perfect_fit_is_global_maximum():
    rng = np.random.default_rng(1)
    m, k = 15, 2
    zhat = rng.normal(0, 1, (m, k))
    g = rng.uniform(0.5, 2.0, m)
    alpha = np.array([0.6, 0.4])
    tau = np.array([0.2, 0.5])
    a = np.exp(1j * g[:, None] * zhat - (g * g)[:, None] * tau[None, :] / 2.0)
    ws = EmWorkspace(zhat, np.full((m, k), 1e-30), a @ alpha, g)
    j_star = em_objective(alpha, tau, ws)
    assert j_star == pytest.approx(0.0, abs=1e-12)
    rng2 = np.random.default_rng(2)
    for _ in range(10):
        other = rng2.dirichlet(np.ones(k))
        assert em_objective(other, rng2.uniform(0, 1, k), ws) <= j_star + 1e-12


def test_objective_matches_monte_carlo():
    rng = np.random.default_rng(3)
    ws = random_workspace(rng)
    alpha = rng.dirichlet(np.ones(3))
    tau = rng.uniform(0, 0.5, 3)
    draws = 1_000_000
    # draw in blocks to bound memory
    block, total, sq_total, count = 100_000, 0.0, 0.0, 0
    while count < draws:
        b = min(block, draws - count)
        z = rng.normal(ws.zhat[None], np.sqrt(ws.qz)[None], (b, *ws.zhat.shape))
        model = np.sum(alpha[None, None]
                       * np.exp(1j * ws.g[None, :, None] * z
                                - (ws.g ** 2)[None, :, None] * tau[None, None] / 2.0),
                       axis=2)
        vals = -np.sum(np.abs(ws.y[None, :] - model) ** 2, axis=1)
        total += vals.sum()
        sq_total += np.sum(vals ** 2)
        count += b
    mc_mean = total / count
    mc_se = np.sqrt(max(sq_total / count - mc_mean ** 2, 0.0) / count)
    assert abs(em_objective(alpha, tau, ws) - mc_mean) <= 4.0 * mc_se


def test_objective_validates_constraints():
    ws = random_workspace(np.random.default_rng(4))
    with pytest.raises(ValueError):
        em_objective(np.array([0.7, 0.7, 0.0]), np.zeros(3), ws)
    with pytest.raises(ValueError):
        em_objective(np.full(3, 1 / 3), np.array([0.1, -0.1, 0.0]), ws)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(20):
        ws = random_workspace(rng)
        alpha = rng.dirichlet(np.ones(3))
        tau = rng.uniform(0.05, 0.5, 3)
        ga, gt = em_gradient(alpha, tau, ws)
        for i in range(3):
            for vec, grad in ((alpha, ga), (tau, gt)):
                hi, lo = vec.copy(), vec.copy()
                hi[i] += h
                lo[i] -= h
                if vec is alpha:
                    fd = (reference_objective(hi, tau, ws)
                          - reference_objective(lo, tau, ws)) / (2 * h)
                else:
                    fd = (reference_objective(alpha, hi, ws)
                          - reference_objective(alpha, lo, ws)) / (2 * h)
                assert abs(fd - grad[i]) <= 1e-5 * max(1.0, abs(grad[i]))


def test_gradient_vanishes_for_huge_tau():
    rng = np.random.default_rng(6)
    ws = random_workspace(rng)
    alpha = np.array([0.5, 0.3, 0.2])
    tau = np.array([0.2, 0.3, 1e4])
    _, gt = em_gradient(alpha, tau, ws)
    assert abs(gt[2]) < 1e-12


def test_objective_permutation_invariance():
    rng = np.random.default_rng(7)
    ws = random_workspace(rng)
    alpha = rng.dirichlet(np.ones(3))
    tau = rng.uniform(0, 0.5, 3)
    perm = np.array([2, 0, 1])
    ws_p = EmWorkspace(ws.zhat[:, perm], ws.qz[:, perm], ws.y, ws.g)
    assert em_objective(alpha, tau, ws) == pytest.approx(
        em_objective(alpha[perm], tau[perm], ws_p), abs=1e-12)


def test_project_simplex_examples():
    assert np.allclose(project_simplex(np.array([0.6, 0.6])), [0.5, 0.5])
    feasible = np.array([0.2, 0.5, 0.3])
    assert np.allclose(project_simplex(feasible), feasible, atol=1e-15)
    v = np.array([1.2, -0.1, 0.0])
    assert np.allclose(project_simplex(v), oracles.simplex_projection_kkt(v),
                       atol=1e-12)


def test_project_simplex_matches_kkt_oracle():
    rng = np.random.default_rng(8)
    for k in (2, 3, 4):
        for _ in range(50):
            v = rng.normal(0, 2, k)
            p = project_simplex(v)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(p >= 0)
            assert np.allclose(p, oracles.simplex_projection_kkt(v),
                               atol=1e-10)


def test_update_is_monotone_and_feasible():
    rng = np.random.default_rng(9)
    for _ in range(10):
        ws = random_workspace(rng)
        alpha = rng.dirichlet(np.ones(3))
        tau = rng.uniform(0, 0.5, 3)
        j0 = em_objective(alpha, tau, ws)
        alpha2, tau2, nu2 = update_hyperparams(alpha, tau, np.inf, ws)
        assert em_objective(alpha2, tau2, ws) >= j0 - 1e-12
        assert alpha2.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(alpha2 >= 0) and np.all(tau2 >= 0)
        assert nu2 == np.inf


def test_update_chain_is_monotone():
    rng = np.random.default_rng(10)
    ws = random_workspace(rng)
    alpha, tau = rng.dirichlet(np.ones(3)), rng.uniform(0, 0.5, 3)
    values = [em_objective(alpha, tau, ws)]
    memo = {}
    for _ in range(5):
        alpha, tau, _ = update_hyperparams(alpha, tau, np.inf, ws, memo=memo)
        values.append(em_objective(alpha, tau, ws))
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_update_stationary_at_planted_optimum():
    rng = np.random.default_rng(11)
    m, k = 30, 3
    zhat = rng.normal(0, 1, (m, k))
    g = rng.uniform(0.5, 2.0, m)
    alpha = np.array([0.5, 0.3, 0.2])
    tau = np.array([0.2, 0.4, 0.6])
    a = np.exp(1j * g[:, None] * zhat - (g * g)[:, None] * tau[None, :] / 2.0)
    ws = EmWorkspace(zhat, np.full((m, k), 1e-30), a @ alpha, g)
    alpha2, tau2, _ = update_hyperparams(alpha, tau, np.inf, ws)
    assert np.max(np.abs(alpha2 - alpha)) < 1e-6
    assert np.max(np.abs(tau2 - tau)) < 1e-6


def test_nu_learning_uses_posterior_second_moment():
    rng = np.random.default_rng(12)
    ws = random_workspace(rng)
    chat = rng.normal(0, 1, (5, 3))
    qc = rng.uniform(0.1, 0.5, 3)
    _, _, nu = update_hyperparams(rng.dirichlet(np.ones(3)),
                                  rng.uniform(0, 0.5, 3), 1.0, ws,
                                  chat=chat, qc=qc, learn_nu=True)
    assert nu == pytest.approx(np.mean(chat ** 2 + qc[None, :]), abs=1e-12)


def test_workspace_validation():
    with pytest.raises(ValueError):
        EmWorkspace(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(3, complex),
                    np.ones(3))
    with pytest.raises(ValueError):
        EmWorkspace(np.zeros((3, 2)), np.ones((2, 3)), np.zeros(3, complex),
                    np.ones(3))
