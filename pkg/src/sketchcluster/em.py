"""Hyperparameter learning for the mixture weights and variance proxies.

The objective is the expected negative squared sketch misfit, where the
expectation is over z ~ N(zhat, diag(qz)) from the current engine iterate.
Because every term is a Gaussian characteristic-function evaluation, both
the objective and its gradient have closed forms:

    J(alpha, tau) = -sum_m [ |y_m - sum_k alpha_k A_mk|^2
                             + sum_k alpha_k^2 D_mk ]
    A_mk = exp(j g_m zhat_mk - g_m^2 (qz_mk + tau_k)/2)
    D_mk = exp(-g_m^2 tau_k) (1 - exp(-g_m^2 qz_mk))

(the diagonal D term is the gap between E|e^{j g z}|^2 = 1 and |E e^{j g z}|^2).
J is maximized by projected-gradient ascent: alpha on the probability
simplex, tau on the nonnegative orthant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_STEPS = 50
IMPROVE_TOL = 1e-9
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40


@dataclass
class EmWorkspace:
    """Per-iteration quantities the objective is conditioned on."""

    zhat: np.ndarray  # (M, K)
    qz: np.ndarray    # (M, K) positive
    y: np.ndarray     # (M,) complex
    g: np.ndarray     # (M,) positive

    def __post_init__(self):
        self.zhat = np.asarray(self.zhat, float)
        self.qz = np.asarray(self.qz, float)
        self.y = np.asarray(self.y, complex)
        self.g = np.asarray(self.g, float)
        if self.qz.shape != self.zhat.shape:
            raise ValueError("zhat and qz shapes differ")
        if np.any(self.qz <= 0):
            raise ValueError("qz must be strictly positive")


def _terms(alpha, tau, ws: EmWorkspace):
    g2 = (ws.g * ws.g)[:, None]
    a = np.exp(1j * ws.g[:, None] * ws.zhat - g2 * (ws.qz + tau[None, :]) / 2.0)
    d = np.exp(-g2 * tau[None, :]) * (1.0 - np.exp(-g2 * ws.qz))
    e = ws.y - a @ alpha
    return a, d, e, g2


def em_objective(alpha: np.ndarray, tau: np.ndarray, ws: EmWorkspace) -> float:
    alpha = np.asarray(alpha, float)
    tau = np.asarray(tau, float)
    if np.any(alpha < -1e-12) or abs(alpha.sum() - 1.0) > 1e-9:
        raise ValueError("alpha must lie on the probability simplex")
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    a, d, e, _ = _terms(alpha, tau, ws)
    return float(-(np.sum(np.abs(e) ** 2) + np.sum(alpha ** 2 * d.sum(axis=0))))


def em_gradient(alpha: np.ndarray, tau: np.ndarray, ws: EmWorkspace):
    """Analytic gradient of em_objective in (alpha, tau)."""
    alpha = np.asarray(alpha, float)
    tau = np.asarray(tau, float)
    a, d, e, g2 = _terms(alpha, tau, ws)
    re_ea = np.real(np.conj(e)[:, None] * a)  # (M, K)
    grad_alpha = 2.0 * re_ea.sum(axis=0) - 2.0 * alpha * d.sum(axis=0)
    grad_tau = (g2 * (alpha[None, :] ** 2 * d - alpha[None, :] * re_ea)).sum(axis=0)
    return grad_alpha, grad_tau


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based)."""
    v = np.asarray(v, float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, v.size + 1) > 0)[0][-1]
    lam = (1.0 - css[rho]) / (rho + 1)
    return np.maximum(v + lam, 0.0)


def update_hyperparams(alpha: np.ndarray, tau: np.ndarray, nu: float,
                       ws: EmWorkspace, chat: np.ndarray | None = None,
                       qc: np.ndarray | None = None, learn_nu: bool = False,
                       memo: dict | None = None):
    """One round of projected-gradient ascent on J with backtracking.

    Accepted steps are monotone in J by construction; if no ascent step is
    found the inputs come back unchanged.  The prior variance update (when
    enabled) is the mean posterior second moment of the centroid entries.

    `memo` (optional) carries the last accepted step size between calls so
    repeated invocations skip most of the backtracking.
    """
    alpha = project_simplex(np.asarray(alpha, float))
    tau = np.maximum(np.asarray(tau, float), 0.0)
    j = em_objective(alpha, tau, ws)
    step0 = 1.0 if memo is None else min(memo.get("step", 1.0) * 4.0, 1.0)
    for _ in range(MAX_STEPS):
        ga, gt = em_gradient(alpha, tau, ws)
        step = step0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            alpha_new = project_simplex(alpha + step * ga)
            tau_new = np.maximum(tau + step * gt, 0.0)
            moved = (np.dot(ga, alpha_new - alpha)
                     + np.dot(gt, tau_new - tau))
            j_new = em_objective(alpha_new, tau_new, ws)
            if j_new >= j + ARMIJO_C * moved and j_new > j:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        if memo is not None:
            memo["step"] = step
        step0 = min(step * 4.0, 1.0)
        improved = j_new - j
        alpha, tau, j = alpha_new, tau_new, j_new
        if improved < IMPROVE_TOL:
            break
    if learn_nu:
        if chat is None or qc is None:
            raise ValueError("learning nu requires chat and qc")
        nu = float(np.mean(chat ** 2 + qc[None, :]))
    return alpha, tau, nu
