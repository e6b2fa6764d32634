"""Posterior-moment denoisers used by the message-passing engine.

The output denoiser computes, for each sketch entry, the posterior mean and
variance of the projected centroids z_mk given the measurement y_m and a
Gaussian pseudo-prior.  The chain is: Gaussian approximation of the
interference from the other mixture components, reparameterization of the
per-component likelihood as a generalized von Mises density on the phase
theta = g*z, MAP search by bracketed bisection, and a Laplace approximation
for the moments.

The input denoiser is a plain Gaussian product (centroid prior times the
pseudo-measurement likelihood).

Scalar entry points mirror the batch ones; the engine calls the batch path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_REG = 1e-10        # ridge added to the 2x2 interference covariance
BETA_UNDERFLOW = 1e-300  # below this, a component is invisible in y_m
QZ_MIN = 1e-12           # variance floor after the Laplace step
QZ_PRIOR_FACTOR = 10.0   # upper clamp: qz <= factor * prior variance
GRID_POINTS = 65         # 64 intervals for the derivative sign scan
BISECT_STEPS = 60


@dataclass
class InterferenceMoments:
    """Mean/covariance of the interference from components l != k, plus beta_k."""

    mu: np.ndarray     # (2,)
    sigma: np.ndarray  # (2, 2) symmetric PSD
    beta: float


@dataclass
class GvmParams:
    """Generalized von Mises parameters of the per-component likelihood.

    log p(y|theta) = kappa1*cos(theta - zeta1)
                   + kappa2*cos(2*(theta - zeta2)) + const.
    """

    kappa1: float
    zeta1: float
    kappa2: float
    zeta2: float
    standardized: dict


def interference_moments(k: int, phat: np.ndarray, qp: np.ndarray,
                         alpha: np.ndarray, tau: np.ndarray,
                         g: float) -> InterferenceMoments:
    """Gaussian moments of sum_{l != k} beta_l (cos theta_l, sin theta_l).

    theta_l ~ N(g*phat_l, g^2*qp_l) independent across l; the moments are
    exact for this surrogate (cos/sin moments of a Gaussian phase).
    """
    phat = np.asarray(phat, float)
    qp = np.asarray(qp, float)
    alpha = np.asarray(alpha, float)
    tau = np.asarray(tau, float)
    kk = phat.shape[0]
    if not (0 <= k < kk):
        raise ValueError("component index out of range")
    if np.any(qp <= 0):
        raise ValueError("pseudo-prior variances must be positive")
    g2 = g * g
    beta = alpha * np.exp(-g2 * tau / 2.0)
    amp = beta * np.exp(-g2 * qp / 2.0)       # E{beta_l cos/sin theta_l} scale
    e = np.exp(-g2 * qp)
    c1, s1 = np.cos(g * phat), np.sin(g * phat)
    c2, s2 = np.cos(2 * g * phat), np.sin(2 * g * phat)
    t = 0.5 * beta ** 2 * (1.0 - e)
    others = np.arange(kk) != k
    mu = np.array([np.sum(amp[others] * c1[others]),
                   np.sum(amp[others] * s1[others])])
    s00 = np.sum(t[others] * (1.0 - e[others] * c2[others]))
    s11 = np.sum(t[others] * (1.0 + e[others] * c2[others]))
    s01 = -np.sum(t[others] * e[others] * s2[others])
    sigma = np.array([[s00, s01], [s01, s11]])
    return InterferenceMoments(mu, sigma, float(beta[k]))


def gvm_params(y: complex, im: InterferenceMoments) -> GvmParams:
    """Reparameterize the constrained-Gaussian likelihood as a GvM density.

    Works with the ridge-regularized precision of the raw interference
    covariance, which is algebraically identical to the standardized
    (nu, sigma, rho) route but immune to overflow when beta is tiny.
    """
    beta = im.beta
    if beta < BETA_UNDERFLOW:
        raise ValueError("negligible component")
    yv = np.array([y.real, y.imag]) - im.mu
    s00 = im.sigma[0, 0] + SIGMA_REG
    s11 = im.sigma[1, 1] + SIGMA_REG
    s01 = im.sigma[0, 1]
    det = s00 * s11 - s01 * s01
    p00, p11, p01 = s11 / det, s00 / det, -s01 / det
    kcos = beta * (p00 * yv[0] + p01 * yv[1])
    ksin = beta * (p01 * yv[0] + p11 * yv[1])
    k2cos = -0.25 * beta * beta * (p00 - p11)
    k2sin = -0.5 * beta * beta * p01
    kappa1 = float(np.hypot(kcos, ksin))
    zeta1 = float(np.arctan2(ksin, kcos) % (2 * np.pi))
    kappa2 = float(np.hypot(k2cos, k2sin))
    zeta2 = float((np.arctan2(k2sin, k2cos) / 2.0) % (2 * np.pi))
    sig, sigb = np.sqrt(s00) / beta, np.sqrt(s11) / beta
    rho = s01 / np.sqrt(s00 * s11)
    standardized = {"nu": yv[0] / beta, "nu_bar": yv[1] / beta,
                    "sigma": sig, "sigma_bar": sigb, "rho": float(rho)}
    return GvmParams(kappa1, zeta1, kappa2, zeta2, standardized)


def log_posterior_theta(theta, gvm: GvmParams, prior_mean: float,
                        prior_var: float):
    """Unnormalized log posterior on the phase (GvM likelihood x Gaussian)."""
    return (gvm.kappa1 * np.cos(theta - gvm.zeta1)
            + gvm.kappa2 * np.cos(2.0 * (theta - gvm.zeta2))
            - (theta - prior_mean) ** 2 / (2.0 * prior_var))


def _dlog_posterior(theta, gvm: GvmParams, prior_mean, prior_var):
    return (-gvm.kappa1 * np.sin(theta - gvm.zeta1)
            - 2.0 * gvm.kappa2 * np.sin(2.0 * (theta - gvm.zeta2))
            - (theta - prior_mean) / prior_var)


def theta_map(gvm: GvmParams, prior_mean: float, prior_var: float,
              counters: dict | None = None) -> float:
    """MAP phase: scan the log-posterior derivative on a 64-interval grid
    over prior_mean +/- (4*sqrt(prior_var) + pi), bisect every sign change,
    and keep the stationary point with the largest posterior.

    Falls back to prior_mean (counted) if no sign change is bracketed.
    """
    if prior_var <= 0:
        raise ValueError("prior_var must be positive")
    if gvm.kappa1 == 0.0 and gvm.kappa2 == 0.0:
        return float(prior_mean)  # pure Gaussian: the mode is the prior mean
    half = 4.0 * np.sqrt(prior_var) + np.pi
    grid = np.linspace(prior_mean - half, prior_mean + half, GRID_POINTS)
    d = _dlog_posterior(grid, gvm, prior_mean, prior_var)
    sbit = np.signbit(d)
    change = np.nonzero(sbit[:-1] != sbit[1:])[0]
    if change.size == 0:
        if counters is not None:
            counters["theta_fallback"] = counters.get("theta_fallback", 0) + 1
        return float(prior_mean)
    a, b, da = grid[change], grid[change + 1], d[change]
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (a + b)
        dm = _dlog_posterior(mid, gvm, prior_mean, prior_var)
        same = np.signbit(dm) == np.signbit(da)
        a = np.where(same, mid, a)
        da = np.where(same, dm, da)
        b = np.where(same, b, mid)
    roots = 0.5 * (a + b)
    vals = log_posterior_theta(roots, gvm, prior_mean, prior_var)
    return float(roots[np.argmax(vals)])


def laplace_moments(gvm: GvmParams, prior_mean: float, prior_var: float,
                    g: float, counters: dict | None = None):
    """Laplace moments of z = theta/g under the phase posterior.

    Returns (zhat, qz) with qz clamped to [QZ_MIN, 10x the prior variance
    of z]; non-negative curvature at the MAP also hits the floor (counted).
    """
    theta = theta_map(gvm, prior_mean, prior_var, counters)
    curv = (gvm.kappa1 * np.cos(theta - gvm.zeta1)
            + 4.0 * gvm.kappa2 * np.cos(2.0 * (theta - gvm.zeta2))
            + 1.0 / prior_var)
    g2 = g * g
    if curv > 0:
        qz = 1.0 / (curv * g2)
    else:
        qz = QZ_MIN
        if counters is not None:
            counters["curvature_clamp"] = counters.get("curvature_clamp", 0) + 1
    qz = float(np.clip(qz, QZ_MIN, QZ_PRIOR_FACTOR * prior_var / g2))
    return float(theta / g), qz


PHASE_REL_VAR = 1e-6  # K=1 posterior variance, relative to the prior


def _phase_projection(y: complex, pm: float, pv: float, g: float):
    """Single-component limit: the likelihood pins the phase of y modulo 2*pi;
    pick the branch nearest the prior mean and floor the variance.

    The floor is relative to the prior variance: an absolute floor can meet
    a collapsing pseudo-prior head-on and destabilize the engine's variance
    recursion.
    """
    if y == 0:
        return pm / g, pv / (g * g)
    phi = float(np.angle(y))
    theta = phi + 2.0 * np.pi * np.round((pm - phi) / (2.0 * np.pi))
    return theta / g, PHASE_REL_VAR * pv / (g * g)


def denoise_z(y: complex, phat: np.ndarray, qp: np.ndarray, alpha: np.ndarray,
              tau: np.ndarray, g: float, counters: dict | None = None):
    """Posterior mean/variance of z_m for one sketch entry.

    Applies interference_moments -> gvm_params -> theta_map ->
    laplace_moments independently for each component; components whose
    weight underflows keep their prior moments.
    """
    phat = np.asarray(phat, float)
    qp = np.asarray(qp, float)
    kk = phat.shape[0]
    zhat = np.empty(kk)
    qz = np.empty(kk)
    g2 = g * g
    for k in range(kk):
        pm, pv = g * phat[k], g2 * qp[k]
        beta_k = alpha[k] * np.exp(-g2 * tau[k] / 2.0)
        if beta_k < BETA_UNDERFLOW:
            zhat[k], qz[k] = phat[k], qp[k]
            continue
        if kk == 1:
            zhat[k], qz[k] = _phase_projection(y, pm, pv, g)
            continue
        im = interference_moments(k, phat, qp, alpha, tau, g)
        gvm = gvm_params(y, im)
        zhat[k], qz[k] = laplace_moments(gvm, pm, pv, g, counters)
    return zhat, qz


def denoise_c(rhat: np.ndarray, qr: np.ndarray, nu: float):
    """Gaussian input denoiser: fuse the N(0, nu) prior with the
    pseudo-measurements rhat ~ N(c, diag(qr)).  nu = inf is the flat prior."""
    rhat = np.asarray(rhat, float)
    qr = np.asarray(qr, float)
    if np.any(qr <= 0):
        raise ValueError("qr must be strictly positive")
    if np.isinf(nu):
        return rhat.copy(), qr.copy()
    if nu <= 0:
        raise ValueError("nu must be positive")
    qc = 1.0 / (1.0 / nu + 1.0 / qr)
    return qc / qr * rhat, qc


def _theta_map_batch(kap, zeta, kapb, zeta2b, pm, pv, counters):
    """Vectorized theta_map over flattened (m, k) pairs.

    Same grid/bisection procedure as the scalar version; zeta2b is the
    doubled second-harmonic angle 2*zeta2.
    """
    p = kap.shape[0]

    def dlog(theta, idx):
        return (-kap[idx] * np.sin(theta - zeta[idx])
                - 2.0 * kapb[idx] * np.sin(2.0 * theta - zeta2b[idx])
                - (theta - pm[idx]) / pv[idx])

    def logpost(theta, idx):
        return (kap[idx] * np.cos(theta - zeta[idx])
                + kapb[idx] * np.cos(2.0 * theta - zeta2b[idx])
                - (theta - pm[idx]) ** 2 / (2.0 * pv[idx]))

    half = 4.0 * np.sqrt(pv) + np.pi
    steps = np.linspace(0.0, 1.0, GRID_POINTS)
    grid = (pm - half)[:, None] + (2.0 * half)[:, None] * steps[None, :]
    idx_all = np.arange(p)[:, None]
    d = dlog(grid, idx_all)
    sbit = np.signbit(d)
    rows, cols = np.nonzero(sbit[:, :-1] != sbit[:, 1:])
    theta_best = pm.copy()
    if rows.size:
        a = grid[rows, cols]
        b = grid[rows, cols + 1]
        da = d[rows, cols]
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (a + b)
            dm = dlog(mid, rows)
            same = np.signbit(dm) == np.signbit(da)
            a = np.where(same, mid, a)
            da = np.where(same, dm, da)
            b = np.where(same, b, mid)
        roots = 0.5 * (a + b)
        vals = logpost(roots, rows)
        order = np.lexsort((vals, rows))
        rows_sorted = rows[order]
        uniq, first = np.unique(rows_sorted, return_index=True)
        counts = np.diff(np.append(first, rows_sorted.size))
        theta_best[uniq] = roots[order[first + counts - 1]]
        n_fallback = p - uniq.size
    else:
        n_fallback = p
    counters["theta_fallback"] = counters.get("theta_fallback", 0) + n_fallback
    return theta_best


def denoise_z_batch(y: np.ndarray, phat: np.ndarray, qp: np.ndarray,
                    alpha: np.ndarray, tau: np.ndarray, g: np.ndarray):
    """Posterior z moments for all M sketch entries at once.

    Returns (zhat, qz, counters) with zhat, qz of shape (M, K).  Matches
    a loop of scalar denoise_z calls up to floating-point ordering.
    """
    y = np.asarray(y, complex)
    phat = np.asarray(phat, float)
    g = np.asarray(g, float)
    alpha = np.asarray(alpha, float)
    tau = np.asarray(tau, float)
    qp = np.asarray(qp, float)
    m, kk = phat.shape
    counters: dict = {}
    g2 = (g * g)[:, None]
    pm = g[:, None] * phat
    pv = g2 * qp[None, :]
    beta = alpha[None, :] * np.exp(-g2 * tau[None, :] / 2.0)
    under = beta < BETA_UNDERFLOW

    if kk == 1:
        phi = np.angle(y)
        theta = phi + 2.0 * np.pi * np.round((pm[:, 0] - phi) / (2.0 * np.pi))
        zhat = (theta / g)[:, None]
        qz = PHASE_REL_VAR * np.broadcast_to(qp[None, :], (m, kk)).copy()
        zero = y == 0
        zhat[zero, 0] = phat[zero, 0]
        qz[zero, 0] = qp[0]
        zhat[under] = phat[under]
        qz[under] = np.broadcast_to(qp[None, :], (m, kk))[under]
        return zhat, qz, counters

    e = np.exp(-g2 * qp[None, :])
    amp = beta * np.exp(-g2 * qp[None, :] / 2.0)
    c1, s1 = np.cos(pm), np.sin(pm)
    c2, s2 = np.cos(2.0 * pm), np.sin(2.0 * pm)
    t = 0.5 * beta ** 2 * (1.0 - e)
    # leave-one-out sums across components
    mu_x = (amp * c1).sum(axis=1, keepdims=True) - amp * c1
    mu_y = (amp * s1).sum(axis=1, keepdims=True) - amp * s1
    t00 = t * (1.0 - e * c2)
    t11 = t * (1.0 + e * c2)
    t01 = -t * e * s2
    s00 = t00.sum(axis=1, keepdims=True) - t00 + SIGMA_REG
    s11 = t11.sum(axis=1, keepdims=True) - t11 + SIGMA_REG
    s01 = t01.sum(axis=1, keepdims=True) - t01
    det = s00 * s11 - s01 * s01
    p00, p11, p01 = s11 / det, s00 / det, -s01 / det
    dx = y.real[:, None] - mu_x
    dy = y.imag[:, None] - mu_y
    kcos = beta * (p00 * dx + p01 * dy)
    ksin = beta * (p01 * dx + p11 * dy)
    kap = np.hypot(kcos, ksin)
    zeta = np.arctan2(ksin, kcos)
    k2cos = -0.25 * beta ** 2 * (p00 - p11)
    k2sin = -0.5 * beta ** 2 * p01
    kapb = np.hypot(k2cos, k2sin)
    zeta2b = np.arctan2(k2sin, k2cos)

    theta = _theta_map_batch(kap.ravel(), zeta.ravel(), kapb.ravel(),
                             zeta2b.ravel(), pm.ravel(), pv.ravel(),
                             counters).reshape(m, kk)
    curv = (kap * np.cos(theta - zeta)
            + 4.0 * kapb * np.cos(2.0 * theta - zeta2b) + 1.0 / pv)
    bad = curv <= 0
    counters["curvature_clamp"] = counters.get("curvature_clamp", 0) + int(bad.sum())
    qz = np.where(bad, QZ_MIN, 1.0 / np.where(bad, 1.0, curv) / g2)
    qz = np.clip(qz, QZ_MIN, QZ_PRIOR_FACTOR * qp[None, :])
    zhat = theta / g[:, None]
    zhat[under] = phat[under]
    qz[under] = np.broadcast_to(qp[None, :], (m, kk))[under]
    return zhat, qz, counters
