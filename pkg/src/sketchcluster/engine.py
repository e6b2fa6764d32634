"""Scalar-variance message-passing engine for centroid recovery.

One iteration alternates between the output denoiser (posterior moments of
the projected centroids given the sketch) and the input denoiser (posterior
moments of the centroid entries given pseudo-measurements), with
Onsager-corrected linear steps in between.  Variances are tracked as
length-K vectors.  Hyperparameters are refreshed by the EM module right
after the output-denoising step.

The raw iteration can diverge on structured frequency matrices, so the
centroid and correction iterates are damped; several random restarts are
run and the candidate with the smallest sketch residual wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import denoisers, em
from .sketch import FrequencyMatrix, Sketch, sketch_residual

QR_GROWTH_CAP = 1e3  # qr <= cap * (N/M) * qp, see step()


@dataclass
class GmmHyperparams:
    """Mixture weights, per-cluster variance proxies, and prior variance."""

    alpha: np.ndarray          # (K,) simplex
    tau: np.ndarray            # (K,) nonnegative
    nu: float = np.inf         # inf = flat centroid prior

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, float)
        self.tau = np.asarray(self.tau, float)
        if abs(self.alpha.sum() - 1.0) > 1e-12 or np.any(self.alpha < 0):
            raise ValueError("alpha must lie on the probability simplex")
        if np.any(self.tau < 0):
            raise ValueError("tau must be nonnegative")
        if not (self.nu > 0):
            raise ValueError("nu must be positive (np.inf for a flat prior)")

    @property
    def k(self) -> int:
        return self.alpha.shape[0]


@dataclass
class EngineConfig:
    max_iters: int = 200
    tol: float = 1e-6
    damping: float = 0.7
    restarts: int = 2
    em_enabled: bool = True
    em_period: int = 1
    seed: int = 0
    variance_floor: float = 1e-12
    learn_nu: bool = False
    trace: bool = False

    def __post_init__(self):
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if self.tol <= 0 or self.variance_floor <= 0:
            raise ValueError("tol and variance_floor must be positive")
        if self.max_iters < 0 or self.restarts < 1 or self.em_period < 1:
            raise ValueError("invalid iteration/restart configuration")


@dataclass
class EngineState:
    """All per-iteration quantities, exposed for tests and tracing."""

    chat: np.ndarray            # (N, K)
    qc: np.ndarray              # (K,)
    shat: np.ndarray            # (M, K)
    iteration: int = 0
    qp: np.ndarray | None = None
    phat: np.ndarray | None = None
    zhat: np.ndarray | None = None
    qz: np.ndarray | None = None
    qs: np.ndarray | None = None
    qr: np.ndarray | None = None
    rhat: np.ndarray | None = None


def default_init(y: Sketch, freqs: FrequencyMatrix, k: int, seed: int = 0):
    """Random starting point: centroid columns i.i.d. N(0, nu_hat I) with
    nu_hat the per-coordinate data energy implied by the frequency scale;
    uniform weights; variance proxies at half the data energy."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = freqs.dim
    nu_hat = freqs.scale ** 2 / n
    rng = np.random.default_rng(seed)
    chat = np.sqrt(nu_hat) * rng.standard_normal((n, k))
    hyper = GmmHyperparams(np.full(k, 1.0 / k), np.full(k, nu_hat / 2.0))
    state = EngineState(chat=chat, qc=np.full(k, nu_hat),
                        shat=np.zeros((y.m, k)))
    return state, hyper


def terminated(prev: np.ndarray, nxt: np.ndarray, tol: float) -> bool:
    """Relative Frobenius-change stopping rule with a zero-guard."""
    if prev.shape != nxt.shape:
        raise ValueError("shape mismatch")
    return bool(np.linalg.norm(nxt - prev) <= tol * (np.linalg.norm(prev) + 1e-30))


def step(state: EngineState, y: np.ndarray, freqs: FrequencyMatrix,
         hyper: GmmHyperparams, config: EngineConfig,
         z_denoiser=None, c_denoiser=None, em_memo: dict | None = None):
    """One full engine sweep.  Returns (new_state, new_hyper, counters).

    The denoiser hooks exist for testing; by default the batch output
    denoiser and the Gaussian input denoiser are used.
    """
    if z_denoiser is None:
        z_denoiser = denoisers.denoise_z_batch
    if c_denoiser is None:
        c_denoiser = denoisers.denoise_c
    wt = freqs.directions
    g = freqs.radii
    m, n = wt.shape
    k = hyper.k
    floor = config.variance_floor
    counters: dict = {}

    qp = np.maximum(np.mean(np.broadcast_to(state.qc, (n, k)), axis=0), floor)
    phat = wt @ state.chat - state.shat * qp[None, :]
    zhat, qz, zc = z_denoiser(y, phat, qp, hyper.alpha, hyper.tau, g)
    for key, val in zc.items():
        counters[key] = counters.get(key, 0) + val

    new_hyper = hyper
    if config.em_enabled and (state.iteration % config.em_period == 0):
        ws = em.EmWorkspace(zhat, np.maximum(qz, floor), y, g)
        alpha, tau, nu = em.update_hyperparams(
            hyper.alpha, hyper.tau, hyper.nu, ws,
            chat=state.chat, qc=state.qc, learn_nu=config.learn_nu,
            memo=em_memo)
        new_hyper = GmmHyperparams(alpha, tau, nu)

    qs = 1.0 / qp - np.mean(qz, axis=0) / (qp * qp)
    low = qs < floor
    counters["qs_clamp"] = counters.get("qs_clamp", 0) + int(low.sum())
    qs = np.maximum(qs, floor)
    shat_new = (zhat - phat) / qp[None, :]
    shat = config.damping * shat_new + (1.0 - config.damping) * state.shat
    # cap qr relative to qp: an (almost) information-free iteration, where
    # qs hit the floor, must not inject an unbounded pseudo-measurement step
    # no floor here beyond underflow: qr >= (N/M)*qp by construction, and
    # raising it artificially breaks the contractive qr/qp ratio
    qr = np.minimum((n / m) / qs, QR_GROWTH_CAP * (n / m) * qp)
    qr = np.maximum(qr, 1e-300)
    rhat = state.chat + (wt.T @ shat) * qr[None, :]
    chat_new, qc = c_denoiser(rhat, qr, new_hyper.nu)
    chat = config.damping * chat_new + (1.0 - config.damping) * state.chat
    qc = np.maximum(qc, floor)

    new_state = EngineState(chat=chat, qc=qc, shat=shat,
                            iteration=state.iteration + 1, qp=qp, phat=phat,
                            zhat=zhat, qz=qz, qs=qs, qr=qr, rhat=rhat)
    return new_state, new_hyper, counters


def _run_once(y: Sketch, freqs: FrequencyMatrix, config: EngineConfig,
              state: EngineState, hyper: GmmHyperparams):
    counters: dict = {}
    trace: list = []
    em_memo: dict = {}
    for _ in range(config.max_iters):
        prev = state.chat
        state, hyper, it_counters = step(state, y.values, freqs, hyper,
                                         config, em_memo=em_memo)
        for key, val in it_counters.items():
            counters[key] = counters.get(key, 0) + val
        if not (np.all(np.isfinite(state.chat)) and np.all(np.isfinite(state.shat))):
            raise FloatingPointError("non-finite engine state")
        if config.trace:
            trace.append({
                "iteration": state.iteration,
                "residual": sketch_residual(y, state.chat, hyper.alpha,
                                            hyper.tau, freqs),
                "change": float(np.linalg.norm(state.chat - prev)),
                "counters": dict(it_counters),
            })
        if terminated(prev, state.chat, config.tol):
            break
    return state, hyper, counters, trace


def run(y: Sketch, freqs: FrequencyMatrix, k: int, config: EngineConfig,
        init: tuple[EngineState, GmmHyperparams] | None = None):
    """Full solve: several restarts, best sketch residual wins.

    Returns (centroids, hyper, diagnostics).  A restart that produces a
    non-finite state is recorded and skipped; if every restart fails, the
    error propagates.
    """
    if y.m != freqs.m or y.dimension != freqs.dim:
        raise ValueError("sketch and frequency shapes do not match")
    best = None
    diagnostics = {"restarts": [], "counters": {}, "trace": []}
    for r in range(config.restarts):
        if init is not None and r == 0:
            state, hyper = init
        else:
            state, hyper = default_init(y, freqs, k, seed=config.seed + r)
        try:
            state, hyper, counters, trace = _run_once(y, freqs, config, state, hyper)
        except FloatingPointError:
            diagnostics["restarts"].append(
                {"restart": r, "status": "diverged"})
            continue
        residual = sketch_residual(y, state.chat, hyper.alpha, hyper.tau, freqs)
        diagnostics["restarts"].append(
            {"restart": r, "status": "ok", "residual": residual,
             "iterations": state.iteration})
        for key, val in counters.items():
            diagnostics["counters"][key] = diagnostics["counters"].get(key, 0) + val
        if best is None or residual < best[0]:
            best = (residual, state.chat, hyper, trace)
    if best is None:
        raise RuntimeError("all restarts diverged")
    diagnostics["residual"] = best[0]
    diagnostics["trace"] = best[3]
    return best[1], best[2], diagnostics
