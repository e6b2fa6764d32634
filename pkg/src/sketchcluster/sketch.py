"""Random-frequency sketches of datasets.

A sketch compresses an N x T dataset into a length-M complex vector: each
entry is the empirical average of exp(j * w_m^T x_t) over the samples, i.e.
a random sample of the empirical characteristic function.  The frequency
matrix W is kept in factored form (per-row radius g_m times a unit-norm
direction), which is what the recovery engine consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RADIUS_LAWS = ("gaussian", "adapted_radius")

# support and resolution of the inverse-CDF table for the adapted radius law
_ADAPTED_RMAX = 12.0
_ADAPTED_GRID = 8192


@dataclass
class FrequencyMatrix:
    """M x N frequency matrix, factored as radii[m] * directions[m, :].

    Regenerating from (seed, radius_law, scale, M, N) via draw_frequencies
    reproduces the matrix bit-exactly; sketch files only store provenance.
    """

    directions: np.ndarray  # (M, N), unit-norm rows
    radii: np.ndarray       # (M,), strictly positive
    seed: int
    radius_law: str
    scale: float

    def __post_init__(self):
        self.directions = np.asarray(self.directions, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        if self.directions.ndim != 2:
            raise ValueError("directions must be a 2-d array")
        if self.radii.shape != (self.directions.shape[0],):
            raise ValueError("radii length must match the number of rows")
        if self.radius_law not in RADIUS_LAWS:
            raise ValueError(f"unknown radius law {self.radius_law!r}")
        if not np.all(self.radii > 0):
            raise ValueError("all radii must be strictly positive")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("direction rows must have unit norm")

    @property
    def m(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """The full W (radius-scaled rows)."""
        return self.radii[:, None] * self.directions

    def provenance(self) -> tuple:
        return (self.seed, self.radius_law, self.scale, self.m, self.dim)


@dataclass
class Sketch:
    """Length-M complex sketch plus the provenance needed to regenerate W."""

    values: np.ndarray  # (M,) complex
    seed: int
    radius_law: str
    scale: float
    sample_count: int
    dimension: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 1:
            raise ValueError("sketch values must be a 1-d vector")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def frequency_ref(self) -> tuple:
        return (self.seed, self.radius_law, self.scale, self.m, self.dimension)

    def frequencies(self) -> FrequencyMatrix:
        """Regenerate the frequency matrix from the stored provenance."""
        return draw_frequencies(self.dimension, self.m, self.radius_law,
                                self.scale, self.seed)


def _adapted_radius_table():
    """Inverse-CDF table for the density p(r) ∝ r^2 sqrt(1 + r^2/4) e^{-r^2/2}."""
    r = np.linspace(0.0, _ADAPTED_RMAX, _ADAPTED_GRID)
    pdf = r * np.sqrt(r ** 2 + r ** 4 / 4.0) * np.exp(-r ** 2 / 2.0)
    cdf = np.concatenate(([0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2.0 * np.diff(r))))
    cdf /= cdf[-1]
    return cdf, r


_ADAPTED_CDF, _ADAPTED_R = _adapted_radius_table()


def draw_frequencies(dim: int, count: int, radius_law: str = "gaussian",
                     scale: float = 1.0, seed: int = 0) -> FrequencyMatrix:
    """Draw an M x N frequency matrix: uniform directions, i.i.d. radii.

    `gaussian` gives W with i.i.d. N(0, scale^-2) entries, i.e. radii that
    are scale^-1 times chi_N draws.  `adapted_radius` draws the radius from
    the heavier-tailed density tuned for mixture sketching, in units of
    sqrt(N)/scale so both laws put g at a comparable magnitude.
    """
    if dim < 1 or count < 1:
        raise ValueError("dim and count must be >= 1")
    if not scale > 0:
        raise ValueError("scale must be positive")
    if radius_law not in RADIUS_LAWS:
        raise ValueError(f"unknown radius law {radius_law!r}")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((count, dim))
    norms = np.linalg.norm(raw, axis=1)
    # a zero row has probability 0; regenerate defensively
    while np.any(norms == 0):
        bad = norms == 0
        raw[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(raw, axis=1)
    directions = raw / norms[:, None]
    if radius_law == "gaussian":
        radii = norms / scale
    else:
        u = rng.uniform(size=count)
        radii = np.interp(u, _ADAPTED_CDF, _ADAPTED_R) * np.sqrt(dim) / scale
        radii = np.maximum(radii, 1e-12)
    return FrequencyMatrix(directions, radii, int(seed), radius_law, float(scale))


def estimate_scale(sample: np.ndarray, max_points: int = 1000,
                   seed: int = 0) -> float:
    """RMS data-radius proxy: sqrt(N * mean per-coordinate variance).

    Uses a uniform subsample of at most `max_points` columns.  Raises on a
    zero-variance subsample ("degenerate scale"); callers can override the
    scale explicitly in that case.
    """
    X = np.asarray(sample, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("sample must be a nonempty N x T matrix")
    n, t = X.shape
    if t > max_points:
        rng = np.random.default_rng(seed)
        X = X[:, rng.choice(t, size=max_points, replace=False)]
    var = float(np.mean(np.var(X, axis=1)))
    if var <= 0:
        raise ValueError("degenerate scale: subsample has zero variance")
    return float(np.sqrt(var * n))


def _tree_sum(parts: list[np.ndarray]) -> np.ndarray:
    """Pairwise reduction over chunk index, fixed order for reproducibility."""
    while len(parts) > 1:
        parts = [parts[i] + parts[i + 1] if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    return parts[0]


def compute_sketch(data: np.ndarray, freqs: FrequencyMatrix,
                   chunk: int = 4096) -> Sketch:
    """Sketch of an N x T dataset: y_m = (1/T) sum_t exp(j w_m^T x_t).

    Columns are processed in chunks of `chunk` samples and combined by a
    pairwise tree over chunk index, so the result is independent of the
    chunk size to ~1e-12 per entry.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("data must be an N x T matrix")
    if X.shape[0] != freqs.dim:
        raise ValueError("dimension mismatch between data and frequencies")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite entries")
    n, t = X.shape
    if t < 1:
        raise ValueError("dataset must contain at least one sample")
    W = freqs.matrix
    parts = [np.exp(1j * (W @ X[:, i:i + chunk])).sum(axis=1)
             for i in range(0, t, chunk)]
    values = _tree_sum(parts) / t
    return Sketch(values, freqs.seed, freqs.radius_law, freqs.scale, t, n)


def merge_sketches(a: Sketch, b: Sketch) -> Sketch:
    """Combine sketches of disjoint data halves, weighting by sample count."""
    if a.frequency_ref() != b.frequency_ref():
        raise ValueError("sketches were built with different frequencies")
    ta, tb = a.sample_count, b.sample_count
    total = ta + tb
    if total == 0:
        raise ValueError("cannot merge two empty sketches")
    values = (ta * a.values + tb * b.values) / total
    return Sketch(values, a.seed, a.radius_law, a.scale, total, a.dimension)


def analytic_sketch(centroids: np.ndarray, alpha: np.ndarray, tau: np.ndarray,
                    freqs: FrequencyMatrix) -> np.ndarray:
    """Large-T limit of the sketch of a spherical Gaussian mixture.

    y_m = sum_k alpha_k exp(j g_m z_mk - g_m^2 tau_k / 2),
    z_mk = direction_m^T c_k.
    """
    C = np.asarray(centroids, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if C.ndim != 2 or C.shape[0] != freqs.dim:
        raise ValueError("centroids must be N x K with N matching frequencies")
    k = C.shape[1]
    if alpha.shape != (k,) or tau.shape != (k,):
        raise ValueError("alpha and tau must have length K")
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > 1e-9:
        raise ValueError("alpha must lie on the probability simplex")
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    g = freqs.radii[:, None]
    z = freqs.directions @ C  # (M, K)
    return np.exp(1j * g * z - g ** 2 * tau[None, :] / 2.0) @ alpha


def sketch_residual(y, centroids: np.ndarray, alpha: np.ndarray,
                    tau: np.ndarray, freqs: FrequencyMatrix) -> float:
    """Squared sketch misfit sum_m |y_m - yhat_m|^2; used for restart scoring."""
    yv = y.values if isinstance(y, Sketch) else np.asarray(y, dtype=complex)
    yhat = analytic_sketch(centroids, alpha, tau, freqs)
    if yv.shape != yhat.shape:
        raise ValueError("sketch length does not match frequency count")
    return float(np.sum(np.abs(yv - yhat) ** 2))
