"""k-means++ baseline, SSE, label matching, and classification scoring."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

LLOYD_TOL = 1e-9
LLOYD_MAX_ITERS = 300


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    """(T, K) squared distances from each column of X to each column of C."""
    x2 = np.sum(X * X, axis=0)[:, None]
    c2 = np.sum(C * C, axis=0)[None, :]
    d2 = x2 - 2.0 * (X.T @ C) + c2
    return np.maximum(d2, 0.0)


def sse(data: np.ndarray, centroids: np.ndarray, block: int = 8192) -> float:
    """Sum over samples of the squared distance to the nearest centroid."""
    X = np.asarray(data, float)
    C = np.asarray(centroids, float)
    if X.shape[0] != C.shape[0]:
        raise ValueError("dimension mismatch between data and centroids")
    total = 0.0
    for i in range(0, X.shape[1], block):
        total += float(np.sum(_sq_dists(X[:, i:i + block], C).min(axis=1)))
    return total


def assign(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the nearest centroid for each sample."""
    return _sq_dists(np.asarray(data, float), np.asarray(centroids, float)).argmin(axis=1)


def _seed_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each new seed is drawn with probability
    proportional to the squared distance to the nearest seed so far."""
    t = X.shape[1]
    centers = [X[:, rng.integers(t)]]
    d2 = np.sum((X - centers[0][:, None]) ** 2, axis=0)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(t)
        else:
            idx = rng.choice(t, p=d2 / total)
        centers.append(X[:, idx])
        d2 = np.minimum(d2, np.sum((X - centers[-1][:, None]) ** 2, axis=0))
    return np.stack(centers, axis=1)


def lloyd(X: np.ndarray, c0: np.ndarray, tol: float = LLOYD_TOL,
          max_iters: int = LLOYD_MAX_ITERS):
    """Lloyd iterations from a given start.  Returns (centroids, sse_history).

    An emptied cluster is re-seeded at the point farthest from its assigned
    centroid, which keeps K fixed and cannot increase the objective before
    the next update.
    """
    C = np.asarray(c0, float).copy()
    k = C.shape[1]
    history = []
    for _ in range(max_iters):
        d2 = _sq_dists(X, C)
        labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(X.shape[1]), labels].sum()))
        new_c = C.copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_c[:, j] = X[:, mask].mean(axis=1)
            else:
                far = d2[np.arange(X.shape[1]), labels].argmax()
                new_c[:, j] = X[:, far]
        move = np.linalg.norm(new_c - C)
        C = new_c
        if move <= tol:
            break
    return C, history


def kmeans_pp(data: np.ndarray, k: int, replicates: int = 1,
              subsample_rate: float = 1.0, seed: int = 0) -> np.ndarray:
    """k-means++ with optional training-set subsampling and replicates.

    Each replicate subsamples the columns at `subsample_rate`, seeds with
    D^2 weighting, and runs Lloyd to convergence; the replicate with the
    lowest SSE on its own subsample is returned.
    """
    X = np.asarray(data, float)
    if not (0.0 < subsample_rate <= 1.0):
        raise ValueError("subsample_rate must lie in (0, 1]")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    t = X.shape[1]
    t_sub = max(k, int(round(subsample_rate * t)))
    if k > t:
        raise ValueError("k exceeds the number of available samples")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(replicates):
        sub = X if t_sub >= t else X[:, rng.choice(t, size=t_sub, replace=False)]
        C0 = _seed_pp(sub, k, rng)
        C, _ = lloyd(sub, C0)
        score = sse(sub, C)
        if best is None or score < best[0]:
            best = (score, C)
    return best[1]


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment: perm[i] is the column matched to row i."""
    cost = np.asarray(cost, float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost must be a square matrix")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def classify_and_score(test: np.ndarray, true_labels: np.ndarray,
                       centroids: np.ndarray, true_means: np.ndarray):
    """Minimum-distance classification of the test set.

    Estimated clusters are matched to true clusters by maximizing the
    confusion-count agreement, so centroid column order does not matter.
    Returns (error_rate, bayes_rate) with the reference rate obtained by
    classifying with the true means.
    """
    X = np.asarray(test, float)
    labels = np.asarray(true_labels, int)
    if labels.shape[0] != X.shape[1]:
        raise ValueError("label count does not match the test set")
    k = true_means.shape[1]
    if centroids.shape[1] != k:
        raise ValueError("centroid count must match the number of clusters")
    est = assign(X, centroids)
    counts = np.zeros((k, k))
    np.add.at(counts, (est, labels), 1)
    perm = hungarian(-counts)  # est cluster i -> true cluster perm[i]
    error_rate = 1.0 - counts[np.arange(k), perm].sum() / labels.size
    bayes = assign(X, true_means)
    bayes_rate = float(np.mean(bayes != labels))
    return float(error_rate), bayes_rate
