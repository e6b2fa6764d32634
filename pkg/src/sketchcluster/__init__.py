"""Sketched clustering: compress a dataset into a characteristic-function
sketch, then recover cluster centroids from the sketch alone."""

from .baselines import classify_and_score, hungarian, kmeans_pp, sse
from .engine import EngineConfig, GmmHyperparams, default_init, run
from .sketch import (FrequencyMatrix, Sketch, analytic_sketch, compute_sketch,
                     draw_frequencies, estimate_scale, merge_sketches,
                     sketch_residual)

__all__ = [
    "FrequencyMatrix", "Sketch", "analytic_sketch", "compute_sketch",
    "draw_frequencies", "estimate_scale", "merge_sketches", "sketch_residual",
    "EngineConfig", "GmmHyperparams", "default_init", "run",
    "classify_and_score", "hungarian", "kmeans_pp", "sse",
]
