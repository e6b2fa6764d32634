"""Synthetic mixture generation and dataset/sketch/result file formats."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from .sketch import RADIUS_LAWS, Sketch

DATASET_MAGIC = b"SKCLDATA"
DATASET_VERSION = 1
SKETCH_MAGIC = "SKCL-SK"
SKETCH_VERSION = 1

REPORT_FIELDS = ["algorithm", "k", "n", "t", "m_or_rate", "replicates",
                 "sse", "error_rate", "bayes_rate", "runtime_seconds",
                 "sketch_seconds", "seed"]


@dataclass
class SynthSpec:
    """Spherical mixture generator: K centers drawn N(0, 1.5^2 K^{2/N} I),
    uniform weights, identity covariances."""

    k: int
    n: int
    t: int
    seed: int = 0
    test_size: int = 0

    def __post_init__(self):
        if min(self.k, self.n, self.t) < 1:
            raise ValueError("k, n, t must all be >= 1")


def gen_gmm(spec: SynthSpec):
    """Draw (train, test, true_means, train_labels, test_labels).

    Centers, train stream, and test stream use independent child seeds of
    spec.seed, so the train/test split is deterministic and uncorrelated.
    """
    ss = np.random.SeedSequence(spec.seed)
    rng_c, rng_train, rng_test = (np.random.default_rng(s) for s in ss.spawn(3))
    std = 1.5 * spec.k ** (1.0 / spec.n)
    means = std * rng_c.standard_normal((spec.n, spec.k))

    def draw(rng, count):
        labels = rng.integers(spec.k, size=count)
        x = means[:, labels] + rng.standard_normal((spec.n, count))
        return x, labels

    train, train_labels = draw(rng_train, spec.t)
    if spec.test_size > 0:
        test, test_labels = draw(rng_test, spec.test_size)
    else:
        test = np.empty((spec.n, 0))
        test_labels = np.empty(0, dtype=int)
    return train, test, means, train_labels, test_labels


def write_dataset(path, data: np.ndarray) -> None:
    """Binary dataset: magic, u32 version, u64 N, u64 T, float64 samples
    stored sample-major (column-major for the N x T matrix), little-endian."""
    X = np.asarray(data, float)
    if X.ndim != 2:
        raise ValueError("data must be an N x T matrix")
    n, t = X.shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IQQ", DATASET_VERSION, n, t))
        fh.write(np.asarray(X, dtype="<f8").tobytes(order="F"))


def read_dataset(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(len(DATASET_MAGIC) + struct.calcsize("<IQQ"))
        if len(header) < len(DATASET_MAGIC) + struct.calcsize("<IQQ"):
            raise ValueError("unexpected end of file")
        if header[:len(DATASET_MAGIC)] != DATASET_MAGIC:
            raise ValueError("bad magic: not a dataset file")
        version, n, t = struct.unpack("<IQQ", header[len(DATASET_MAGIC):])
        if version != DATASET_VERSION:
            raise ValueError(f"unsupported version {version}")
        payload = fh.read(8 * n * t)
        if len(payload) < 8 * n * t:
            raise ValueError("unexpected end of file")
        return np.frombuffer(payload, dtype="<f8").reshape((n, t), order="F").copy()


def read_csv_dataset(path) -> np.ndarray:
    """CSV import: one sample per row; returns the N x T matrix."""
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return rows.T.copy()


def write_sketch(path, sketch: Sketch) -> None:
    obj = {"magic": SKETCH_MAGIC, "version": SKETCH_VERSION,
           "m": sketch.m, "n": sketch.dimension, "t": sketch.sample_count,
           "seed": sketch.seed, "radius_law": sketch.radius_law,
           "scale": sketch.scale,
           "y_re": sketch.values.real.tolist(),
           "y_im": sketch.values.imag.tolist()}
    with open(path, "w") as fh:
        json.dump(obj, fh)


def read_sketch(path) -> Sketch:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("magic") != SKETCH_MAGIC:
        raise ValueError("bad magic: not a sketch file")
    if obj.get("version") != SKETCH_VERSION:
        raise ValueError(f"unsupported version {obj.get('version')}")
    if obj.get("radius_law") not in RADIUS_LAWS:
        raise ValueError("unknown radius law in sketch file")
    values = np.asarray(obj["y_re"], float) + 1j * np.asarray(obj["y_im"], float)
    if values.shape[0] != obj["m"]:
        raise ValueError("sketch length does not match header")
    return Sketch(values, int(obj["seed"]), obj["radius_law"],
                  float(obj["scale"]), int(obj["t"]), int(obj["n"]))


def write_centroids(path, centroids: np.ndarray, alpha=None, tau=None) -> None:
    C = np.asarray(centroids, float)
    obj = {"n": C.shape[0], "k": C.shape[1], "centroids": C.tolist()}
    if alpha is not None:
        obj["alpha"] = np.asarray(alpha, float).tolist()
    if tau is not None:
        obj["tau"] = np.asarray(tau, float).tolist()
    with open(path, "w") as fh:
        json.dump(obj, fh)


def read_centroids(path):
    with open(path) as fh:
        obj = json.load(fh)
    C = np.asarray(obj["centroids"], float)
    if C.shape != (obj["n"], obj["k"]):
        raise ValueError("centroid matrix does not match header")
    return C


def write_report_rows(path, rows: list[dict], append: bool = False) -> None:
    """EvalReport CSV; one row per (algorithm, grid point, seed)."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        if not append:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in REPORT_FIELDS})
