"""Command-line interface: synth / sketch / cluster / kmeans / eval / bench."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as dio
from .baselines import classify_and_score, kmeans_pp, sse
from .engine import EngineConfig, run
from .sketch import (RADIUS_LAWS, compute_sketch, draw_frequencies,
                     estimate_scale)

KMEANS_REPLICATE_CAP = 64


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skcl",
                                     description="sketched clustering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic mixture dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-size", type=int, default=0)
    p.add_argument("--test-out")
    p.add_argument("--means-out", help="write the true means as centroids JSON")
    p.add_argument("--test-labels-out",
                   help="write test labels as a 1 x T dataset file")

    p = sub.add_parser("sketch", help="sketch a dataset file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--law", choices=RADIUS_LAWS, default="gaussian")
    p.add_argument("--scale", type=float,
                   help="override the estimated data scale")
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="recover centroids from a sketch")
    p.add_argument("--sketch", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--damping", type=float, default=0.7)
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--no-em", action="store_true")
    p.add_argument("--json-trace", help="write per-iteration diagnostics (JSON lines)")

    p = sub.add_parser("kmeans", help="k-means++ on a dataset file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--rate", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score centroids against datasets")
    p.add_argument("--centroids", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test")
    p.add_argument("--test-labels")
    p.add_argument("--means")
    p.add_argument("--algorithm", default="unknown")
    p.add_argument("--out", help="append an EvalReport CSV row here")

    p = sub.add_parser("bench", help="sweep sketch sizes and k-means settings")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--t", type=int, default=10000)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m-grid", help="comma-separated sketch sizes "
                                    "(default: 5 log-spaced in [KN, 10KN])")
    p.add_argument("--rates", default="1.0",
                   help="comma-separated k-means subsample rates")
    p.add_argument("--replicates", default="1",
                   help="comma-separated k-means replicate counts")
    p.add_argument("--law", choices=RADIUS_LAWS, default="gaussian")
    p.add_argument("--test-size", type=int, default=100000)
    p.add_argument("--out", required=True)
    return parser


def _cmd_synth(args) -> int:
    spec = dio.SynthSpec(args.k, args.n, args.t, seed=args.seed,
                         test_size=args.test_size)
    train, test, means, _, test_labels = dio.gen_gmm(spec)
    dio.write_dataset(args.out, train)
    if args.test_out:
        dio.write_dataset(args.test_out, test)
    if args.means_out:
        dio.write_centroids(args.means_out, means)
    if args.test_labels_out:
        dio.write_dataset(args.test_labels_out, test_labels[None, :].astype(float))
    return 0


def _cmd_sketch(args) -> int:
    if args.infile.endswith(".csv"):
        X = dio.read_csv_dataset(args.infile)
    else:
        X = dio.read_dataset(args.infile)
    scale = args.scale if args.scale is not None else estimate_scale(X, seed=args.seed)
    freqs = draw_frequencies(X.shape[0], args.m, args.law, scale, args.seed)
    dio.write_sketch(args.out, compute_sketch(X, freqs))
    return 0


def _cmd_cluster(args) -> int:
    sk = dio.read_sketch(args.sketch)
    freqs = sk.frequencies()
    config = EngineConfig(max_iters=args.max_iters, tol=args.tol,
                          damping=args.damping, restarts=args.restarts,
                          em_enabled=not args.no_em, seed=args.seed,
                          trace=bool(args.json_trace))
    centroids, hyper, diag = run(sk, freqs, args.k, config)
    dio.write_centroids(args.out, centroids, alpha=hyper.alpha, tau=hyper.tau)
    if args.json_trace:
        with open(args.json_trace, "w") as fh:
            for rec in diag["trace"]:
                fh.write(json.dumps(rec) + "\n")
    return 0


def _cmd_kmeans(args) -> int:
    X = dio.read_dataset(args.infile)
    C = kmeans_pp(X, args.k, replicates=args.replicates,
                  subsample_rate=args.rate, seed=args.seed)
    dio.write_centroids(args.out, C)
    return 0


def _cmd_eval(args) -> int:
    C = dio.read_centroids(args.centroids)
    train = dio.read_dataset(args.train)
    row = {"algorithm": args.algorithm, "k": C.shape[1], "n": C.shape[0],
           "t": train.shape[1], "m_or_rate": "", "replicates": "",
           "sse": sse(train, C), "error_rate": "", "bayes_rate": "",
           "runtime_seconds": "", "sketch_seconds": "", "seed": ""}
    if args.test and args.test_labels and args.means:
        test = dio.read_dataset(args.test)
        labels = dio.read_dataset(args.test_labels)[0].astype(int)
        means = dio.read_centroids(args.means)
        err, bayes = classify_and_score(test, labels, C, means)
        row["error_rate"], row["bayes_rate"] = err, bayes
    print(",".join(str(row[f]) for f in dio.REPORT_FIELDS))
    if args.out:
        append = os.path.exists(args.out)
        dio.write_report_rows(args.out, [row], append=append)
    return 0


def _bench_trial(args, m_grid, rates, replicates, trial):
    seed = args.seed + 1000 * trial
    spec = dio.SynthSpec(args.k, args.n, args.t, seed=seed,
                         test_size=args.test_size)
    train, test, means, _, test_labels = dio.gen_gmm(spec)
    rows = []
    for m in m_grid:
        t0 = time.perf_counter()
        scale = estimate_scale(train, seed=seed)
        freqs = draw_frequencies(args.n, m, args.law, scale, seed)
        sk = compute_sketch(train, freqs)
        sketch_seconds = time.perf_counter() - t0
        config = EngineConfig(seed=seed)
        centroids, _, _ = run(sk, freqs, args.k, config)
        runtime = time.perf_counter() - t0  # sketch time included
        err, bayes = classify_and_score(test, test_labels, centroids, means)
        rows.append({"algorithm": "cl-amp", "k": args.k, "n": args.n,
                     "t": args.t, "m_or_rate": m, "replicates": "",
                     "sse": sse(train, centroids), "error_rate": err,
                     "bayes_rate": bayes, "runtime_seconds": runtime,
                     "sketch_seconds": sketch_seconds, "seed": seed})
    for rate in rates:
        for rep in replicates:
            t0 = time.perf_counter()
            centroids = kmeans_pp(train, args.k, replicates=rep,
                                  subsample_rate=rate, seed=seed)
            runtime = time.perf_counter() - t0
            err, bayes = classify_and_score(test, test_labels, centroids, means)
            rows.append({"algorithm": "kmeans++", "k": args.k, "n": args.n,
                         "t": args.t, "m_or_rate": rate, "replicates": rep,
                         "sse": sse(train, centroids), "error_rate": err,
                         "bayes_rate": bayes, "runtime_seconds": runtime,
                         "sketch_seconds": 0.0, "seed": seed})
    return rows


def _cmd_bench(args) -> int:
    kn = args.k * args.n
    if args.m_grid:
        m_grid = [int(v) for v in args.m_grid.split(",")]
    else:
        m_grid = sorted({int(round(v)) for v in np.geomspace(kn, 10 * kn, 5)})
    rates = [float(v) for v in args.rates.split(",")]
    replicates = [int(v) for v in args.replicates.split(",")]
    capped = [r for r in replicates if r > KMEANS_REPLICATE_CAP]
    replicates = [min(r, KMEANS_REPLICATE_CAP) for r in replicates]
    if capped:
        print(f"warning: replicates capped at {KMEANS_REPLICATE_CAP}",
              file=sys.stderr)
    workers = max(1, int(os.environ.get("SKCL_THREADS", "1")))
    trials = range(args.trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_trial = list(pool.map(
                lambda i: _bench_trial(args, m_grid, rates, replicates, i),
                trials))
    else:
        per_trial = [_bench_trial(args, m_grid, rates, replicates, i)
                     for i in trials]
    rows = [row for rows in per_trial for row in rows]
    rows.sort(key=lambda r: (r["algorithm"], r["m_or_rate"], r["seed"]))
    dio.write_report_rows(args.out, rows)
    meta = {"m_grid": m_grid, "rates": rates, "replicates": replicates,
            "replicates_capped": bool(capped), "trials": args.trials,
            "law": args.law, "test_size": args.test_size}
    with open(args.out + ".meta.json", "w") as fh:
        json.dump(meta, fh)
    return 0


_COMMANDS = {"synth": _cmd_synth, "sketch": _cmd_sketch,
             "cluster": _cmd_cluster, "kmeans": _cmd_kmeans,
             "eval": _cmd_eval, "bench": _cmd_bench}


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())
