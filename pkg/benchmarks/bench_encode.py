"""Compare the compiled and NumPy coordinate-descent backends.

Usage::

    python benchmarks/bench_encode.py [--m 20] [--n 300] [--atoms 40] [--repeat 5]

Both backends encode the same batch; the script reports the best wall time of
each and the largest difference between their codes.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sparlow._backend import compiled_cd_batch
from sparlow.manifold import normalize_columns, random_dictionary
from sparlow.sparse import ElasticNetPrior, batch_encode


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--m", type=int, default=20)
    parser.add_argument("--n", type=int, default=300)
    parser.add_argument("--atoms", type=int, default=40)
    parser.add_argument("--lambda1", type=float, default=0.2)
    parser.add_argument("--lambda2", type=float, default=1e-3)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    D = random_dictionary(args.m, args.atoms, rng)
    X = normalize_columns(rng.standard_normal((args.m, args.n)))
    prior = ElasticNetPrior(args.lambda1, args.lambda2)

    backends = ["python"] + (["cython"] if compiled_cd_batch is not None else [])
    codes, timings = {}, {}
    for name in backends:
        codes[name] = batch_encode(X, D, prior, backend=name).codes
        timings[name] = best_time(lambda: batch_encode(X, D, prior, backend=name), args.repeat)

    print(f"batch m={args.m} n={args.n} atoms={args.atoms}, best of {args.repeat}")
    for name in backends:
        print(f"{name:8s}{timings[name] * 1e3:10.2f} ms")
    if "cython" in timings:
        diff = float(np.max(np.abs(codes["python"] - codes["cython"])))
        print(f"speedup  {timings['python'] / timings['cython']:10.1f}x")
        print(f"max |code difference| {diff:.2e}")
    else:
        print("compiled kernel not built; only the NumPy backend was timed")


if __name__ == "__main__":
    main()
