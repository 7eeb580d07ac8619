#!/usr/bin/env python3
"""Time one ALS sweep (user + song half-sweeps) under both kernel backends.

The compiled-kernel warmup runs outside the timed region, so the numba
figure excludes JIT compilation. Both backends solve the same problem from
the same start; the script also reports their worst factor disagreement.
"""

import argparse
import time

import numpy as np

from tagsong import FactorModel, SparseInteractions, half_sweep, make_rng, set_backend


def build_problem(n_users: int, n_songs: int, density: float, k: int, seed: int):
    rng = make_rng(seed)
    n_obs = int(density * n_users * n_songs)
    pairs = rng.choice(n_users * n_songs, size=n_obs, replace=False)
    trips = [(int(p // n_songs), int(p % n_songs), int(c)) for p, c in zip(pairs, rng.integers(1, 50, size=n_obs))]
    R = SparseInteractions.from_triplets(n_users, n_songs, trips)
    m = FactorModel(
        U=rng.uniform(-0.01, 0.01, (n_users, k)),
        V=rng.uniform(-0.01, 0.01, (n_songs, k)),
        k=k,
        reg=0.01,
        alpha=40.0,
    )
    return R, m


def fresh_copy(m: FactorModel) -> FactorModel:
    return FactorModel(U=m.U.copy(), V=m.V.copy(), k=m.k, reg=m.reg, alpha=m.alpha)


def time_backend(name: str, R: SparseInteractions, m0: FactorModel, repeats: int):
    set_backend(name)
    try:
        m = fresh_copy(m0)
        half_sweep(R, m, "user")  # warmup; compiles the numba kernel
        half_sweep(R, m, "song")
        best = float("inf")
        m = fresh_copy(m0)
        for _ in range(repeats):
            start = time.perf_counter()
            half_sweep(R, m, "user")
            half_sweep(R, m, "song")
            best = min(best, time.perf_counter() - start)
        return best, m
    finally:
        set_backend("auto")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, default=2000)
    parser.add_argument("--songs", type=int, default=3000)
    parser.add_argument("--density", type=float, default=0.01)
    parser.add_argument("--k", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    R, m0 = build_problem(args.users, args.songs, args.density, args.k, args.seed)
    print(
        f"problem: {args.users} users x {args.songs} songs, "
        f"{R.n_obs} observations, k={args.k}, best of {args.repeats} sweeps"
    )

    results = {}
    numpy_best, numpy_model = time_backend("numpy", R, m0, args.repeats)
    results["numpy"] = numpy_best
    try:
        numba_best, numba_model = time_backend("numba", R, m0, args.repeats)
        results["numba"] = numba_best
    except ImportError:
        numba_model = None
        print("numba backend unavailable; timing numpy only")

    print(f"{'backend':<10}{'sweep (s)':>12}{'speedup':>10}")
    for name, best in results.items():
        print(f"{name:<10}{best:>12.4f}{numpy_best / best:>9.1f}x")

    if numba_model is not None:
        gap = max(
            float(np.abs(numpy_model.U - numba_model.U).max()),
            float(np.abs(numpy_model.V - numba_model.V).max()),
        )
        print(f"max |factor difference| between backends: {gap:.3e}")


if __name__ == "__main__":
    main()
