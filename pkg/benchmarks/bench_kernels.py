#!/usr/bin/env python3
"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from escm import _accel
from escm.mechanism import MechanismParams, WeightMapSpec, weight_table


def best_of(fn, repeat):
    fn()  # warm-up (also triggers JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    table = weight_table(MechanismParams(weight_map=WeightMapSpec.log_odds(0.1)))
    p = rng.random(20_000)
    yield "binomial_weight_moments (20k p, l_a=10)", "binomial_weight_moments", (p, table)
    T, n = 500, 501
    w = rng.random((T, n))
    for M in (2, 5):
        votes = rng.integers(M, size=(T, n))
        yield (f"plurality_block ({T}x{n}, M={M})", "plurality_block",
               (votes, w, M, rng.random(T)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba not importable; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':44s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree")
    for label, name, args_ in cases(rng):
        f_np = getattr(_accel, f"{name}_numpy")
        f_nb = getattr(_accel, f"{name}_numba")
        a, b = f_np(*args_), f_nb(*args_)
        agree = all(np.allclose(x, y, rtol=1e-12, atol=1e-14) for x, y in zip(a, b))
        t_np = best_of(lambda: f_np(*args_), args.repeat)
        t_nb = best_of(lambda: f_nb(*args_), args.repeat)
        print(f"{label:44s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}  {agree}")


if __name__ == "__main__":
    main()
