"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run once per backend to warm up (numba compiles on first
call), then timed over ``--repeat`` calls; the best time is reported along
with a check that both backends return the same value.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from strongcsp import _kernels as K
from strongcsp.gadget import BooleanTable, indset_to_strong_csp
from strongcsp.graph import erdos_renyi


def _cases(rng):
    n = 20000
    pos = rng.permutation(n)
    eu = rng.integers(0, n, 200000)
    ev = rng.integers(0, n, 200000)
    w = rng.random(200000)
    vec = rng.standard_normal(1 << 18)
    k = 4
    f1 = BooleanTable.random_folded(k, rng).values.astype(float)
    f2 = BooleanTable.random_folded(k, rng).values.astype(float)
    pi = rng.integers(0, 2, k)
    inst = indset_to_strong_csp(erdos_renyi(10, 0.3, rng))
    g = inst.graph
    al = inst.allowed
    return {
        "sweep_cuts (n=2e4, m=2e5)": lambda: K.sweep_cuts(pos[eu], pos[ev], w, n),
        "fwht (2^18)": lambda: K.fwht(vec),
        "fourlin enumerate (k=4)": lambda: K.fourlin_accept_enumerate(f1, f2, pi, pi, 2, 0.05),
        "strong-csp brute force (n=10)": lambda: K.strong_csp_bruteforce(
            g.n, inst.k, g.src, g.dst, al),
    }


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), fn()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':34s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}  same")
    for name, fn in cases.items():
        with K.use_backend("numpy"):
            t_np, v_np = _best(fn, a.repeat)
        if K.HAS_NUMBA:
            with K.use_backend("numba"):
                t_nb, v_nb = _best(fn, a.repeat)
            same = bool(np.allclose(np.asarray(v_np, dtype=float), np.asarray(v_nb, dtype=float)))
            print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {same}")
        else:
            print(f"{name:34s} {t_np:10.4f} {'-':>10s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
