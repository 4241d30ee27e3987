"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

Each kernel is called once first so compilation is not timed. With
``--end-to-end`` the script also times a full two-variable posterior in
two subprocesses, one with BAYESLINGAM_DISABLE_NUMBA=1.
"""

import argparse
import itertools
import os
import subprocess
import sys
import time

import numpy as np

from bayeslingam import graph, kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    y = rng.laplace(size=10_000)
    Xp = np.ascontiguousarray(rng.normal(size=(10_000, 2)))
    b = np.array([0.3, -0.2])
    g, mu, ls = np.zeros(2), np.array([-1.0, 1.0]), np.zeros(2)
    ys, Xs = y[:100].copy(), np.ascontiguousarray(Xp[:100])
    normals, log_u = rng.standard_normal((2000, 4)), np.log(rng.random(2000))
    chain = (np.array([0.1, 0.1, 0.5, -0.5]), 0.5, np.full(4, 0.05), 1.0, normals, log_u, 500, 25, 0.3,
             np.zeros(4), np.ones(4))
    perms = np.array(list(itertools.permutations(range(5))), dtype=np.int64)
    dags = graph.enumerate_dags(5)
    table = rng.normal(size=(5, 32))
    return {
        "gl_loglik_grad N=10000": lambda k: k.gl_loglik_grad(y, Xp, b, 0.5, -0.3, 1e-8),
        "mog_loglik_grad N=10000": lambda k: k.mog_loglik_grad(y, Xp, b, g, mu, ls),
        "gl_metropolis 2000 steps": lambda k: k.gl_metropolis(ys, Xs, *chain),
        "enumerate_dag_masks n=5": lambda k: k.enumerate_dag_masks(5, perms, 29281),
        "dag_scores n=5": lambda k: k.dag_scores(dags.masks, table),
        "class_keys n=5": lambda k: k.class_keys(dags.masks, graph.class_key_words(5)),
    }


def end_to_end():
    code = ("import time; from bayeslingam.datagen import *; from bayeslingam.posterior import *;"
            "from bayeslingam.density import DensitySpec;"
            "c = generate_synthetic(SyntheticConfig(n=3, q=2.0, N=2000, seed=1));"
            "exhaustive_posterior(c.data, DensitySpec('gl'));"
            "t = time.perf_counter(); exhaustive_posterior(c.data, DensitySpec('gl')); "
            "print(time.perf_counter() - t)")
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, BAYESLINGAM_DISABLE_NUMBA=flag)
        r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[label] = float(r.stdout.strip().splitlines()[-1])
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()

    if kernels.numba_backend is None:
        sys.exit("numba backend unavailable (not installed or disabled); nothing to compare")
    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, call in cases().items():
        t_nb = best_of(lambda: call(kernels.numba_backend), args.repeat)
        t_np = best_of(lambda: call(kernels.numpy_backend), args.repeat)
        print(f"{name:<28}{t_nb:>12.5f}{t_np:>12.5f}{t_np / t_nb:>9.1f}x")
    if args.end_to_end:
        t = end_to_end()
        print(f"{'posterior n=3 N=2000':<28}{t['numba']:>12.3f}{t['numpy']:>12.3f}{t['numpy'] / t['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
