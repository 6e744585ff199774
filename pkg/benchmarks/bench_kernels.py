"""Time the numba kernels against the numpy fallback.

Part 1 times each kernel in-process through ``_kernels.backend``. Part 2 runs
a whole blur experiment in two subprocesses, one with GKREG_DISABLE_NUMBA=1.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--N 128]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from gkreg import _kernels
from gkreg.problems import gaussian_band
from gkreg.operators import SparseBandedMatrix


def best_of(fn, repeat):
    fn()  # warm up (jit compile on first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_table(N, repeat):
    rng = np.random.default_rng(0)
    v = rng.standard_normal(N * N)
    X = rng.standard_normal((N, N))
    Dr, Dc = rng.standard_normal((N - 1, N)), rng.standard_normal((N, N - 1))
    T = SparseBandedMatrix.banded_toeplitz(N, gaussian_band(min(16, N - 1), 4.0))
    ip, ix, dt = T.indptr, T.indices, T.data

    cases = {
        "diff_forward": lambda k: k["diff_forward"](v),
        "diff_adjoint": lambda k: k["diff_adjoint"](v[:-1]),
        "grad2d_forward": lambda k: k["grad2d_forward"](X),
        "grad2d_adjoint": lambda k: k["grad2d_adjoint"](Dr, Dc),
        "csr_matmat": lambda k: k["csr_matmat"](ip, ix, dt, X),
        "csr_rmatmat": lambda k: k["csr_rmatmat"](ip, ix, dt, X, N),
    }
    nb, npk = _kernels.backend(True), _kernels.backend(False)
    print(f"kernel timings, N = {N}, best of {repeat} (microseconds)")
    print(f"{'kernel':16s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, call in cases.items():
        t_np = best_of(lambda: call(npk), repeat)
        t_nb = best_of(lambda: call(nb), repeat)
        print(f"{name:16s} {1e6 * t_np:10.1f} {1e6 * t_nb:10.1f} {t_np / t_nb:8.2f}")


RUN = ("import time; from gkreg.cli import ExperimentConfig, execute;"
       "cfg = ExperimentConfig(problem='blur', n={N}, kmax={kmax}, seed=0);"
       "execute(cfg); t0 = time.perf_counter(); execute(cfg);"
       "print(time.perf_counter() - t0)")


def full_runs(N, kmax):
    print(f"\nfull blur run, N = {N}, kmax = {kmax} (seconds, second of two runs)")
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, GKREG_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", RUN.format(N=N, kmax=kmax)], env=env,
                             capture_output=True, text=True, check=True)
        print(f"{label:6s} {float(out.stdout.strip()):8.3f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--run-N", type=int, default=32)
    ap.add_argument("--kmax", type=int, default=30)
    args = ap.parse_args(argv)
    if not _kernels.USE_NUMBA:
        print("numba unavailable or disabled; both columns use numpy")
    kernel_table(args.N, args.repeat)
    full_runs(args.run_N, args.kmax)


if __name__ == "__main__":
    main()
