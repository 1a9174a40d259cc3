"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--points 4096] [--repeat 20]

Times each kernel from both backends on the same inputs, checks that they
agree, then times a short end-to-end run in a subprocess per backend
(``CNLS_PURE_PYTHON=1`` selects the fallback at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cnls import _kernels_py

try:
    from cnls import _kernels as _compiled
except ImportError:
    _compiled = None

_RUN = """
import time
import numpy as np
from cnls import grid, kernels
from cnls.params import SystemParams
from cnls.records import SolverConfig
from cnls.spectral import evolve
from cnls.state import Gaussian, build_state
spec = grid.euclidean(1, {points}, 20.0)
params = SystemParams(n=1, N=2, p=3.0, mu=[1.0, 1.0], beta=[[0, 0.5], [0.5, 0]])
s0 = build_state(spec, [Gaussian(1.0), Gaussian(0.8, 1.3)])
t = time.perf_counter()
evolve(s0, params, SolverConfig(dt0=1e-3, t_max=1.0, adaptive=False))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def inputs(points, N=2, p=3.0, seed=0):
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal((N, points)) + 1j * rng.standard_normal((N, points))
    mu = np.ones(N)
    beta = np.full((N, N), 0.5)
    np.fill_diagonal(beta, 0.0)
    K = points
    lower = np.r_[0.0, rng.uniform(-1, 0, K - 1)].astype(np.complex128)
    upper = np.r_[rng.uniform(-1, 0, K - 1), 0.0].astype(np.complex128)
    diag = (4.0 + 1j * rng.uniform(0, 1, K))
    rhs = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    return {
        "multiplier": (np.ascontiguousarray(phi), mu, beta, p),
        "max_multiplier": (np.ascontiguousarray(phi), mu, beta, p),
        "rotate_phase": (np.ascontiguousarray(phi), mu, beta, p, 1e-3),
        "potential_density": (np.ascontiguousarray(phi), mu, beta, p),
        "tridiag_solve": (lower, diag, upper, rhs),
    }


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def bench(points, repeat):
    rows = []
    for name, args in inputs(points).items():
        ref = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: ref(*args), number=1, repeat=repeat))
        if _compiled is None:
            rows.append((name, t_py, None, None))
            continue
        fast = getattr(_compiled, name)
        t_c = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat))
        a, b = np.asarray(_first(ref(*args))), np.asarray(_first(fast(*args)))
        err = float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), 1e-300))
        rows.append((name, t_py, t_c, err))
    return rows


def end_to_end(points):
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, CNLS_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", _RUN.format(points=points)], env=env,
                             capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        out[backend] = float(secs)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=4096)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--skip-run", action="store_true", help="kernel timings only")
    args = ap.parse_args(argv)
    print(f"{'kernel':<18} {'numpy [ms]':>11} {'compiled [ms]':>14} {'speedup':>8} {'rel diff':>9}")
    for name, t_py, t_c, err in bench(args.points, args.repeat):
        if t_c is None:
            print(f"{name:<18} {1e3 * t_py:>11.3f} {'(not built)':>14}")
        else:
            print(f"{name:<18} {1e3 * t_py:>11.3f} {1e3 * t_c:>14.3f} {t_py / t_c:>8.1f}x "
                  f"{err:>9.1e}")
    if not args.skip_run:
        times = end_to_end(args.points)
        line = ", ".join(f"{k} {v:.2f} s" for k, v in sorted(times.items()))
        print(f"1000-step coupled run on {args.points} points: {line}")


if __name__ == "__main__":
    main()
