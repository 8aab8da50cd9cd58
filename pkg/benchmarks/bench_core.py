"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_core.py [--repeat 5] [--end-to-end]

Per-routine timings call both implementations directly.  ``--end-to-end``
also times one single-stage fit in subprocesses with and without
``REGIME_KIT_PURE=1``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from regime_kit import _core_py

try:
    from regime_kit import _core
except ImportError:
    _core = None

FIT_SNIPPET = """
import time
from regime_kit import BACKEND
from regime_kit.dtr import FitConfig, fit_single_stage
from regime_kit.simgen import ScenarioSpec, generate_scenario
c, _ = generate_scenario(ScenarioSpec("SIM1", 500, 1))
t0 = time.perf_counter()
fit_single_stage(c, "ACFBL", FitConfig(rule_features={1: ["X1_2"]}))
print(BACKEND, time.perf_counter() - t0)
"""


def cases(rng):
    X = rng.uniform(size=(500, 6))
    U, V = rng.normal(size=(2000, 1)), rng.normal(size=(1700, 1))
    v = rng.normal(size=500)
    delta = rng.uniform(0.01, 10, 500)
    g, op, on, wt = rng.normal(size=(4, 5000))
    return {
        "sobolev_gram 500x500x6": ("sobolev_gram", (X, X)),
        "gaussian_smoother 1700x2000": ("gaussian_smoother", (V, U, np.array([0.3]))),
        "secular_top_root k=500": ("secular_top_root", (v * v, delta, 1 / 500)),
        "surrogate_terms n=5000": ("surrogate_terms", (g, op, on, np.abs(wt))),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'routine':<30} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for label, (fn, a) in cases(rng).items():
        t_py = min(timeit.repeat(lambda: getattr(_core_py, fn)(*a), number=1, repeat=args.repeat)) * 1e3
        if _core is None:
            print(f"{label:<30} {t_py:10.2f} {'n/a':>10} {'':>8}")
            continue
        t_cy = min(timeit.repeat(lambda: getattr(_core, fn)(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:<30} {t_py:10.2f} {t_cy:10.2f} {t_py / t_cy:7.1f}x")
    if args.end_to_end:
        for pure in ("1", "0"):
            env = dict(os.environ, REGIME_KIT_PURE=pure)
            out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True, text=True, check=True)
            backend, secs = out.stdout.split()
            print(f"ACFBL fit n=500 [{backend}]: {float(secs):.2f} s")


if __name__ == "__main__":
    main()
