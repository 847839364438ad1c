#!/usr/bin/env python3
"""Benchmark the filter kernels: compiled extension vs numpy fallback.

The per-observation filter step dominates a full experiment's runtime, so
the package ships the step twice (see mrsim.kernels).  This script times
predict and measurement steps for each regression number and a short
end-to-end experiment under both backends.

    python benchmarks/bench_kernels.py [--steps 20000]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mrsim import kernels


def time_kernel(predict_step, measurement_step, r, steps):
    rng = np.random.default_rng(0)
    n = 2 * r + 1
    phi = np.zeros(r)
    phi[0] = -1.0
    b = np.zeros(r)
    c = np.zeros((r, r))
    s = rng.normal(size=n)
    s[0] = 1.0
    A = rng.normal(size=(n, n)) * 0.3
    P = A @ A.T
    t0 = time.perf_counter()
    for i in range(steps):
        s, P = measurement_step(s, P, 0.09, 10.0 + 0.01 * i, 0.01)
        s, P = predict_step(phi, b, c, 10.0, 0.04, s, P, 0.01)
    return time.perf_counter() - t0


def bench_backend(label, predict_step, measurement_step, steps):
    print(f"-- {label}")
    totals = {}
    for r in (4, 5, 6, 7):
        dt = time_kernel(predict_step, measurement_step, r, steps)
        per_step = 1e6 * dt / steps
        totals[r] = dt
        print(f"   r={r}: {steps} filter steps in {dt:.3f}s  ({per_step:.1f} us/step)")
    return totals


def bench_experiment():
    """Reference experiment (map1, both modes) under the current backend."""
    from mrsim import harness

    t0 = time.perf_counter()
    sc = harness.reference_scenario()
    harness.run_experiment(sc)
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--no-subprocess", action="store_true",
                        help="skip the pure-python end-to-end rerun")
    args = parser.parse_args()

    print(f"active backend: {kernels.ACTIVE_BACKEND}")
    py_totals = bench_backend("numpy fallback", kernels.predict_step_py,
                              kernels.measurement_step_py, args.steps)
    if kernels.HAVE_COMPILED:
        c_totals = bench_backend("compiled extension", kernels._ckernels.predict_step,
                                 kernels._ckernels.measurement_step, args.steps)
        for r in (4, 5, 6, 7):
            print(f"   r={r}: speedup x{py_totals[r] / c_totals[r]:.1f}")
    else:
        print("-- compiled extension not built (pip install -e . with cython + a C toolchain)")

    dt = bench_experiment()
    print(f"-- end-to-end reference experiment ({kernels.ACTIVE_BACKEND}): {dt:.2f}s")
    if kernels.HAVE_COMPILED and not args.no_subprocess:
        sys.stdout.flush()
        env = dict(os.environ, MRSIM_PURE_PYTHON="1")
        code = (
            "import time; t0=time.perf_counter(); from mrsim import harness, kernels; "
            "harness.run_experiment(harness.reference_scenario()); "
            "print(f'-- end-to-end reference experiment ({kernels.ACTIVE_BACKEND}): "
            "{time.perf_counter()-t0:.2f}s')"
        )
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


if __name__ == "__main__":
    main()
