"""Benchmark the transfer-matrix kernels: numba JIT vs pure numpy.

The numba path is selected at import time, so the numpy fallback is timed
in a subprocess with ``REFLECTKIT_NO_NUMBA=1``.  Run from the repository
root::

    python3 benchmarks/bench_kernels.py
"""
import json
import os
import subprocess
import sys
import time

import numpy as np

CASES = [
    # (n_cells, n_omegas, repeats)
    (64, 2_000, 20),
    (256, 2_000, 10),
    (256, 20_000, 5),
    (1024, 20_000, 3),
]


def run_case(n_cells, n_omegas, repeats):
    from reflectkit._kernels import (
        USING_NUMBA,
        propagate_endpoints,
        propagate_joint,
    )

    rng = np.random.default_rng(0)
    q = rng.normal(0.0, 0.3, n_cells)
    dx = 1.0 / n_cells
    om = np.linspace(0.1, 200.0, n_omegas)

    # warm-up (JIT compilation for the numba path)
    propagate_endpoints(q, dx, om[:8], 1.0, 0.0)
    propagate_joint(q, dx, om[:8])

    best = {}
    for name, call in [
        ("endpoints", lambda: propagate_endpoints(q, dx, om, 1.0, 0.0)),
        ("joint", lambda: propagate_joint(q, dx, om)),
    ]:
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            call()
            times.append(time.perf_counter() - t0)
        best[name] = min(times)
    return {"numba": USING_NUMBA, "times": best}


def main():
    if os.environ.get("_BENCH_CHILD"):
        n_cells, n_omegas, repeats = (int(v) for v in sys.argv[1:4])
        print(json.dumps(run_case(n_cells, n_omegas, repeats)))
        return

    print(f"{'cells':>6} {'omegas':>7} {'kernel':>10} "
          f"{'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}")
    for n_cells, n_omegas, repeats in CASES:
        results = {}
        for no_numba in (False, True):
            env = dict(os.environ, _BENCH_CHILD="1")
            if no_numba:
                env["REFLECTKIT_NO_NUMBA"] = "1"
            else:
                env.pop("REFLECTKIT_NO_NUMBA", None)
            out = subprocess.run(
                [sys.executable, __file__,
                 str(n_cells), str(n_omegas), str(repeats)],
                env=env, capture_output=True, text=True, check=True,
            )
            payload = json.loads(out.stdout.strip().splitlines()[-1])
            results["numpy" if no_numba else "numba"] = payload
        if results["numba"]["numba"] is not True:
            print("warning: numba unavailable; both columns use numpy",
                  file=sys.stderr)
        for kernel in ("endpoints", "joint"):
            t_nb = results["numba"]["times"][kernel]
            t_np = results["numpy"]["times"][kernel]
            print(f"{n_cells:>6} {n_omegas:>7} {kernel:>10} "
                  f"{1e3 * t_nb:>11.3f} {1e3 * t_np:>11.3f} "
                  f"{t_np / t_nb:>8.2f}x")


if __name__ == "__main__":
    main()
