"""Benchmark the JIT kernels against the pure-numpy fallback.

Kernel microbenchmarks reload ``bregmanopt._kernels`` under each backend;
the end-to-end driver benchmark re-executes this script in a subprocess so
every module binds the selected backend. Run from the repo root:

    python benchmarks/bench_kernels.py
"""

import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np


def _time_call(fn, args, repeat):
    fn(*args)  # warm-up / JIT
    best = float("inf")
    for _ in range(5):
        start = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeat)
    return best


def kernel_cases(rng, d):
    x = rng.uniform(0.05, 3.0, d)
    y = rng.uniform(0.05, 3.0, d)
    g = rng.standard_normal(d)
    features = rng.standard_normal((1600, 20))
    labels = np.where(rng.random(1600) < 0.5, -1.0, 1.0)
    w = rng.standard_normal(20)
    return [
        ("entropy_gradient", (x,)),
        ("entropy_gradient_inverse", (g, 1e-12)),
        ("entropy_divergence", (y, x)),
        ("project_simplex_euclidean", (g,)),
        ("soft_threshold", (g, 0.1)),
        ("logistic_value_grad", (features, labels, w, 0.01)),
    ]


def bench_kernels(repeat=2000):
    results = {}
    for disable in ("1", "0"):
        os.environ["BREGMANOPT_DISABLE_NUMBA"] = disable
        import bregmanopt._kernels as kernels

        kernels = importlib.reload(kernels)
        backend = "numba" if kernels.USING_NUMBA else "numpy"
        rng = np.random.default_rng(0)
        for name, args in kernel_cases(rng, 50):
            fn = getattr(kernels, name)
            n = repeat if name != "logistic_value_grad" else repeat // 10
            results.setdefault(name, {})[backend] = _time_call(fn, args, n)
    os.environ.pop("BREGMANOPT_DISABLE_NUMBA", None)

    print(f"{'kernel':<28}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, timings in results.items():
        if "numba" not in timings:
            print(f"{name:<28}{timings['numpy'] * 1e6:>12.2f}{'n/a':>12}{'':>10}")
            continue
        speedup = timings["numpy"] / timings["numba"]
        print(f"{name:<28}{timings['numpy'] * 1e6:>12.2f}"
              f"{timings['numba'] * 1e6:>12.2f}{speedup:>9.1f}x")


def run_driver_once():
    """Time the flagship sweep under whichever backend is active."""
    from bregmanopt import _kernels
    from bregmanopt.cli import config_from_dict, sweep_config
    import tempfile

    _kernels.warm_up()
    cfg = config_from_dict({
        "problem": {"kind": "logistic", "seed": 0},
        "method": "or_smd_b",
        "step_rule": {"kind": "constant", "eta": 0.1},
        "relaxation": {"kind": "constant", "lambda": 1.0, "mode": "bounded"},
        "n_iters": 200,
        "seeds": [0, 1, 2, 3, 4],
        "master_seed": 7,
    })
    with tempfile.TemporaryDirectory() as out:
        start = time.perf_counter()
        sweep_config(cfg, [1.0, 1.3, 1.6, 1.8], out_dir=out, quiet=True)
        return time.perf_counter() - start


def bench_driver():
    print(f"\n{'full sweep (4 lambdas x 5 seeds x 200 iters)':<46}{'seconds':>10}")
    for disable, label in (("1", "numpy"), ("0", "numba")):
        env = dict(os.environ, BREGMANOPT_DISABLE_NUMBA=disable)
        out = subprocess.run(
            [sys.executable, __file__, "--driver-only"],
            env=env, capture_output=True, text=True, check=True,
        )
        print(f"  {label:<44}{float(out.stdout.strip()):>10.2f}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--driver-only", action="store_true",
                        help="print one driver timing and exit (internal)")
    args = parser.parse_args()
    if args.driver_only:
        print(f"{run_driver_once():.4f}")
        return
    bench_kernels()
    bench_driver()


if __name__ == "__main__":
    main()
