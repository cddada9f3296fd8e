"""Compare the compiled kernels with the numpy fallback.

Times each hot kernel at desk and paper sizes, then one desk-scale MAP solve
per backend (in a subprocess, since the backend is fixed at import).

    python benchmarks/bench_backends.py [--repeat 200]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from blindlmmse._backend import available_backends, get_kernels

SOLVE_SNIPPET = """
import time
from blindlmmse import config, harness
cfg = config.desk_preset(0).replace(dataset_size=1, max_iter=300)
problem = harness.prepare(cfg)
t = time.perf_counter()
for variant in ("sigma", "kernel"):
    harness.run_unit(problem, variant, False, 0.1, 0.001, 0)
print(time.perf_counter() - t)
"""


def kernel_cases(n, d, rng):
    x = rng.standard_normal((n, n))
    h = rng.random((d, d))
    r = rng.standard_normal((n, n))
    v = rng.standard_normal(d * d)
    mu = rng.standard_normal(n * n // 2)
    w = rng.standard_normal(n * n // 2)
    return {
        "conv_small": lambda k: k.conv_small(x, h),
        "corr_small": lambda k: k.corr_small(h, r),
        "corr_restrict": lambda k: k.corr_restrict(x, r, d),
        "project_simplex": lambda k: k.project_simplex(v),
        "soft_threshold": lambda k: k.soft_threshold_shifted(w, mu, 0.01),
    }


def time_solve(backend):
    env = dict(os.environ, BLINDLMMSE_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    args = p.parse_args(argv)

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    rng = np.random.default_rng(0)
    for n, d in ((16, 7), (32, 15)):
        print(f"\nn={n} d={d}  (microseconds per call)")
        print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
        for name, fn in kernel_cases(n, d, rng).items():
            times = []
            for b in backends:
                k = get_kernels(b)
                fn(k)
                times.append(1e6 * timeit.timeit(lambda: fn(k), number=args.repeat) / args.repeat)
            speed = f"{times[-1] / times[0]:>9.1f}x" if len(times) == 2 else ""
            print(f"{name:<18}" + "".join(f"{t:>12.1f}" for t in times) + speed)

    print("\ndesk MAP solve, 2 variants x 300 iterations (seconds)")
    for b in backends:
        print(f"{b:<18}{time_solve(b):>12.3f}")


if __name__ == "__main__":
    main()
