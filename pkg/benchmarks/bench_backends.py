"""Compare the numba and numpy backends of the compiled inner loops.

Kernel timings run both implementations in one process. The end-to-end
timing runs a tuned dose-response fit in two subprocesses, one with
``LTK_DISABLE_NUMBA=1``, because the backend is fixed at import time.

    python benchmarks/bench_backends.py --n 2000 --repeat 5
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ltk import _accel

END_TO_END = """
import time
from ltk import synthetic, dose_response
ds = synthetic.generate(synthetic.LinearGaussianDGP(), {n}, 0)
dose_response.estimate_curve_tuned(ds, "ate", [0.0, 1.0])
t = time.perf_counter()
dose_response.estimate_curve_tuned(ds, "ate", [0.0, 1.0])
print(time.perf_counter() - t)
"""


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(n, rng):
    A = rng.normal(size=(n, 2))
    inv = np.array([1.0, 0.7])
    labels = rng.integers(0, 2, size=(n, 1)).astype(float)
    col = rng.normal(size=min(n, 3000))
    U, W = rng.normal(size=(n, 256)), rng.normal(size=(n, 256))
    grid = np.linspace(-4, 4, 512)
    target = np.exp(-0.5 * grid ** 2)
    return {
        "gaussian_gram": ((A, A, inv), _accel.gaussian_gram_numba, _accel.gaussian_gram_numpy),
        "dirac_gram": ((labels, labels), _accel.dirac_gram_numba, _accel.dirac_gram_numpy),
        "abs_pair_diffs": ((col,), _accel.abs_pair_diffs_numba, _accel.abs_pair_diffs_numpy),
        "column_dots": ((U, W), _accel.column_dots_numba, _accel.column_dots_numpy),
        "herd (m=500)": ((target, grid, 2.0, 500), _accel.herd_numba, _accel.herd_numpy),
    }


def end_to_end(n, disable):
    env = dict(os.environ, LTK_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="rows (default: 2000)")
    ap.add_argument("--repeat", type=int, default=5, help="timing repeats (default: 5)")
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args()

    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for name, (inputs, fast, slow) in kernel_cases(args.n, rng).items():
        a = best_of(lambda: fast(*inputs), args.repeat)
        b = best_of(lambda: slow(*inputs), args.repeat)
        print(f"{name:<16}{1e3 * a:>12.2f}{1e3 * b:>12.2f}{b / a:>9.1f}x")

    if not args.skip_end_to_end:
        a, b = end_to_end(args.n, False), end_to_end(args.n, True)
        print(f"\ntuned dose-response fit, n={args.n}: numba {a:.2f}s, numpy {b:.2f}s "
              f"({b / a:.1f}x)")


if __name__ == "__main__":
    main()
