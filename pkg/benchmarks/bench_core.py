"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_core.py [--repeat 5]

Reports the best-of-N wall time for the Philox uniform stream and the heat
kernel matrix at sizes used by the simulator and the semigroup check, and
confirms both backends return the same numbers.
"""

import argparse
import timeit

import numpy as np

from halfline_lq import _backend, _fallback

CASES = {
    "philox_uniforms 256x200x42": ("philox_uniforms", (7, 0, 256, 200, 42)),
    "philox_uniforms 1024x400x8": ("philox_uniforms", (7, 0, 1024, 400, 8)),
    "heat_kernel_matrix 400x400": ("heat_kernel_matrix", None),
    "heat_kernel_matrix 1600x1600": ("heat_kernel_matrix", None),
}


def _args(name, spec):
    if spec is not None:
        return spec
    m = int(name.split()[-1].split("x")[0])
    xi = 20.0 * (np.arange(1, m + 1) / (m + 1)) ** 2
    return (0.1, xi, xi)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if _backend.NAME != "compiled":
        print("compiled core unavailable; only the fallback can be timed")
    print(f"{'case':<32}{'compiled [ms]':>15}{'fallback [ms]':>15}{'speedup':>10}  match")
    for name, (fn, spec) in CASES.items():
        a = _args(name, spec)
        slow = getattr(_fallback, fn)
        t_slow = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat))
        if _backend.NAME == "compiled":
            fast = getattr(_backend.core, fn)
            t_fast = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat))
            ref = slow(*a)
            same = np.max(np.abs(fast(*a) - ref)) <= 1e-14 * np.max(np.abs(ref))
            print(f"{name:<32}{1e3 * t_fast:>15.2f}{1e3 * t_slow:>15.2f}{t_slow / t_fast:>10.1f}  {same}")
        else:
            print(f"{name:<32}{'-':>15}{1e3 * t_slow:>15.2f}{'-':>10}  -")


if __name__ == "__main__":
    main()
