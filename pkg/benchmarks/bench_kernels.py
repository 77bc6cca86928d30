"""Time the compiled and pure-Python ``quad_chain`` kernels on the same inputs.

    python benchmarks/bench_kernels.py [--steps 200000] [--batch 10] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from cyclebatch import _kernels_py

try:
    from cyclebatch import _kernels
except ImportError:
    _kernels = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--batch", type=int, nargs="+", default=[1, 10, 100])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    centers = rng.standard_normal(1000)
    backends = {"python": _kernels_py.quad_chain}
    if _kernels is not None:
        backends["compiled"] = _kernels.quad_chain
    else:
        print("compiled extension not built; timing the fallback only")

    print(f"{'batch':>6} {'backend':>9} {'best ms':>9} {'Msteps/s':>9}")
    for b in args.batch:
        idx = rng.integers(0, len(centers), size=(args.steps, b), dtype=np.int64)
        outs = {}
        for name, fn in backends.items():
            out = np.empty(args.steps)
            best = min(timeit.repeat(lambda: fn(centers, idx, 0.0, 0.05, out),
                                     number=1, repeat=args.repeat))
            outs[name] = out.copy()
            print(f"{b:>6} {name:>9} {best * 1e3:>9.2f} {args.steps / best / 1e6:>9.2f}")
        if len(outs) == 2:
            diff = np.max(np.abs(outs["python"] - outs["compiled"]))
            print(f"{'':>6} max |python - compiled| = {diff:.2e}")


if __name__ == "__main__":
    main()
