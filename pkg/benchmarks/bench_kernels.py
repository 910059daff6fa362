"""Time the fused pairwise relu-sum kernel: compiled extension vs numpy fallback.

    python3 benchmarks/bench_kernels.py [--batch 64] [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from relmod.diffcore import kernels


def bench(fn, args, repeat: int) -> float:
    fn(*args)  # warm-up
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=64, help="images per call")
    ap.add_argument("--cells", type=int, default=64, help="K = N * N cells per image")
    ap.add_argument("--hidden", type=int, default=128, help="hidden width of the pair embedder")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    shape = (args.batch, args.cells, args.hidden)
    inputs = (rng.normal(size=shape), rng.normal(size=shape), rng.normal(size=args.hidden), True)
    result = {"shape": list(shape), "pairs_per_image": args.cells * (args.cells + 1) // 2,
              "python_s": bench(kernels.py_pair_relu_sum, inputs, args.repeat)}
    if kernels.ext_pair_relu_sum is None:
        result["cython_s"] = None
        print("compiled kernel not built; reporting the numpy fallback only", file=sys.stderr)
    else:
        result["cython_s"] = bench(kernels.ext_pair_relu_sum, inputs, args.repeat)
        result["speedup"] = result["python_s"] / result["cython_s"]
        ref = kernels.py_pair_relu_sum(*inputs)
        got = kernels.ext_pair_relu_sum(*inputs)
        result["max_abs_diff"] = max(float(np.abs(a - b).max()) for a, b in zip(ref, got))
    print(json.dumps(result, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
