#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Workloads sized like real labeling: full patches with several overlapping
instance masks, and patch-sized RLE codec traffic.

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""
import argparse
import math
import time

import numpy as np

import seeker._kernels_py as pure

try:
    import seeker._kernels as native
except ImportError:
    native = None


def overlapping_stack(rng, n_masks=8, size=320):
    """Elliptical blobs clustered so plenty of pixels are contested."""
    stack = np.zeros((n_masks, size, size), dtype=np.uint8)
    px = np.empty(n_masks)
    py = np.empty(n_masks)
    yy, xx = np.mgrid[0:size, 0:size]
    cx0, cy0 = size / 2, size / 2
    for i in range(n_masks):
        ang = rng.uniform(0, 2 * math.pi)
        cx = cx0 + rng.uniform(0, size / 6) * math.cos(ang)
        cy = cy0 + rng.uniform(0, size / 6) * math.sin(ang)
        a = rng.uniform(size / 8, size / 4)
        b = rng.uniform(size / 10, size / 5)
        mask = (((xx + 0.5 - cx) / a) ** 2 + ((yy + 0.5 - cy) / b) ** 2) <= 1.0
        stack[i] = mask
        px[i], py[i] = cx, cy
    return stack, px, py


def bench(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--size", type=int, default=320)
    ap.add_argument("--masks", type=int, default=8)
    ap.add_argument("--patches", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    workload = [overlapping_stack(rng, args.masks, args.size)
                for _ in range(args.patches)]
    rle_masks = [np.ascontiguousarray(stack[0].ravel()) for stack, _, _ in workload]

    impls = [("numpy fallback", pure)]
    if native is not None:
        impls.append(("cython native", native))
    else:
        print("compiled extension not available; benchmarking fallback only")

    print(f"workload: {args.patches} patches of {args.size}x{args.size}, "
          f"{args.masks} overlapping masks each, best of {args.repeats}\n")
    print(f"{'kernel':<18}{'impl':<18}{'time':>10}")
    results = {}
    for name, impl in impls:
        def run_assign(impl=impl):
            for stack, px, py in workload:
                impl.assign_nearest(stack.copy(), px.copy(), py.copy())

        t = bench(run_assign, args.repeats)
        results[("assign_nearest", name)] = t
        print(f"{'assign_nearest':<18}{name:<18}{t * 1e3:>8.1f} ms")

    for name, impl in impls:
        def run_rle(impl=impl):
            for flat in rle_masks:
                runs = impl.rle_encode(flat)
                impl.rle_decode(np.asarray(runs, dtype=np.int64), flat.size)

        t = bench(run_rle, args.repeats)
        results[("rle codec", name)] = t
        print(f"{'rle codec':<18}{name:<18}{t * 1e3:>8.1f} ms")

    if native is not None:
        for kernel in ("assign_nearest", "rle codec"):
            ratio = results[(kernel, "numpy fallback")] / results[(kernel, "cython native")]
            print(f"\n{kernel}: native is {ratio:.1f}x the fallback")

    # Cross-check: identical outputs on the benchmark workload.
    if native is not None:
        stack, px, py = workload[0]
        a = np.asarray(native.assign_nearest(stack.copy(), px, py))
        b = pure.assign_nearest(stack.copy(), px, py)
        assert (a == b).all(), "implementations disagree"
        print("\noutputs verified identical across implementations")


if __name__ == "__main__":
    main()
