"""Benchmark the compiled triplet kernel against the numpy reference.

The triplet sum dominates sweep simulation cost (one evaluation per probe
step per pixel per resonance line), so this is the number that decides how
long a full-sensor acquisition takes. Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --pixels 60800 --probes 128
    python3 benchmarks/bench_kernels.py --end-to-end
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from qdisa.kernels import get_impl


def bench_kernel(n_probes: int, n_pixels: int, repeats: int):
    rng = np.random.default_rng(12)
    probes = rng.uniform(1.79e9, 1.83e9, n_probes)
    centers = rng.uniform(1.79e9, 1.83e9, n_pixels)
    hwhm = rng.uniform(0.5e6, 3e6, n_pixels)
    out = np.empty((n_probes, n_pixels))

    results = {}
    for name in ("reference", "fast"):
        impl = get_impl(name)
        impl.triplet_sum(probes, centers, hwhm, 2.14e6, out)  # warm up
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            impl.triplet_sum(probes, centers, hwhm, 2.14e6, out)
            best = min(best, time.perf_counter() - t0)
        results[name] = (best, out.copy())

    t_ref, out_ref = results["reference"]
    t_fast, out_fast = results["fast"]
    identical = np.array_equal(out_ref, out_fast)
    n_eval = n_probes * n_pixels
    print(f"triplet_sum, {n_probes} probes x {n_pixels} pixels "
          f"({n_eval/1e6:.1f}M evaluations, best of {repeats}):")
    print(f"  reference  {t_ref*1e3:8.2f} ms   {n_eval/t_ref/1e6:8.1f} M/s")
    print(f"  fast       {t_fast*1e3:8.2f} ms   {n_eval/t_fast/1e6:8.1f} M/s")
    print(f"  speedup    {t_ref/t_fast:8.2f} x   bit-identical: {identical}")
    if not identical:
        sys.exit("backends diverged; the build is broken")


_SWEEP_SNIPPET = """
import time
from qdisa import pipeline
from qdisa.scenarios import load_bundled
cfg = load_bundled("dynamic_range")
pipeline.acquire_sweep(cfg, noiseless=True)  # warm caches, JIT-free
t0 = time.perf_counter()
pipeline.acquire_sweep(cfg, noiseless=True)
print(f"{time.perf_counter() - t0:.3f}")
"""


def bench_end_to_end():
    """Full-sensor noiseless sweep (76x800 px, 121 steps) per backend.

    The backend is fixed at import, so each run lives in a subprocess.
    """
    print("end-to-end noiseless sweep, bundled dynamic_range scenario:")
    times = {}
    for name in ("reference", "fast"):
        env = dict(os.environ, QDISA_KERNEL=name)
        out = subprocess.run(
            [sys.executable, "-c", _SWEEP_SNIPPET],
            env=env, capture_output=True, text=True, check=True,
        )
        times[name] = float(out.stdout.strip().splitlines()[-1])
        print(f"  {name:<10} {times[name]*1e3:8.0f} ms")
    print(f"  speedup    {times['reference']/times['fast']:8.2f} x")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--probes", type=int, default=64,
                        help="probe steps per call (default 64)")
    parser.add_argument("--pixels", type=int, default=60800,
                        help="pixels per call (default 60800, the full sensor)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats, best is kept (default 5)")
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time a full bundled sweep per backend")
    args = parser.parse_args(argv)

    bench_kernel(args.probes, args.pixels, args.repeats)
    if args.end_to_end:
        bench_end_to_end()


if __name__ == "__main__":
    main()
