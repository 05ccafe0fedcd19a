"""Compare the compiled and numpy backends of the Monte Carlo inner loops.

    python benchmarks/bench_kernels.py [--batch 512] [--steps 64] [--repeat 3]
"""

import argparse
import time

import numpy as np

from pamlab import kernels
from pamlab.feynman_kac import sample_ensemble, time_cell_weights


def best_time(func, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--steps", type=int, default=64)
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    ens = sample_ensemble(args.n, 0.25, args.steps, seed=0, batch=args.batch)
    mid = ens.midpoints()
    ct = time_cell_weights(0.25, args.steps, 0.5)
    cases = {
        "pair_energy/riesz": lambda b: kernels.pair_energy_batch(
            mid, ct, kernels.RIESZ, 0.5, 0.01, 2.0, 0.0, backend=b),
        "pair_energy/delta": lambda b: kernels.pair_energy_batch(
            mid, ct, kernels.DELTA, 1.0, 0.0, 0.0, 0.5 * ens.dt, backend=b),
        "occupation": lambda b: kernels.occupation_batch(
            ens.paths[:, :, 1:, 0], 0.05, ens.dt, backend=b),
    }
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"batch={args.batch} n={args.n} steps={args.steps} (best of {args.repeat})")
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, func in cases.items():
        times = [best_time(lambda: func(b), args.repeat) for b in backends]
        ref = func("python")
        if len(backends) > 1:
            assert np.allclose(ref, func("cython"), rtol=1e-12)
        speed = f"{times[0] / times[-1]:>9.1f}x" if len(times) > 1 else f"{'n/a':>10}"
        print(f"{name:<20}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
