"""Compare the compiled and numpy kernels on the hot paths of an IPA sweep.

Run with ``python3 benchmarks/bench_kernels.py``. Reports the best of a few
repeats per kernel and backend, and the maximum disagreement between backends.
"""

import argparse
import time

import numpy as np

from iva_lqpqm import auxiva, synthbench
from iva_lqpqm._backend import available_backends, get_kernels


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def secular_inputs(rng, batch, d):
    phi = np.sort(rng.exponential(size=(batch, d)), axis=1)
    vsq = rng.exponential(size=(batch, d))
    z = rng.exponential(size=batch)
    return phi, vsq, z


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    cases = []
    for batch, d in ((2049, 3), (2049, 7), (20000, 3)):
        phi, vsq, z = secular_inputs(rng, batch, d)
        cases.append((f"secular B={batch} d={d}", lambda k, a=(phi, vsq, z): k.solve_secular_batch(*a)[0]))
    for F, M, N in ((6, 4, 5000), (513, 2, 160)):
        gt = synthbench.make_synthetic_mixture(F, M, N, rng)
        w = rng.exponential(size=(M, N))
        cases.append((f"covariance F={F} M={M} N={N}", lambda k, a=(gt.observations, w): k.weighted_covariance(*a)))

    backends = available_backends()
    print(f"{'kernel':32s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}{'max diff':>12s}")
    for name, fn in cases:
        times, outs = {}, {}
        for b in backends:
            k = get_kernels(b)
            outs[b] = fn(k)
            times[b] = best_time(lambda: fn(k), args.repeat)
        row = f"{name:32s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) == 2:
            diff = np.max(np.abs(outs["cython"] - outs["python"]) / np.maximum(1.0, np.abs(outs["python"])))
            row += f"{times['python'] / times['cython']:9.1f}x{diff:12.1e}"
        print(row)

    # end-to-end: one IPA sweep at F=6, M=4, N=5000
    gt = synthbench.make_synthetic_mixture(6, 4, 5000, rng)
    init = synthbench.pca_init(gt.observations)
    for b in backends:
        t = best_time(
            lambda: auxiva.run(gt.observations, "ipa", iterations=10, init=init, backend=b, track_residual=False),
            max(1, args.repeat // 2),
        )
        print(f"AuxIVA-IPA 10 iterations F=6 M=4 N=5000 [{b}]: {t:.3f} s")


if __name__ == "__main__":
    main()
