"""Compiled vs numpy kernels: periodogram scan, LM fit, and a full trace fit.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import timeit

import numpy as np

from rabitomo import _kernels
from rabitomo.fitting import fit_trace


def _problem(seed=0, n=40):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n)
    y = 0.1 + np.cos(2 * math.pi * 2.0 * t + 0.7) + rng.normal(0, 0.2, n)
    return t, y


def bench(mod, repeat):
    t, y = _problem()
    freqs = np.linspace(0.5, 8.0, 2048)
    p0 = np.array([0.0, 0.9, 2.05, 0.6, 0.0])
    free = np.array([0, 1, 2, 3], dtype=np.int64)
    out = {}
    out["periodogram (2048 freqs)"] = min(timeit.repeat(lambda: mod.periodogram(t, y, freqs),
                                                        number=repeat, repeat=3)) / repeat
    out["lm_fit (4 params)"] = min(timeit.repeat(lambda: mod.lm_fit(t, y, p0, free, 200, 1e-10, 1e-10),
                                                 number=repeat, repeat=3)) / repeat

    class Trace:
        tau_values = t * 4e-7
        signal = 1e-11 * (1 + 0.25 * y)
        nominal_frequency = 5e6

    # route the public fitter through this backend
    saved = _kernels.periodogram, _kernels.lm_fit
    _kernels.periodogram, _kernels.lm_fit = mod.periodogram, mod.lm_fit
    try:
        out["fit_trace (end to end)"] = min(timeit.repeat(lambda: fit_trace(Trace), number=repeat,
                                                          repeat=3)) / repeat
    finally:
        _kernels.periodogram, _kernels.lm_fit = saved
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    found = _kernels.backends()
    results = {name: bench(mod, args.repeat) for name, mod in found.items()}
    print(f"default backend: {_kernels.BACKEND}")
    names = list(results)
    print(f"{'kernel':28s}" + "".join(f"{n:>14s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for k in results["python"]:
        row = f"{k:28s}" + "".join(f"{results[n][k] * 1e6:12.1f}us" for n in names)
        if "cython" in results:
            row += f"{results['python'][k] / results['cython'][k]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
