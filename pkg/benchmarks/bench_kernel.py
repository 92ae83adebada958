"""Benchmark the compiled simulation kernel against the NumPy fallback.

Runs the same stochastic cell-chain realization through both
implementations, checks that the saved states agree bit-for-bit, and
reports wall-clock timings.

Usage: python benchmarks/bench_kernel.py [n_repeats]
"""

import sys
import time

import numpy as np

from cellpde._kernel import _fallback
from cellpde.discrete import (
    CellState,
    Free,
    Hookean,
    Logistic,
    SimConfig,
    _kernel_args,
    _window_count,
)

try:
    from cellpde._kernel import _core
except ImportError:
    _core = None


def _workload():
    config = SimConfig(
        eta=1.0,
        force=Hookean(50.0, 0.2),
        boundary=Free(),
        save_times=np.linspace(0.0, 15.0, 151),
        proliferation=Logistic(0.15, 15.0),
        dt=1e-2,
    )
    initial = CellState(0.0, np.linspace(0.0, 5.0, 60))
    n_windows = _window_count(config, 0.0)
    rng = np.random.default_rng(1234)
    kw = dict(
        _kernel_args(config),
        n_windows=n_windows,
        u_event=rng.random(n_windows),
        u_select=rng.random(n_windows),
    )
    return initial.x, config.times, kw


def _time(fn, x0, times, kw, repeats):
    best = np.inf
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(x0.copy(), 0.0, times, **kw)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    repeats = int(sys.argv[1]) if len(sys.argv) > 1 else 3
    x0, times, kw = _workload()

    t_slow, slow = _time(_fallback.simulate_path, x0, times, kw, repeats)
    print(f"fallback ({_fallback.IMPL}): {t_slow:.3f} s per realization")

    if _core is None:
        print("compiled kernel not built; skipping comparison")
        return

    t_fast, fast = _time(_core.simulate_path, x0, times, kw, repeats)
    print(f"compiled ({_core.IMPL}): {t_fast:.3f} s per realization")
    print(f"speedup: {t_slow / t_fast:.1f}x")

    exact = len(fast) == len(slow) and all(
        np.array_equal(a, b) for a, b in zip(fast, slow)
    )
    print(f"bit-exact agreement: {exact}")
    if not exact:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
