"""Time the compiled and pure-numpy kernels on gate-sized problems.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the median wall time of each backend, the
speed-up, and the largest difference between their outputs.
"""
import argparse
import math
import statistics
import time

import numpy as np

from ionbell import kernels
from ionbell.dynamics import ladder_coefficients, DriveConfig
from ionbell.crystal import MotionalMode


def _time(fn, repeat):
    out, times = None, []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def cases():
    dg = 1 / 13.7e-6
    duration = 13.7e-6
    n = 2 * int(duration * 2.07e6 * 100)
    h = duration / n
    coupling = np.ascontiguousarray(np.full(n + 1, 2.5e4))
    yield "trapezoid_loop", lambda k: k.trapezoid_loop(0.0, h, coupling, 2 * math.pi * dg, 0.3)

    u = np.ascontiguousarray(np.linspace(0, duration, n + 1))
    yield "envelope_samples", lambda k: k.envelope_samples(1, u, duration, 1e-6)

    mode = MotionalMode(2.0e6, 0.6811, math.sqrt(1 - 0.6811**2), 0.121, 0.126)
    drive = DriveConfig(2.0e6 + dg, dg, 1.0e5, -0.9e5, 0.8e5, -0.75e5)
    ladder = np.ascontiguousarray(ladder_coefficients(drive, mode, -1, 1, 30))
    y0 = np.eye(31, dtype=complex)
    yield "propagate_ladder", lambda k: k.propagate_ladder(
        y0, ladder, 2 * math.pi * dg, 0.0, 0, 0.0, duration, 0.0, 0.0, duration,
        1e-10, 1e-12, duration * 1e-3, 2_000_000)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    compiled = kernels.compiled_backend()
    if compiled is None:
        print("compiled extension not built; only the python backend is available")
    print(f"{'kernel':<18} {'python (s)':>11} {'cython (s)':>11} {'speed-up':>9} {'max diff':>10}")
    for name, call in cases():
        tp, outp = _time(lambda: call(kernels.python_backend), args.repeat)
        if compiled is None:
            print(f"{name:<18} {tp:11.4f} {'-':>11} {'-':>9} {'-':>10}")
            continue
        tc, outc = _time(lambda: call(compiled), args.repeat)
        a = outp[0] if isinstance(outp, tuple) else outp
        b = outc[0] if isinstance(outc, tuple) else outc
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"{name:<18} {tp:11.4f} {tc:11.4f} {tp / tc:9.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
