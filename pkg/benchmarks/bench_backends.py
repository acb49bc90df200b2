#!/usr/bin/env python3
"""Compare the compiled stepper against the pure-python fallback.

Times the three workloads that dominate real use: monodromy transport on the
ABC field, density-weighted transport on the conjugated torus flow, and
section-return events on the shear field.  Run from anywhere:

    python benchmarks/bench_backends.py [--repeat 5] [--t 25.0]
"""

import argparse
import time

import numpy as np

from solenoid import PeriodicPlane, advance, catalog, cross_section_event
from solenoid.backend import HAVE_COMPILED


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3, help="timing repetitions, best-of")
    ap.add_argument("--t", type=float, default=25.0, help="integration horizon")
    args = ap.parse_args()

    backends = ["python"] + (["compiled"] if HAVE_COMPILED else [])
    if not HAVE_COMPILED:
        print("note: compiled extension not built; timing the fallback only\n")

    jobs = []
    abc = catalog("abc")
    x0 = np.array([0.3, 1.1, 2.2])
    jobs.append(("abc monodromy advance", lambda prefer: advance(
        abc.field, x0, args.t, prefer=prefer)))
    conj = catalog("conjugated_torus")
    jobs.append(("conjugated advance", lambda prefer: advance(
        conj.field, x0, args.t, prefer=prefer)))
    shear = catalog("shear_torus")
    plane = PeriodicPlane(axis=0, offset=0.0, period=2 * np.pi)
    jobs.append(("shear return event", lambda prefer: cross_section_event(
        shear.field, np.array([0.0, 0.0, 0.7]), plane, direction=+1, prefer=prefer)))

    width = max(len(name) for name, _ in jobs)
    for name, job in jobs:
        row = [name.ljust(width)]
        times = {}
        steps = None
        for prefer in backends:
            dt, out = _time(lambda: job(prefer), args.repeat)
            times[prefer] = dt
            steps = getattr(out, "accepted_steps", None)
            per = f" ({1e6 * dt / steps:7.1f} us/step)" if steps else ""
            row.append(f"{prefer}: {1e3 * dt:8.2f} ms{per}")
        if len(backends) == 2:
            row.append(f"speedup x{times['python'] / times['compiled']:.1f}")
        print("  ".join(row))


if __name__ == "__main__":
    main()
