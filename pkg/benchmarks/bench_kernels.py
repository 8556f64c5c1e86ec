"""Time the numpy and numba flavours of each hot kernel, plus one tracking run per path.

    python3 benchmarks/bench_kernels.py [--repeat N] [--skip-tracking]

Inputs are sized like a real frame: a search window resampled from a 320x240
image, cell histograms over it, and partition costs for a 10-vertex graph.
The end-to-end comparison runs the tracker in a child process with
IATRACK_DISABLE_NUMBA set, since the flag is read at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from iatrack import _accel
from iatrack.multicut import restricted_growth_strings


def cases(rng):
    frame = rng.uniform(0, 1, (240, 320, 3))
    window = rng.uniform(0, 1, (128, 64, 3))
    gray = window.mean(axis=2)
    rgs = restricted_growth_strings(10)
    n_edges = 30
    eu = rng.integers(0, 10, n_edges).astype(np.int64)
    ev = (eu + 1 + rng.integers(0, 9, n_edges)) % 10
    return {
        "resample_bilinear": (frame, 101.3, 55.8, 0.94, 0.94, 128, 64),
        "orientation_cells": (gray, 4, 9),
        "hue_cells": (window, 4, 8, 0.05),
        "partition_costs": (rgs, eu, ev.astype(np.int64), rng.normal(size=n_edges)),
    }


TRACK_SNIPPET = """
import time
from iatrack.synthetic import crossing, generate_synthetic
from iatrack.pipeline import TrackerConfig, run
from iatrack.cli import load_policies
from iatrack.config import RunConfig
seq = generate_synthetic(crossing(0))
pol = load_policies(RunConfig())
run(seq.frames[:5], [d for d in seq.detections if d.frame <= 5], TrackerConfig(), pol)  # warm-up / jit
t = time.perf_counter()
run(seq.frames, seq.detections, TrackerConfig(), pol)
print(f"{time.perf_counter() - t:.3f}")
"""


def tracking_seconds(disable_numba):
    env = dict(os.environ)
    if disable_numba:
        env["IATRACK_DISABLE_NUMBA"] = "1"
    else:
        env.pop("IATRACK_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", TRACK_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-tracking", action="store_true")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    inputs = cases(rng)
    print(f"{'kernel':<20} {'numpy ms':>10} {'numba ms':>10} {'speed-up':>9}")
    for name, (py, jit) in _accel.KERNELS.items():
        a = inputs[name]
        jit(*a)  # compile outside the timed region
        number = 3
        t_py = min(timeit.repeat(lambda: py(*a), number=number, repeat=args.repeat)) / number
        t_jit = min(timeit.repeat(lambda: jit(*a), number=number, repeat=args.repeat)) / number
        print(f"{name:<20} {t_py * 1e3:10.3f} {t_jit * 1e3:10.3f} {t_py / t_jit:8.1f}x")

    if not args.skip_tracking:
        slow, fast = tracking_seconds(True), tracking_seconds(False)
        print(f"\ncrossing-0, 150 frames: numpy {slow:.2f}s, numba {fast:.2f}s ({slow / fast:.1f}x)")


if __name__ == "__main__":
    main()
