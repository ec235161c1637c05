"""Time the numba and numpy backends on the three hot loops.

    python3 benchmarks/bench_backends.py [--repeat 3] [--scale 1.0]

Each case is run once per backend to warm up (numba compiles on first call),
then timed; the table reports the best of ``--repeat`` runs and the largest
difference between the two backends' outputs, relative to max(1, |value|).
The adaptive quadrature may stop at a different level per backend, so the
potential case agrees only to within its reported error estimates.
"""
import argparse
import math
import timeit

import numpy as np

from miranda_layers import _accel
from miranda_layers.boundary import ellipse, polygon, winding_numbers
from miranda_layers.kernels import riesz
from miranda_layers.modulus import OMEGA_1, SampledFunction, seminorm_estimate
from miranda_layers.potential import make_density, potential_batch


def case_potential(scale):
    b = ellipse(1.0, 0.5)
    k = riesz(1)
    mu = make_density("abs_coord 1", b)
    n = max(8, int(200 * scale))
    s = np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    t = -np.logspace(-6, -1, n)
    pts = b.param(s) + t[:, None] * b.normals(s)
    return f"potential_batch ({n} near-boundary points)", lambda: potential_batch(b, k, mu, pts, 1e-11).values


def case_seminorm(scale):
    rng = np.random.default_rng(0)
    n = max(16, int(3000 * scale))
    pts = rng.uniform(-1.0, 1.0, (n, 2))
    f = SampledFunction(pts, np.sin(3 * pts[:, 0]) * np.abs(pts[:, 1]))
    pairs = n * (n - 1) // 2
    return f"omega_1 seminorm ({pairs} pairs)", lambda: seminorm_estimate(f, OMEGA_1, max_pairs=pairs).value


def case_winding(scale):
    rng = np.random.default_rng(1)
    verts = polygon(ellipse(1.0, 0.5), 4096)
    n = max(100, int(100_000 * scale))
    pts = rng.uniform(-1.2, 1.2, (n, 2))
    return f"winding numbers ({n} points x 4096 edges)", lambda: winding_numbers(verts, pts)


def run_case(make, scale, repeat):
    label, fn = make(scale)
    times, outputs = {}, {}
    for backend in (True, False):
        if backend and not _accel.HAVE_NUMBA:
            continue
        _accel.USE_NUMBA = backend
        outputs[backend] = np.asarray(fn(), dtype=float)
        times[backend] = min(timeit.repeat(fn, number=1, repeat=repeat))
    if len(outputs) == 2:
        a, b = outputs[True], outputs[False]
        diff = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))
    else:
        diff = math.nan
    return label, times.get(True, math.nan), times[False], diff


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--scale", type=float, default=1.0, help="multiply every problem size")
    args = p.parse_args(argv)
    saved = _accel.USE_NUMBA
    try:
        rows = [run_case(c, args.scale, args.repeat) for c in (case_potential, case_seminorm, case_winding)]
    finally:
        _accel.USE_NUMBA = saved
    print(f"{'case':<46} {'numba s':>10} {'numpy s':>10} {'speedup':>8} {'rel diff':>10}")
    for label, tn, tp, diff in rows:
        print(f"{label:<46} {tn:>10.4f} {tp:>10.4f} {tp / tn:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
