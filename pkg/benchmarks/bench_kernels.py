"""Time each hot kernel under the numba and pure-numpy backends.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

The numba timings exclude JIT compilation (one warm-up call per kernel).
The same comparison for a full pipeline is available by running any command
with ``QCDISTORT_DISABLE_NUMBA=1`` set.
"""

import argparse
import json
import time

import numpy as np

from qcdistort import kernels


def _cases(scale, rng):
    n = int(200_000 * scale)
    ix = rng.integers(0, 1 << 12, n)
    iy = rng.integers(0, 1 << 12, n)
    codes = np.sort(kernels.numpy_backend.morton_encode(ix, iy))
    vals = rng.random(n)
    grid = rng.standard_normal((512, 512)) + 1j * rng.standard_normal((512, 512))
    u = rng.uniform(0, 512, n)
    v = rng.uniform(0, 512, n)
    nb = int(2_000 * scale)
    lo = rng.integers(0, 500, nb)
    span = rng.integers(1, 12, nb)
    bx = rng.random(int(5_000 * scale))
    by = rng.random(bx.size)
    bs = rng.random(bx.size) * 0.01
    order = np.argsort(bx)
    bx, by, bs = bx[order], by[order], bs[order]
    return {
        "morton_encode": lambda b: b.morton_encode(ix, iy),
        "morton_decode": lambda b: b.morton_decode(codes),
        "reduce_runs": lambda b: b.reduce_runs(codes >> 4, vals),
        "box_accumulate": lambda b: b.box_accumulate(ix >> 4, iy >> 4, vals, 256, 256),
        "rect_cover_count": lambda b: b.rect_cover_count(lo, lo + span, lo[::-1], lo[::-1] + span, 512, 512),
        "bilinear_periodic": lambda b: b.bilinear_periodic(grid, u, v),
        "count_touching_pairs": lambda b: b.count_touching_pairs(bx, by, bx + bs, by + bs),
    }


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0)
    parser.add_argument("--json", action="store_true", help="print results as JSON")
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = _cases(args.scale, rng)
    backends = [kernels.numpy_backend] + ([kernels.numba_backend] if kernels.numba_backend else [])
    rows = []
    for name, case in cases.items():
        row = {"kernel": name}
        for b in backends:
            case(b)  # warm-up / JIT
            row[b.name] = _time(lambda: case(b), args.repeat)
        if "numba" in row:
            row["speedup"] = row["numpy"] / row["numba"]
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=1))
        return rows
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for row in rows:
        nb = row.get("numba", float("nan"))
        print(f"{row['kernel']:<22}{row['numpy'] * 1e3:>12.2f}{nb * 1e3:>12.2f}{row.get('speedup', float('nan')):>10.1f}")
    return rows


if __name__ == "__main__":
    main()
