"""Hot numeric loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``QCDISTORT_DISABLE_NUMBA`` is unset (or ``0``).  Both backends are
always importable as :data:`numpy_backend` and :data:`numba_backend` so the
test-suite and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

import os
from types import SimpleNamespace

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

_flag = os.environ.get("QCDISTORT_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")

MORTON_BITS = 24


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _spread_bits(v):
    v = v.astype(np.int64) & 0xFFFFFF
    v = (v | (v << 16)) & 0x0000FFFF0000FFFF
    v = (v | (v << 8)) & 0x00FF00FF00FF00FF
    v = (v | (v << 4)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v << 2)) & 0x3333333333333333
    v = (v | (v << 1)) & 0x5555555555555555
    return v


def _compact_bits(v):
    v = v & 0x5555555555555555
    v = (v | (v >> 1)) & 0x3333333333333333
    v = (v | (v >> 2)) & 0x0F0F0F0F0F0F0F0F
    v = (v | (v >> 4)) & 0x00FF00FF00FF00FF
    v = (v | (v >> 8)) & 0x0000FFFF0000FFFF
    v = (v | (v >> 16)) & 0x00000000FFFFFFFF
    return v


def _np_morton_encode(ix, iy):
    ix = np.asarray(ix, dtype=np.int64)
    iy = np.asarray(iy, dtype=np.int64)
    return _spread_bits(ix) | (_spread_bits(iy) << 1)


def _np_morton_decode(codes):
    codes = np.asarray(codes, dtype=np.int64)
    return _compact_bits(codes), _compact_bits(codes >> 1)


def _np_reduce_runs(keys, values):
    """Sum ``values`` over runs of equal consecutive ``keys`` (keys sorted)."""
    keys = np.asarray(keys)
    values = np.asarray(values, dtype=np.float64)
    if keys.size == 0:
        return keys.copy(), values.copy()
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    return keys[starts], np.add.reduceat(values, starts)


def _np_box_accumulate(kx, ky, values, nkx, nky):
    flat = np.asarray(ky, dtype=np.int64) * nkx + np.asarray(kx, dtype=np.int64)
    values = np.asarray(values)
    if np.iscomplexobj(values):
        re = np.bincount(flat, weights=values.real, minlength=nkx * nky)
        im = np.bincount(flat, weights=values.imag, minlength=nkx * nky)
        return (re + 1j * im).reshape(nky, nkx)
    out = np.bincount(flat, weights=values.astype(np.float64), minlength=nkx * nky)
    return out.reshape(nky, nkx)


def _np_rect_cover_count(x_lo, x_hi, y_lo, y_hi, nkx, nky):
    """Count, per cell of an ``nky x nkx`` array, the inclusive index rectangles covering it.

    Rectangles are clipped to the array; empty ones are ignored.
    """
    x_lo = np.clip(np.asarray(x_lo, dtype=np.int64), 0, nkx)
    x_hi = np.clip(np.asarray(x_hi, dtype=np.int64), -1, nkx - 1)
    y_lo = np.clip(np.asarray(y_lo, dtype=np.int64), 0, nky)
    y_hi = np.clip(np.asarray(y_hi, dtype=np.int64), -1, nky - 1)
    ok = (x_lo <= x_hi) & (y_lo <= y_hi)
    x_lo, x_hi, y_lo, y_hi = x_lo[ok], x_hi[ok], y_lo[ok], y_hi[ok]
    diff = np.zeros((nky + 1, nkx + 1), dtype=np.int64)
    np.add.at(diff, (y_lo, x_lo), 1)
    np.add.at(diff, (y_lo, x_hi + 1), -1)
    np.add.at(diff, (y_hi + 1, x_lo), -1)
    np.add.at(diff, (y_hi + 1, x_hi + 1), 1)
    return np.cumsum(np.cumsum(diff, axis=0), axis=1)[:nky, :nkx]


def _np_bilinear_periodic(grid, u, v):
    """Periodic bilinear interpolation at fractional (column, row) indices ``u, v``."""
    ny, nx = grid.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = u - u0
    fv = v - v0
    i0 = u0.astype(np.int64) % nx
    j0 = v0.astype(np.int64) % ny
    i1 = (i0 + 1) % nx
    j1 = (j0 + 1) % ny
    return ((1 - fu) * (1 - fv) * grid[j0, i0] + fu * (1 - fv) * grid[j0, i1]
            + (1 - fu) * fv * grid[j1, i0] + fu * fv * grid[j1, i1])


def _np_count_touching_pairs(x0, y0, x1, y1):
    """Pairs of closed boxes that intersect; boxes must be sorted by ``x0``."""
    count = 0
    n = x0.shape[0]
    stops = np.searchsorted(x0, x1, side="right")
    for i in range(n):
        j = stops[i]
        if j <= i + 1:
            continue
        count += int(np.count_nonzero((y0[i + 1:j] <= y1[i]) & (y0[i] <= y1[i + 1:j])))
    return count


numpy_backend = SimpleNamespace(
    name="numpy",
    morton_encode=_np_morton_encode,
    morton_decode=_np_morton_decode,
    reduce_runs=_np_reduce_runs,
    box_accumulate=_np_box_accumulate,
    rect_cover_count=_np_rect_cover_count,
    bilinear_periodic=_np_bilinear_periodic,
    count_touching_pairs=_np_count_touching_pairs,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_morton_encode_loop(ix, iy, out):
        for n in range(ix.shape[0]):
            code = 0
            a = ix[n]
            b = iy[n]
            for bit in range(MORTON_BITS):
                code |= ((a >> bit) & 1) << (2 * bit)
                code |= ((b >> bit) & 1) << (2 * bit + 1)
            out[n] = code

    @njit(cache=True)
    def _nb_morton_decode_loop(codes, ox, oy):
        for n in range(codes.shape[0]):
            c = codes[n]
            a = 0
            b = 0
            for bit in range(MORTON_BITS):
                a |= ((c >> (2 * bit)) & 1) << bit
                b |= ((c >> (2 * bit + 1)) & 1) << bit
            ox[n] = a
            oy[n] = b

    @njit(cache=True)
    def _nb_reduce_runs_loop(keys, values, okeys, osums):
        m = -1
        for n in range(keys.shape[0]):
            if m < 0 or keys[n] != okeys[m]:
                m += 1
                okeys[m] = keys[n]
                osums[m] = values[n]
            else:
                osums[m] += values[n]
        return m + 1

    @njit(cache=True)
    def _nb_box_accumulate_loop(kx, ky, values, out):
        for n in range(kx.shape[0]):
            out[ky[n], kx[n]] += values[n]

    @njit(cache=True)
    def _nb_rect_cover_loop(x_lo, x_hi, y_lo, y_hi, out):
        nky, nkx = out.shape
        diff = np.zeros((nky + 1, nkx + 1), dtype=np.int64)
        for r in range(x_lo.shape[0]):
            a = max(x_lo[r], 0)
            b = min(x_hi[r], nkx - 1)
            c = max(y_lo[r], 0)
            d = min(y_hi[r], nky - 1)
            if a > b or c > d:
                continue
            diff[c, a] += 1
            diff[c, b + 1] -= 1
            diff[d + 1, a] -= 1
            diff[d + 1, b + 1] += 1
        for j in range(nky):
            run = 0
            for i in range(nkx):
                run += diff[j, i]
                out[j, i] = run + (out[j - 1, i] if j > 0 else 0)

    @njit(cache=True)
    def _nb_bilinear_loop(grid, u, v, out):
        ny, nx = grid.shape
        for n in range(u.shape[0]):
            u0 = np.floor(u[n])
            v0 = np.floor(v[n])
            fu = u[n] - u0
            fv = v[n] - v0
            i0 = int(u0) % nx
            j0 = int(v0) % ny
            i1 = (i0 + 1) % nx
            j1 = (j0 + 1) % ny
            out[n] = ((1 - fu) * (1 - fv) * grid[j0, i0] + fu * (1 - fv) * grid[j0, i1]
                      + (1 - fu) * fv * grid[j1, i0] + fu * fv * grid[j1, i1])

    @njit(cache=True)
    def _nb_count_touching_pairs(x0, y0, x1, y1):
        count = 0
        n = x0.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                if x0[j] > x1[i]:
                    break
                if y0[j] <= y1[i] and y0[i] <= y1[j]:
                    count += 1
        return count

    def _nb_morton_encode(ix, iy):
        ix = np.ascontiguousarray(np.atleast_1d(ix), dtype=np.int64)
        iy = np.ascontiguousarray(np.atleast_1d(iy), dtype=np.int64)
        out = np.empty(ix.shape[0], dtype=np.int64)
        _nb_morton_encode_loop(ix & 0xFFFFFF, iy & 0xFFFFFF, out)
        return out

    def _nb_morton_decode(codes):
        codes = np.ascontiguousarray(np.atleast_1d(codes), dtype=np.int64)
        ox = np.empty_like(codes)
        oy = np.empty_like(codes)
        _nb_morton_decode_loop(codes, ox, oy)
        return ox, oy

    def _nb_reduce_runs(keys, values):
        keys = np.ascontiguousarray(keys)
        values = np.ascontiguousarray(values, dtype=np.float64)
        okeys = np.empty_like(keys)
        osums = np.empty_like(values)
        m = _nb_reduce_runs_loop(keys, values, okeys, osums)
        return okeys[:m], osums[:m]

    def _nb_box_accumulate(kx, ky, values, nkx, nky):
        values = np.ascontiguousarray(values)
        dtype = np.complex128 if np.iscomplexobj(values) else np.float64
        out = np.zeros((nky, nkx), dtype=dtype)
        _nb_box_accumulate_loop(np.ascontiguousarray(kx, dtype=np.int64),
                                np.ascontiguousarray(ky, dtype=np.int64),
                                values.astype(dtype), out)
        return out

    def _nb_rect_cover_count(x_lo, x_hi, y_lo, y_hi, nkx, nky):
        out = np.zeros((nky, nkx), dtype=np.int64)
        _nb_rect_cover_loop(np.ascontiguousarray(x_lo, dtype=np.int64),
                            np.ascontiguousarray(x_hi, dtype=np.int64),
                            np.ascontiguousarray(y_lo, dtype=np.int64),
                            np.ascontiguousarray(y_hi, dtype=np.int64), out)
        return out

    def _nb_bilinear_periodic(grid, u, v):
        u = np.asarray(u, dtype=np.float64)
        shape = u.shape
        u = np.ascontiguousarray(u.ravel())
        v = np.ascontiguousarray(np.asarray(v, dtype=np.float64).ravel())
        grid = np.ascontiguousarray(grid)
        out = np.empty(u.shape[0], dtype=grid.dtype)
        _nb_bilinear_loop(grid, u, v, out)
        return out.reshape(shape)

    numba_backend = SimpleNamespace(
        name="numba",
        morton_encode=_nb_morton_encode,
        morton_decode=_nb_morton_decode,
        reduce_runs=_nb_reduce_runs,
        box_accumulate=_nb_box_accumulate,
        rect_cover_count=_nb_rect_cover_count,
        bilinear_periodic=_nb_bilinear_periodic,
        count_touching_pairs=_nb_count_touching_pairs,
    )
else:  # pragma: no cover
    numba_backend = None


active = numba_backend if USE_NUMBA else numpy_backend

morton_encode = active.morton_encode
morton_decode = active.morton_decode
reduce_runs = active.reduce_runs
box_accumulate = active.box_accumulate
rect_cover_count = active.rect_cover_count
bilinear_periodic = active.bilinear_periodic
count_touching_pairs = active.count_touching_pairs


def backend_name():
    return active.name
