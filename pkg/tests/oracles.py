"""Reference implementations that share no code path with the package.

Each oracle recomputes a quantity straight from its definition, using plain
Python loops, explicit DFT matrices, or scipy quadrature instead of the
package's quadtree DP, FFTs and numba kernels.
"""

import cmath
import itertools
import math

import numpy as np
from scipy import integrate


# ---------------------------------------------------------------------------
# dyadic content
# ---------------------------------------------------------------------------

def _pixels(mask):
    ix, iy = mask.cells
    return set(zip(ix.tolist(), iy.tolist()))


def enumerate_covers(mask, limit=200_000):
    """Every admissible cover of the mask as a list of ``(level, ix, iy)`` triples.

    A cover is admissible when its cubes are dyadic with ``2**-M <= side <= 1``,
    pairwise non-overlapping and each meets the mask.  Enumerated as all ways
    of cutting the quadtree of occupied cubes.  Raises ``OverflowError`` when
    more than ``limit`` covers exist.
    """
    M = mask.M
    pixels = _pixels(mask)
    if not pixels:
        return [[]]

    def covers(level, a, b):
        here = [(level, a, b)]
        if level == M:
            return [here]
        parts = []
        for da, db in itertools.product((0, 1), repeat=2):
            c = (level + 1, 2 * a + da, 2 * b + db)
            sub = [p for p in pixels if (p[0] >> (M - c[0])) == c[1] and (p[1] >> (M - c[0])) == c[2]]
            if sub:
                parts.append(covers(*c))
        count = 1
        for p in parts:
            count *= len(p)
        if count > limit:
            raise OverflowError("too many covers")
        out = [here]
        for combo in itertools.product(*parts):
            out.append([q for piece in combo for q in piece])
        if len(out) > limit:
            raise OverflowError("too many covers")
        return out

    return covers(0, 0, 0)


def cover_count(mask) -> int:
    """Number of admissible covers, by the same recursion as :func:`enumerate_covers`."""
    M = mask.M
    pixels = _pixels(mask)
    if not pixels:
        return 1

    def count(level, a, b, pts):
        if level == M:
            return 1
        total = 1
        for da, db in itertools.product((0, 1), repeat=2):
            c = (level + 1, 2 * a + da, 2 * b + db)
            sub = [p for p in pts if (p[0] >> (M - c[0])) == c[1] and (p[1] >> (M - c[0])) == c[2]]
            if sub:
                total *= count(*c, sub)
        return 1 + total

    return count(0, 0, 0, list(pixels))


def cover_cost(cover, t) -> float:
    return sum(2.0 ** (-level * t) for level, _, _ in cover)


def recursive_content(mask, t) -> float:
    """Minimum over all cuts of the occupied quadtree, by top-down recursion on sets of pixels."""
    M = mask.M
    pixels = list(_pixels(mask))

    def best(level, a, b, pts):
        if not pts:
            return 0.0
        own = 2.0 ** (-level * t)
        if level == M:
            return own
        kids = 0.0
        for da, db in itertools.product((0, 1), repeat=2):
            c = (level + 1, 2 * a + da, 2 * b + db)
            sub = [p for p in pts if (p[0] >> (M - c[0])) == c[1] and (p[1] >> (M - c[0])) == c[2]]
            kids += best(*c, sub)
        return min(own, kids)

    return best(0, 0, 0, pixels)


def all_subset_contents_level2(t):
    """Content of every one of the 65536 masks at level 2, by brute force over all 2**21 cube subsets.

    Every subset of the 21 dyadic cubes of side 1, 1/2 and 1/4 is a candidate
    cover (overlaps allowed); the content of a mask is the cheapest subset
    whose union contains it.  Returns an array indexed by the 16-bit pixel
    bitmap ``sum 2**(4*iy + ix)``.
    """
    cubes = []
    for level in range(3):
        k = 1 << level
        for a in range(k):
            for b in range(k):
                bits = 0
                s = 4 // k
                for px in range(a * s, (a + 1) * s):
                    for py in range(b * s, (b + 1) * s):
                        bits |= 1 << (4 * py + px)
                cubes.append((bits, 2.0 ** (-level * t)))
    cov = np.zeros(1, dtype=np.int64)
    cost = np.zeros(1)
    for bits, c in cubes:
        cov = np.concatenate([cov, cov | bits])
        cost = np.concatenate([cost, cost + c])
    best = np.full(1 << 16, np.inf)
    np.minimum.at(best, cov, cost)
    # superset minimum: content(E) = min over covered sets S containing E
    idx = np.arange(1 << 16)
    for bit in range(16):
        has = (idx >> bit) & 1 == 0
        best[idx[has]] = np.minimum(best[idx[has]], best[idx[has] | (1 << bit)])
    return best


# ---------------------------------------------------------------------------
# Beurling transform by principal-value quadrature
# ---------------------------------------------------------------------------

def _chord(z, c, R, theta):
    """Parameters ``0 <= r1 <= r2`` where the ray ``z + r e^{i theta}`` lies in the disk, or ``None``."""
    d = np.exp(1j * theta)
    w = z - c
    # |w + r d|^2 = R^2  ->  r^2 + 2 Re(w conj d) r + |w|^2 - R^2 = 0
    bq = (w * np.conj(d)).real
    cq = abs(w) ** 2 - R * R
    disc = bq * bq - cq
    if disc <= 0:
        return None
    sq = math.sqrt(disc)
    r1, r2 = -bq - sq, -bq + sq
    if r2 <= 0:
        return None
    return max(r1, 0.0), r2


def beurling_disk_plane(z, c, R) -> complex:
    """``-(1/pi) p.v. int_D dA(w) / (z - w)**2`` for the disk ``D(c, R)``, by adaptive quadrature in the angle.

    In polar coordinates about ``z`` the radial integral is ``log(r2 / r1)``;
    for ``z`` inside the disk the divergent ``log(eps)`` part integrates to
    zero against ``e^{-2 i theta}``, which is the principal value.
    """
    inside = abs(z - c) < R

    def radial(theta):
        ch = _chord(z, c, R, theta)
        if ch is None:
            return 0.0
        r1, r2 = ch
        return math.log(r2) if inside else math.log(r2 / r1)

    if inside:
        lo, hi = 0.0, 2 * math.pi
    else:
        # rays from an exterior point meet the disk inside a cone of half-angle asin(R / |c - z|)
        mid = cmath.phase(c - z)
        half = math.asin(min(R / abs(c - z), 1.0))
        lo, hi = mid - half, mid + half
    opts = dict(limit=400, epsabs=1e-13, epsrel=1e-11)
    re = integrate.quad(lambda th: math.cos(2 * th) * radial(th), lo, hi, **opts)[0]
    im = integrate.quad(lambda th: -math.sin(2 * th) * radial(th), lo, hi, **opts)[0]
    # (z - w)^2 = r^2 e^{2 i theta} with w = z + r e^{i theta}
    return -(re + 1j * im) / math.pi


def beurling_disk_periodic(z, c, R, L=2.0, near=1, far=60) -> complex:
    """Beurling transform of the ``L``-periodised disk indicator.

    Images within ``near`` lattice steps use the quadrature above, the rest
    the exact exterior value ``-R**2 / (z - c - omega)**2``, summed over
    expanding square shells (the square lattice makes the symmetric sum
    well defined).
    """
    total = 0j
    for p in range(-far, far + 1):
        for q in range(-far, far + 1):
            omega = L * complex(p, q)
            if max(abs(p), abs(q)) <= near:
                total += beurling_disk_plane(z, c + omega, R)
            else:
                total += -R * R / (z - c - omega) ** 2
    return total


# ---------------------------------------------------------------------------
# dense operators
# ---------------------------------------------------------------------------

def beurling_kernel_dense(n, L=2.0):
    """Convolution kernel of the discrete Beurling multiplier, via explicit DFT matrices."""
    j = np.arange(n)
    freq = np.where(j < n // 2, j, j - n) * (2 * math.pi / L)
    xi = freq[None, :] + 1j * freq[:, None]
    m = np.zeros((n, n), dtype=complex)
    nz = xi != 0
    m[nz] = np.conj(xi[nz]) / xi[nz]
    W = np.exp(2j * math.pi * np.outer(j, j) / n) / n
    return W @ m @ W.T  # g[dy, dx]


def weighted_norm_dense(family, t, n, L=2.0, origin=(-0.5, -0.5)) -> float:
    """Largest singular value of ``sqrt(w) chi S chi / sqrt(w)`` built as an explicit matrix."""
    h = L / n
    g = beurling_kernel_dense(n, L)
    idx = []
    wts = []
    for cube in family.cubes:
        x0, y0, x1, y1 = cube.bounds
        for iy in range(n):
            for ix in range(n):
                x = origin[0] + (ix + 0.5) * h
                y = origin[1] + (iy + 0.5) * h
                if x0 < x < x1 and y0 < y < y1:
                    idx.append((iy, ix))
                    wts.append(cube.side ** (t - 2.0))
    idx = np.array(idx)
    sw = np.sqrt(np.array(wts))
    dy = (idx[:, 0][:, None] - idx[:, 0][None, :]) % n
    dx = (idx[:, 1][:, None] - idx[:, 1][None, :]) % n
    B = sw[:, None] * g[dy, dx] / sw[None, :]
    return float(np.linalg.norm(B, 2))


# ---------------------------------------------------------------------------
# shifted-grid operators by explicit loops
# ---------------------------------------------------------------------------

def _closed_meet(a, b):
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def sq_loops(samples, family, n, L=2.0, origin=(-0.5, -0.5), shift=(0, 0), sign=0):
    """``S_Q f`` summed cube by cube over one shifted grid, scales ``4h`` to ``L``."""
    h = L / n
    xs = origin[0] + (np.arange(n) + 0.5) * h
    ys = origin[1] + (np.arange(n) + 0.5) * h
    out = np.zeros((n, n), dtype=complex)
    sg = (-1) ** sign
    fam_bounds = [c.bounds for c in family.cubes]
    j = math.ceil(math.log2(4 * h) - 1e-12)
    while 2.0 ** j <= L * (1 + 1e-12):
        s = 2.0 ** j
        ox, oy = sg * shift[0] / 3.0, sg * shift[1] / 3.0
        kxs = np.floor(xs / s - ox).astype(int)
        kys = np.floor(ys / s - oy).astype(int)
        for kx in np.unique(kxs):
            for ky in np.unique(kys):
                box = ((kx + ox) * s, (ky + oy) * s, (kx + ox + 1) * s, (ky + oy + 1) * s)
                hits = sum(_closed_meet(box, b) for b in fam_bounds)
                if hits < 2:
                    continue
                cols = kxs == kx
                rows = kys == ky
                sel = np.outer(rows, cols)
                out[sel] += samples[sel].sum() * h * h / s ** 2
        j += 1
    return out
