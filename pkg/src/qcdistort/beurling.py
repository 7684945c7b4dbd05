"""Discrete Beurling and Cauchy transforms on the periodic grid, and estimates on ``L^2(w_{t,P})``.

The Beurling transform acts on Fourier coefficients by ``conj(xi)/xi`` and the
Cauchy transform by ``1 / ((i/2) xi)``; both vanish on the zero mode.  With the
spectral derivatives ``dbar = (i/2) xi`` and ``d = (i/2) conj(xi)`` this gives
``dbar C = Id - mean`` and ``d C = S`` exactly on the grid.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from . import kernels
from .grid import GridField, frequencies
from .packing import PackingFamily, _boxes_disjoint, _dilated_boxes, t_pack_norm

MIN_SAMPLES_PER_SIDE = 4


def _fft2(a):
    return sfft.fft2(a)


def _ifft2(a):
    return sfft.ifft2(a)


@lru_cache(maxsize=16)
def _multipliers(n, L):
    xi = frequencies(n, L)
    nz = xi != 0
    safe = np.where(nz, xi, 1.0)
    beur = np.where(nz, np.conj(safe) / safe, 0.0)
    cauchy = np.where(nz, 1.0 / (0.5j * safe), 0.0)
    for a in (beur, cauchy):
        a.setflags(write=False)
    return beur, cauchy


def _apply_multiplier(samples, mult):
    return _ifft2(_fft2(samples) * mult)


def beurling_apply(f: GridField) -> GridField:
    beur, _ = _multipliers(f.n, f.L)
    return f.like(_apply_multiplier(f.samples, beur))


def beurling_adjoint_apply(f: GridField) -> GridField:
    """Adjoint (and, on mean-zero fields, inverse) of :func:`beurling_apply`."""
    beur, _ = _multipliers(f.n, f.L)
    return f.like(_apply_multiplier(f.samples, np.conj(beur)))


def cauchy_apply(g: GridField) -> GridField:
    """Mean-zero periodic ``u`` with ``dbar u = g - mean(g)``."""
    _, cauchy = _multipliers(g.n, g.L)
    return g.like(_apply_multiplier(g.samples, cauchy))


def dbar(f: GridField) -> GridField:
    xi = frequencies(f.n, f.L)
    return f.like(_apply_multiplier(f.samples, 0.5j * xi))


def d(f: GridField) -> GridField:
    xi = frequencies(f.n, f.L)
    return f.like(_apply_multiplier(f.samples, 0.5j * np.conj(xi)))


# ---------------------------------------------------------------------------
# rasterised families
# ---------------------------------------------------------------------------

def _index_ranges(x0, side, origin, h):
    lo = np.ceil((x0 - origin) / h - 0.5).astype(np.int64)
    hi = np.floor((x0 + side - origin) / h - 0.5).astype(np.int64)
    return lo, hi


def family_raster(family, t, n, L=2.0, origin=(-0.5, -0.5)):
    """Indicator of ``union P_j`` and the weight ``w_{t,P}`` sampled at the cell centres.

    Raises ``ValueError`` if a cube spans fewer than four samples per side.
    """
    h = L / n
    chi = np.zeros((n, n), dtype=bool)
    w = np.zeros((n, n), dtype=np.float64)
    cubes = getattr(family, "cubes", family)
    if len(cubes) == 0:
        return chi, w
    x0, y0, side = family.arrays if hasattr(family, "arrays") else _arrays(cubes)
    if np.any(side < MIN_SAMPLES_PER_SIDE * h * (1 - 1e-12)):
        raise ValueError(f"family cubes must span at least {MIN_SAMPLES_PER_SIDE} samples per side "
                         f"(smallest side {side.min():g}, grid spacing {h:g})")
    xl, xh = _index_ranges(x0, side, origin[0], h)
    yl, yh = _index_ranges(y0, side, origin[1], h)
    if np.any(xl < 0) or np.any(yl < 0) or np.any(xh >= n) or np.any(yh >= n):
        raise ValueError("family cubes must lie inside the grid window")
    for k in range(side.size):
        chi[yl[k]:yh[k] + 1, xl[k]:xh[k] + 1] = True
        w[yl[k]:yh[k] + 1, xl[k]:xh[k] + 1] = side[k] ** (t - 2.0)
    return chi, w


def _arrays(cubes):
    b = np.array([c.bounds for c in cubes], dtype=np.float64)
    return b[:, 0], b[:, 1], b[:, 2] - b[:, 0]


def compressed_apply(f: GridField, family) -> GridField:
    """``chi_P S (chi_P f)`` with ``chi_P`` the indicator of the union of the family."""
    chi, _ = family_raster(family, 2.0, f.n, f.L, f.origin)
    if not chi.any():
        return f.like(np.zeros_like(f.samples))
    out = beurling_apply(f.like(f.samples * chi))
    return f.like(out.samples * chi)


# ---------------------------------------------------------------------------
# weighted operator norm
# ---------------------------------------------------------------------------

@dataclass
class WeightedNormReport:
    estimate: float
    iterations: int
    residual: float
    converged: bool
    family: dict = field(default_factory=dict)

    def to_json(self):
        return {"estimate": self.estimate, "iterations": self.iterations, "residual": self.residual,
                "converged": self.converged, "family": self.family}


def check_weighted_preconditions(family, t):
    if len(family) == 0:
        return
    if not _boxes_disjoint(*_dilated_boxes(family, 3.0)):
        raise ValueError("family triples 3P_i must be pairwise disjoint")
    norm = t_pack_norm(family, t)
    if norm > 1.0 + 1e-12:
        raise ValueError(f"t-packing norm must be <= 1, got {norm:.6g}")


def weighted_norm_estimate(family, t: float, n: int, tol: float = 1e-6, *, L: float = 2.0,
                           origin=(-0.5, -0.5), max_iter: int = 500, seed: int = 0) -> WeightedNormReport:
    """Norm of ``chi S chi`` on ``L^2(w_{t,P})`` by power iteration.

    The operator is conjugated by ``sqrt(w)`` so ordinary ``L^2`` power
    iteration on ``B* B`` applies; iteration stops once the Rayleigh quotient
    changes by less than ``tol`` relative, or after ``max_iter`` steps.
    """
    desc = {"cubes": len(family), "t": t}
    if len(family) == 0:
        return WeightedNormReport(0.0, 0, 0.0, True, desc)
    check_weighted_preconditions(family, t)
    desc["pack_norm"] = t_pack_norm(family, t)
    chi, w = family_raster(family, t, n, L, origin)
    sw = np.sqrt(w)
    inv = np.where(chi, 1.0 / np.where(chi, sw, 1.0), 0.0)
    beur, _ = _multipliers(n, L)
    beur_adj = np.conj(beur)

    def forward(v):
        return sw * _apply_multiplier(inv * v, beur)

    def backward(u):
        return inv * _apply_multiplier(sw * u, beur_adj)

    rng = np.random.default_rng(seed)
    v = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * chi
    v /= np.linalg.norm(v)
    lam_prev = None
    converged = False
    it = 0
    residual = np.inf
    for it in range(1, max_iter + 1):
        u = forward(v)
        lam = float(np.vdot(u, u).real)
        bv = backward(u)
        residual = float(np.linalg.norm(bv - lam * v) / max(lam, 1e-300))
        if lam_prev is not None and abs(lam - lam_prev) <= tol * lam:
            converged = True
            break
        lam_prev = lam
        nb = np.linalg.norm(bv)
        if nb == 0:
            converged = True
            break
        v = bv / nb
    return WeightedNormReport(float(np.sqrt(max(lam, 0.0))), it, residual, converged, desc)


def weighted_l2(samples, w, h) -> float:
    return float(np.sqrt(np.sum(np.abs(samples) ** 2 * w)) * h)


# ---------------------------------------------------------------------------
# shifted-grid combinatorial operators
# ---------------------------------------------------------------------------

def _mesh_scales(h, L):
    j_lo = int(np.ceil(np.log2(4 * h) - 1e-12))
    j_hi = int(np.floor(np.log2(L) + 1e-12))
    return [2.0 ** j for j in range(j_lo, j_hi + 1)]


def _mesh_layout(grid: GridField, family, s, shift, sign):
    """Per-sample mesh-cube indices at scale ``s`` and the non-local flag of each mesh cube."""
    x, y = grid.axes()
    off_x = sign * shift[0] / 3.0
    off_y = sign * shift[1] / 3.0
    kx = np.floor(x / s - off_x).astype(np.int64)
    ky = np.floor(y / s - off_y).astype(np.int64)
    kx0, ky0 = kx.min(), ky.min()
    kx -= kx0
    ky -= ky0
    nkx, nky = int(kx.max()) + 1, int(ky.max()) + 1
    if len(family) == 0:
        return kx, ky, nkx, nky, np.zeros((nky, nkx), dtype=bool)
    px0, py0, side = family.arrays
    x_lo = np.ceil(px0 / s - off_x - 1.0).astype(np.int64) - kx0
    x_hi = np.floor((px0 + side) / s - off_x).astype(np.int64) - kx0
    y_lo = np.ceil(py0 / s - off_y - 1.0).astype(np.int64) - ky0
    y_hi = np.floor((py0 + side) / s - off_y).astype(np.int64) - ky0
    hits = kernels.rect_cover_count(x_lo, x_hi, y_lo, y_hi, nkx, nky)
    return kx, ky, nkx, nky, hits >= 2


def _cube_sums(values, kx, ky, nkx, nky):
    n = values.shape[0]
    KX = np.broadcast_to(kx[None, :], (n, n)).ravel()
    KY = np.broadcast_to(ky[:, None], (n, n)).ravel()
    return kernels.box_accumulate(KX, KY, values.ravel(), nkx, nky), KX, KY


def sq_apply(f: GridField, family: PackingFamily, shift=(0, 0), sign: int = 0) -> GridField:
    """Combinatorial operator ``S_Q f = sum_{Q non-local} chi_Q l(Q)**-2 int_Q f``.

    Sums over one grid of the shifted dyadic mesh, selected by ``shift`` (thirds,
    entries in ``{0,1,2}``) and ``sign`` (``i`` in ``(-1)**i``), at scales from
    ``4h`` to ``L``.  ``f`` is taken to vanish outside the grid window.
    """
    family_raster(family, 2.0, f.n, f.L, f.origin)  # raster fidelity check
    out = np.zeros(f.n * f.n, dtype=np.complex128)
    if len(family) < 2:
        return f.like(out.reshape(f.n, f.n))
    sgn = (-1) ** sign
    h2 = f.h ** 2
    for s in _mesh_scales(f.h, f.L):
        kx, ky, nkx, nky, nonlocal_ = _mesh_layout(f, family, s, shift, sgn)
        if not nonlocal_.any():
            continue
        sums, KX, KY = _cube_sums(f.samples * h2, kx, ky, nkx, nky)
        contrib = np.where(nonlocal_, sums / s ** 2, 0.0)
        out += contrib[KY, KX]
    return f.like(out.reshape(f.n, f.n))


def maximal_mt(g: GridField, family: PackingFamily, t: float, shift=(0, 0), sign: int = 0,
               return_defined: bool = False):
    """``w_{t,P}``-maximal function over non-local cubes of one shifted grid, applied to ``|g|``.

    Points covered by no non-local cube get 0; pass ``return_defined=True`` to
    also receive the mask of points where the supremum is taken over a
    non-empty set.
    """
    chi, w = family_raster(family, t, g.n, g.L, g.origin)
    n = g.n
    best = np.zeros(n * n)
    defined = np.zeros(n * n, dtype=bool)
    if len(family) >= 2:
        sgn = (-1) ** sign
        gw = np.abs(g.samples) * w
        for s in _mesh_scales(g.h, g.L):
            kx, ky, nkx, nky, nonlocal_ = _mesh_layout(g, family, s, shift, sgn)
            if not nonlocal_.any():
                continue
            num, KX, KY = _cube_sums(gw, kx, ky, nkx, nky)
            den, _, _ = _cube_sums(w, kx, ky, nkx, nky)
            ok = nonlocal_ & (den > 0)
            avg = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
            here = ok[KY, KX]
            defined |= here
            best = np.where(here, np.maximum(best, avg[KY, KX]), best)
    field_ = g.like(best.reshape(n, n))
    if return_defined:
        return field_, defined.reshape(n, n)
    return field_


def weak_type_ratios(g: GridField, family, t: float, lambdas, shift=(0, 0), sign: int = 0):
    """``lambda |{M_t g > lambda}|_w / ||g||_{L^1(w)}`` for each ``lambda``; the weak-(1,1) bound says <= 1."""
    _, w = family_raster(family, t, g.n, g.L, g.origin)
    mt = maximal_mt(g, family, t, shift, sign).samples.real
    h2 = g.h ** 2
    l1 = float(np.sum(np.abs(g.samples) * w) * h2)
    if l1 == 0:
        return np.zeros(len(lambdas))
    return np.array([lam * float(np.sum(w[mt > lam]) * h2) / l1 for lam in lambdas])


def restricted_weak_type_ratio(F, G, family, t, n, L=2.0, origin=(-0.5, -0.5)) -> float:
    """``int_G |S chi_F| w / (|F|_w |G|_w)**(1/2)`` for boolean sample masks ``F, G`` inside the family."""
    chi, w = family_raster(family, t, n, L, origin)
    F = np.asarray(F, dtype=bool) & chi
    G = np.asarray(G, dtype=bool) & chi
    h2 = (L / n) ** 2
    fw = float(np.sum(w[F]) * h2)
    gw = float(np.sum(w[G]) * h2)
    if fw == 0 or gw == 0:
        return 0.0
    beur, _ = _multipliers(n, L)
    s_f = _apply_multiplier(F.astype(np.complex128), beur)
    lhs = float(np.sum(np.abs(s_f[G]) * w[G]) * h2)
    return lhs / np.sqrt(fw * gw)
