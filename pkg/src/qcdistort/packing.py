"""Dyadic Hausdorff content of pixel masks, its exact minimising cover, and t-packing families.

A :class:`CompactMask` is a set of occupied level-``M`` pixels in the unit
square.  A dyadic cube *meets* the mask when it contains an occupied pixel;
edge contact with a neighbouring pixel does not count.

The minimiser over admissible covers is computed by a bottom-up quadtree
dynamic program on the occupied cells only.  Cells are kept sorted by Morton
code, so the four children of a node are contiguous and every level-up step
is a run-length reduction.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dyadic import DyadicCube

MAX_LEVEL = 20
DENSE_LEVEL_CAP = 12


def _check_t(t, closed_top=True):
    hi_ok = t <= 2 if closed_top else t < 2
    if not (t > 0 and hi_ok):
        rng = "(0, 2]" if closed_top else "(0, 2)"
        raise ValueError(f"t must lie in {rng}, got {t}")


class CompactMask:
    """Occupied level-``M`` pixels of the unit square.

    Parameters
    ----------
    M : int
        Resolution level, ``0 <= M <= 20``; pixels have side ``2**-M``.
    ix, iy : array-like of int
        Pixel coordinates in ``[0, 2**M)``.  Duplicates are merged.
    """

    def __init__(self, M, ix=(), iy=()):
        M = int(M)
        if not 0 <= M <= MAX_LEVEL:
            raise ValueError(f"mask level M must lie in [0, {MAX_LEVEL}], got {M}")
        ix = np.asarray(ix, dtype=np.int64).ravel()
        iy = np.asarray(iy, dtype=np.int64).ravel()
        if ix.shape != iy.shape:
            raise ValueError("ix and iy must have the same length")
        n = 1 << M
        if ix.size and (ix.min() < 0 or iy.min() < 0 or ix.max() >= n or iy.max() >= n):
            raise ValueError(f"pixel coordinates must lie in [0, {n})")
        self.M = M
        self.codes = np.unique(kernels.morton_encode(ix, iy)) if ix.size else np.empty(0, np.int64)
        self.codes.setflags(write=False)

    # construction helpers -------------------------------------------------

    @classmethod
    def from_codes(cls, M, codes):
        obj = cls(M)
        codes = np.unique(np.asarray(codes, dtype=np.int64))
        codes.setflags(write=False)
        obj.codes = codes
        return obj

    @classmethod
    def from_dense(cls, array):
        """Mask from a square boolean array indexed ``[iy, ix]``."""
        array = np.asarray(array, dtype=bool)
        n = array.shape[0]
        if array.ndim != 2 or array.shape[1] != n or n & (n - 1):
            raise ValueError("dense mask must be square with power-of-two side")
        iy, ix = np.nonzero(array)
        return cls(n.bit_length() - 1, ix, iy)

    @classmethod
    def full(cls, M):
        n = 1 << M
        iy, ix = np.mgrid[0:n, 0:n]
        return cls(M, ix, iy)

    # views ----------------------------------------------------------------

    @property
    def size(self):
        return int(self.codes.size)

    @property
    def is_empty(self):
        return self.codes.size == 0

    @property
    def cells(self):
        """(ix, iy) arrays in Morton order."""
        return kernels.morton_decode(self.codes)

    def dense(self):
        if self.M > DENSE_LEVEL_CAP:
            raise MemoryError(f"dense view refused above level {DENSE_LEVEL_CAP}")
        n = 1 << self.M
        out = np.zeros((n, n), dtype=bool)
        ix, iy = self.cells
        out[iy, ix] = True
        return out

    def coarsen(self, level) -> "CompactMask":
        """Mask of the level-``level`` cubes that meet this mask."""
        if not 0 <= level <= self.M:
            raise ValueError("coarsening level out of range")
        return CompactMask.from_codes(level, self.codes >> (2 * (self.M - level)))

    def __eq__(self, other):
        return (isinstance(other, CompactMask) and self.M == other.M
                and np.array_equal(self.codes, other.codes))

    def __repr__(self):
        return f"CompactMask(M={self.M}, cells={self.size})"

    # I/O ------------------------------------------------------------------

    def to_json(self):
        ix, iy = self.cells
        return {"M": self.M, "cells": np.stack([ix, iy], axis=1).tolist()}

    @classmethod
    def from_json(cls, obj):
        cells = np.asarray(obj.get("cells", []), dtype=np.int64).reshape(-1, 2)
        return cls(int(obj["M"]), cells[:, 0], cells[:, 1])

    def to_png(self, path):
        from PIL import Image

        img = np.flipud(self.dense()).astype(np.uint8) * 255
        Image.fromarray(img, mode="L").convert("1").save(path)

    @classmethod
    def from_png(cls, path):
        """Bilevel raster; any non-zero pixel is occupied, the top image row is the top of the square."""
        from PIL import Image

        with Image.open(path) as im:
            arr = np.asarray(im.convert("L")) > 0
        return cls.from_dense(np.flipud(arr))

    @classmethod
    def load(cls, path):
        path = str(path)
        if path.lower().endswith(".png"):
            return cls.from_png(path)
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# exact dyadic content
# ---------------------------------------------------------------------------

@dataclass
class _ContentTable:
    codes: list
    cost: list
    choose: list


def _content_table(E: CompactMask, t: float) -> _ContentTable:
    M = E.M
    codes = [None] * (M + 1)
    cost = [None] * (M + 1)
    choose = [None] * (M + 1)
    codes[M] = np.asarray(E.codes)
    cost[M] = np.full(E.size, math.ldexp(1.0, -M) ** t)
    choose[M] = np.ones(E.size, dtype=bool)
    for k in range(M - 1, -1, -1):
        pcodes, child_sum = kernels.reduce_runs(codes[k + 1] >> 2, cost[k + 1])
        own = math.ldexp(1.0, -k) ** t
        pick = own <= child_sum  # ties go to the single parent cube
        codes[k] = pcodes
        choose[k] = pick
        cost[k] = np.where(pick, own, child_sum)
    return _ContentTable(codes, cost, choose)


def dyadic_content(E: CompactMask, t: float) -> float:
    """Minimum of ``sum l(Q)**t`` over covers of ``E`` by dyadic cubes with ``2**-M <= l <= 1``."""
    _check_t(t)
    if E.is_empty:
        return 0.0
    table = _content_table(E, t)
    return float(table.cost[0][0])


def minimizing_cover(E: CompactMask, t: float) -> list:
    """Admissible cover realising :func:`dyadic_content`, as a list of :class:`DyadicCube`."""
    _check_t(t)
    if E.is_empty:
        return []
    table = _content_table(E, t)
    out = []
    active = table.codes[0]
    for k in range(E.M + 1):
        pos = np.searchsorted(table.codes[k], active)
        pick = table.choose[k][pos]
        chosen = active[pick]
        if chosen.size:
            ix, iy = kernels.morton_decode(chosen)
            out.extend(DyadicCube(k, int(a), int(b)) for a, b in zip(ix, iy))
        rest = active[~pick]
        if rest.size == 0 or k == E.M:
            break
        nxt = table.codes[k + 1]
        parent = nxt >> 2
        hit = np.searchsorted(rest, parent)
        hit = np.minimum(hit, rest.size - 1)
        active = nxt[rest[hit] == parent]
    return out


# ---------------------------------------------------------------------------
# packing families
# ---------------------------------------------------------------------------

def _cube_level_arrays(cubes):
    if not cubes:
        z = np.empty(0, dtype=np.int64)
        return z, z, z
    a = np.array([(c.level, c.ix, c.iy) for c in cubes], dtype=np.int64)
    return a[:, 0], a[:, 1], a[:, 2]


def _assert_interiors_disjoint(cubes):
    present = set(cubes)
    if len(present) != len(cubes):
        raise ValueError("family contains repeated cubes")
    if not cubes:
        return
    top = min(q.level for q in cubes)
    for c in cubes:
        p = c
        for _ in range(c.level - top):
            p = p.parent()
            if p in present:
                raise ValueError(f"family cubes {p} and {c} are nested")


def t_pack_norm(family, t: float) -> float:
    """Exact t-Carleson packing norm ``sup_Q [l(Q)**-t sum_{P in Q} l(P)**t]**(1/t)``.

    The supremum is taken over the dyadic ancestors of the family cubes,
    which is where it is attained.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    cubes = list(getattr(family, "cubes", family))
    if not cubes:
        return 0.0
    lev, ix, iy = _cube_level_arrays(cubes)
    side_t = np.ldexp(1.0, -lev) ** t
    total = float(side_t.sum())
    best = 1.0
    top = int(lev.max())
    L = top
    while True:
        sel = lev >= L
        if np.any(sel):
            s = lev[sel] - L
            keys = np.stack([ix[sel] >> s, iy[sel] >> s], axis=1)
            _, inv = np.unique(keys, axis=0, return_inverse=True)
            sums = np.bincount(inv.ravel(), weights=side_t[sel])
            own = math.ldexp(1.0, -L) ** t
            best = max(best, float(sums.max()) / own)
            if own >= total:
                break
        L -= 1
    return best ** (1.0 / t)


@dataclass(frozen=True, eq=False)
class PackingFamily:
    """Finite family of pairwise interior-disjoint dyadic cubes with cached t-packing norm."""

    t: float
    cubes: tuple
    m: int = 0
    eps: float = 0.0
    norm: float = field(default=None)

    def __post_init__(self):
        cubes = tuple(sorted(self.cubes))
        _assert_interiors_disjoint(list(cubes))
        object.__setattr__(self, "cubes", cubes)
        if self.norm is None:
            object.__setattr__(self, "norm", t_pack_norm(cubes, self.t))

    def __len__(self):
        return len(self.cubes)

    @property
    def arrays(self):
        """(x0, y0, side) float arrays."""
        lev, ix, iy = _cube_level_arrays(list(self.cubes))
        side = np.ldexp(1.0, -lev)
        return ix * side, iy * side, side

    def total(self, t=None):
        t = self.t if t is None else t
        _, _, side = self.arrays
        return float(np.sum(side ** t))

    def to_json(self, extra=None):
        obj = {"t": self.t, "m": self.m, "eps": self.eps, "norm": self.norm,
               "cubes": [c.to_json() for c in self.cubes]}
        if extra:
            obj.update(extra)
        return obj

    @classmethod
    def from_json(cls, obj):
        cubes = tuple(DyadicCube.from_json(c) for c in obj["cubes"])
        return cls(float(obj["t"]), cubes, int(obj.get("m", 0)), float(obj.get("eps", 0.0)))


def packing_construct(E: CompactMask, t: float, eps: float, m: int) -> PackingFamily:
    """Packing family with separated dilations built from the minimising cover of ``E``.

    Each cube ``T`` of the cover is replaced by its dyadic descendant of side
    ``2**(-m-1) l(T)`` whose upper-right corner is the centre of ``T``.  The
    finite mask makes the minimiser exact, so ``eps`` is only recorded.
    """
    _check_t(t, closed_top=False)
    if E.is_empty:
        raise ValueError("packing_construct needs a non-empty mask")
    if not eps > 0:
        raise ValueError("eps must be positive")
    m = int(m)
    if m < 0:
        raise ValueError("m must be a non-negative integer")
    cover = minimizing_cover(E, t)
    cubes = tuple(DyadicCube(T.level + m + 1, ((2 * T.ix + 1) << m) - 1, ((2 * T.iy + 1) << m) - 1)
                  for T in cover)
    return PackingFamily(t, cubes, m, eps)


def weight_measure(family, t: float, Q) -> float:
    """``w_{t,P}(Q) = sum_j l(P_j)**(t-2) |P_j cap Q|`` for an axis-parallel square ``Q``."""
    cubes = list(getattr(family, "cubes", family))
    if not cubes:
        return 0.0
    lev, ix, iy = _cube_level_arrays(cubes)
    side = np.ldexp(1.0, -lev)
    x0, y0 = ix * side, iy * side
    qx0, qy0, qx1, qy1 = Q.bounds
    wx = np.clip(np.minimum(x0 + side, qx1) - np.maximum(x0, qx0), 0.0, None)
    wy = np.clip(np.minimum(y0 + side, qy1) - np.maximum(y0, qy0), 0.0, None)
    return float(np.sum(side ** (t - 2.0) * wx * wy))


@dataclass(frozen=True)
class BetaWeights:
    """Per-cube weights ``beta_j``; ``sum_j beta_j chi_{P_j}`` is a constant multiple of ``w_{t,P}``."""

    beta: np.ndarray
    side: np.ndarray
    t: float

    def dual_norm(self) -> float:
        """``||beta||`` in the exponent conjugate to ``t/2`` (a negative exponent)."""
        p = self.t / 2.0
        q = p / (p - 1.0)
        return float(np.sum(self.beta ** q) ** (1.0 / q))

    def i1(self) -> float:
        return float(np.sum(self.side ** 2 * self.beta))

    def ratio_to_weight(self) -> np.ndarray:
        return self.beta / self.side ** (self.t - 2.0)


def beta_weights(family, t: float) -> BetaWeights:
    _check_t(t, closed_top=False)
    cubes = list(getattr(family, "cubes", family))
    if not cubes:
        raise ValueError("beta_weights needs a non-empty family")
    lev, _, _ = _cube_level_arrays(cubes)
    side = np.ldexp(1.0, -lev)
    area = side ** 2
    expo = t / 2.0 - 1.0
    denom = np.sum(area ** (t / 2.0)) ** (expo * 2.0 / t)
    return BetaWeights(area ** expo / denom, side, t)


# ---------------------------------------------------------------------------
# verification of the construction guarantees
# ---------------------------------------------------------------------------

def _boxes_disjoint(x0, y0, x1, y1) -> bool:
    order = np.argsort(x0, kind="stable")
    return kernels.count_touching_pairs(np.ascontiguousarray(x0[order]), np.ascontiguousarray(y0[order]),
                                        np.ascontiguousarray(x1[order]), np.ascontiguousarray(y1[order])) == 0


def _dilated_boxes(family, a):
    x0, y0, side = family.arrays
    cx, cy = x0 + 0.5 * side, y0 + 0.5 * side
    r = 0.5 * a * side
    return cx - r, cy - r, cx + r, cy + r


def _mask_covered(E: CompactMask, boxes) -> bool:
    bx0, by0, bx1, by1 = boxes
    n = 1 << E.M
    ix, iy = E.cells
    if E.M <= DENSE_LEVEL_CAP:
        x_lo = np.ceil(bx0 * n).astype(np.int64)
        x_hi = np.floor(bx1 * n).astype(np.int64) - 1
        y_lo = np.ceil(by0 * n).astype(np.int64)
        y_hi = np.floor(by1 * n).astype(np.int64) - 1
        count = kernels.rect_cover_count(x_lo, x_hi, y_lo, y_hi, n, n)
        return bool(np.all(count[iy, ix] > 0))
    px0, py0 = ix / n, iy / n
    h = 1.0 / n
    for s in range(0, ix.size, 4096):
        a, b = px0[s:s + 4096, None], py0[s:s + 4096, None]
        inside = (bx0 <= a) & (a + h <= bx1) & (by0 <= b) & (b + h <= by1)
        if not np.all(inside.any(axis=1)):
            return False
    return True


def packing_properties(family: PackingFamily, E: CompactMask, content: float = None) -> dict:
    """Evaluate guarantees (a)-(d) of the packing construction on an output family."""
    t, m = family.t, family.m
    if content is None:
        content = dyadic_content(E, t)
    a = _boxes_disjoint(*_dilated_boxes(family, 2.0 ** m))
    b = _mask_covered(E, _dilated_boxes(family, 3.0 * 2.0 ** m))
    norm = t_pack_norm(family, t)
    c = norm <= 1.0 + 1e-12
    total = family.total()
    bound = 9.0 * 2.0 ** ((m + 1) * t) * (content + family.eps)
    d = total <= bound
    return {"a_dilations_disjoint": a, "b_covers_mask": b, "c_norm_le_1": c, "d_sum_bound": d,
            "norm": norm, "sum_side_t": total, "content": content, "d_bound": bound}
