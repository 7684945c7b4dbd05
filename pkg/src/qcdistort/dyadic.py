"""Dyadic squares, concentric dilation and the shifted dyadic mesh in the plane."""

import math
from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True, order=True)
class DyadicCube:
    """The closed square ``[ix, ix+1] x [iy, iy+1]`` scaled by ``2**-level``."""

    level: int
    ix: int
    iy: int

    @property
    def side(self) -> float:
        return math.ldexp(1.0, -self.level)

    @property
    def x0(self) -> float:
        return math.ldexp(float(self.ix), -self.level)

    @property
    def y0(self) -> float:
        return math.ldexp(float(self.iy), -self.level)

    @property
    def x1(self) -> float:
        return math.ldexp(float(self.ix + 1), -self.level)

    @property
    def y1(self) -> float:
        return math.ldexp(float(self.iy + 1), -self.level)

    @property
    def center(self) -> tuple:
        return (self.x0 + 0.5 * self.side, self.y0 + 0.5 * self.side)

    @property
    def bounds(self) -> tuple:
        return (self.x0, self.y0, self.x1, self.y1)

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, self.ix >> 1, self.iy >> 1)

    def ancestor(self, level: int) -> "DyadicCube":
        if level > self.level:
            raise ValueError("ancestor level must not exceed the cube level")
        s = self.level - level
        return DyadicCube(level, self.ix >> s, self.iy >> s)

    def children(self) -> tuple:
        k, a, b = self.level + 1, 2 * self.ix, 2 * self.iy
        return (DyadicCube(k, a, b), DyadicCube(k, a + 1, b),
                DyadicCube(k, a, b + 1), DyadicCube(k, a + 1, b + 1))

    def contains(self, other: "DyadicCube") -> bool:
        """True when ``other`` is this cube or one of its descendants."""
        if other.level < self.level:
            return False
        return other.ancestor(self.level) == self

    def interiors_meet(self, other: "DyadicCube") -> bool:
        return self.contains(other) or other.contains(self)

    def to_json(self) -> list:
        return [self.level, self.ix, self.iy]

    @classmethod
    def from_json(cls, triple) -> "DyadicCube":
        level, ix, iy = triple
        return cls(int(level), int(ix), int(iy))


@dataclass(frozen=True)
class Square:
    """Axis-parallel square given by centre and side length."""

    center: tuple
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("square side must be positive")

    @property
    def bounds(self) -> tuple:
        cx, cy = self.center
        r = 0.5 * self.side
        return (cx - r, cy - r, cx + r, cy + r)

    def contains_square(self, other: "Square", rtol: float = 0.0) -> bool:
        a = self.bounds
        b = other.bounds
        slack = rtol * self.side
        return (a[0] - slack <= b[0] and a[1] - slack <= b[1]
                and b[2] <= a[2] + slack and b[3] <= a[3] + slack)


def as_square(q) -> Square:
    if isinstance(q, Square):
        return q
    return Square(q.center, q.side)


def locate(p, level: int) -> DyadicCube:
    """Dyadic cube of the given level whose half-open version contains ``p``."""
    x, y = p
    return DyadicCube(level, math.floor(math.ldexp(x, level)), math.floor(math.ldexp(y, level)))


def dilate(q, a: float) -> Square:
    """Concentric square with side ``a * side(q)``."""
    if not a > 0:
        raise ValueError("dilation factor must be positive")
    return Square(tuple(q.center), a * q.side)


# ---------------------------------------------------------------------------
# shifted dyadic mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeshCube:
    """Member ``2**j * (k + (0,1)**2 + (-1)**i * alpha)`` of the shifted dyadic mesh.

    ``alpha`` is stored in thirds: ``(ax, ay)`` with entries in ``{0, 1, 2}``.
    """

    i: int
    j: int
    kx: int
    ky: int
    ax: int
    ay: int

    @property
    def side(self) -> float:
        return math.ldexp(1.0, self.j)

    @property
    def x0(self) -> float:
        return self.side * (self.kx + (-1) ** self.i * self.ax / 3.0)

    @property
    def y0(self) -> float:
        return self.side * (self.ky + (-1) ** self.i * self.ay / 3.0)

    @property
    def center(self) -> tuple:
        return (self.x0 + 0.5 * self.side, self.y0 + 0.5 * self.side)

    @property
    def bounds(self) -> tuple:
        return (self.x0, self.y0, self.x0 + self.side, self.y0 + self.side)

    def as_square(self) -> Square:
        return Square(self.center, self.side)


_ALPHAS = tuple(product(range(3), repeat=2))


def _core_offset(lo: float, hi: float, s: float, shift: float):
    """Smallest integer k with [lo, hi] inside the 9/10 core of s*(k + shift + [0, 1])."""
    k = math.ceil((hi - 0.95 * s) / s - shift)
    for cand in (k - 1, k, k + 1):
        a = s * (cand + shift)
        if a + 0.05 * s <= lo and hi <= a + 0.95 * s:
            return cand
    return None


def mesh_cover(q) -> MeshCube:
    """Deterministic shifted-mesh cube ``Q'`` with ``Q`` inside ``(9/10) Q'`` and ``side(Q') <= 9 side(Q)``.

    Scans scales from the smallest admissible one upward and, within a scale,
    ``(i, alpha, k)`` in lexicographic order.
    """
    sq = as_square(q)
    x0, y0, x1, y1 = sq.bounds
    ell = sq.side
    j = math.ceil(math.log2(ell / 0.9))
    while math.ldexp(1.0, j) * 0.9 < ell:
        j += 1
    while math.ldexp(1.0, j) <= 9.0 * ell:
        s = math.ldexp(1.0, j)
        for i in (0, 1):
            sign = (-1) ** i
            for ax, ay in _ALPHAS:
                kx = _core_offset(x0, x1, s, sign * ax / 3.0)
                if kx is None:
                    continue
                ky = _core_offset(y0, y1, s, sign * ay / 3.0)
                if ky is None:
                    continue
                return MeshCube(i, j, kx, ky, ax, ay)
        j += 1
    raise RuntimeError("no shifted mesh cube found")  # unreachable for finite input


# ---------------------------------------------------------------------------
# family geometry
# ---------------------------------------------------------------------------

def cube_arrays(cubes):
    """(x0, y0, side) float arrays for a sequence of cubes or squares."""
    if len(cubes) == 0:
        return np.empty(0), np.empty(0), np.empty(0)
    b = np.array([c.bounds for c in cubes], dtype=np.float64)
    return b[:, 0], b[:, 1], b[:, 2] - b[:, 0]


def _closed_hits(q, cubes) -> int:
    x0, y0, x1, y1 = q.bounds
    cx0, cy0, side = cube_arrays(cubes)
    hit = (cx0 <= x1) & (x0 <= cx0 + side) & (cy0 <= y1) & (y0 <= cy0 + side)
    return int(np.count_nonzero(hit))


def is_nonlocal(q, family) -> bool:
    """True when the closed square ``q`` meets at least two members of ``family``."""
    cubes = getattr(family, "cubes", family)
    return _closed_hits(q, cubes) >= 2
