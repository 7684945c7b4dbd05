"""Complex fields sampled on a uniform periodic grid, plus their on-disk format.

Samples sit at cell centres ``origin + (j + 1/2) h`` with ``h = L / n``;
``samples[iy, ix]`` is row-major with rows along ``y``.  A field is stored as a
JSON sidecar ``{n, L, origin}`` next to a ``.bin`` file of little-endian
float64 ``(re, im)`` pairs.
"""

import json
import os
import tempfile
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

MIN_LOG2N = 4
MAX_LOG2N = 13


@dataclass(frozen=True, eq=False)
class GridField:
    samples: np.ndarray
    L: float = 2.0
    origin: tuple = (-0.5, -0.5)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("samples must be a square 2-d array")
        n = s.shape[0]
        if n & (n - 1) or not (1 << MIN_LOG2N) <= n <= (1 << MAX_LOG2N):
            raise ValueError(f"grid size must be a power of two in [2^{MIN_LOG2N}, 2^{MAX_LOG2N}], got {n}")
        if not self.L > 0:
            raise ValueError("torus side L must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "L", float(self.L))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def h(self) -> float:
        return self.L / self.n

    @classmethod
    def zeros(cls, n, L=2.0, origin=(-0.5, -0.5)):
        return cls(np.zeros((n, n), dtype=np.complex128), L, origin)

    @classmethod
    def from_function(cls, func, n, L=2.0, origin=(-0.5, -0.5)):
        """Sample ``func(z)`` (vectorised over complex ``z``) at the cell centres."""
        return cls(func(grid_points(n, L, origin)), L, origin)

    def like(self, samples) -> "GridField":
        return GridField(samples, self.L, self.origin)

    def z(self) -> np.ndarray:
        return grid_points(self.n, self.L, self.origin)

    def axes(self):
        return grid_axes(self.n, self.L, self.origin)

    def mean(self) -> complex:
        return complex(self.samples.mean())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.samples) ** 2)) * self.h)

    def same_grid(self, other) -> bool:
        return self.n == other.n and self.L == other.L and self.origin == other.origin

    # I/O ------------------------------------------------------------------

    def save(self, path):
        """Write ``<stem>.json`` and ``<stem>.bin`` atomically."""
        path = Path(path)
        stem = path.with_suffix("")
        meta = {"n": self.n, "L": self.L, "origin": list(self.origin), "data": stem.name + ".bin"}
        raw = np.empty((self.n, self.n, 2), dtype="<f8")
        raw[..., 0] = self.samples.real
        raw[..., 1] = self.samples.imag
        atomic_write_bytes(stem.with_suffix(".bin"), raw.tobytes())
        atomic_write_text(stem.with_suffix(".json"), json.dumps(meta, indent=1) + "\n")
        return stem.with_suffix(".json")

    @classmethod
    def load(cls, path):
        path = Path(path)
        stem = path.with_suffix("")
        meta = json.loads(stem.with_suffix(".json").read_text())
        n = int(meta["n"])
        data_path = stem.parent / meta.get("data", stem.name + ".bin")
        raw = np.frombuffer(data_path.read_bytes(), dtype="<f8")
        if raw.size != 2 * n * n:
            raise ValueError(f"{data_path} holds {raw.size} floats, expected {2 * n * n}")
        raw = raw.reshape(n, n, 2)
        return cls(raw[..., 0] + 1j * raw[..., 1], float(meta["L"]), tuple(meta["origin"]))


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def grid_axes(n, L=2.0, origin=(-0.5, -0.5)):
    h = L / n
    c = (np.arange(n) + 0.5) * h
    return origin[0] + c, origin[1] + c


def grid_points(n, L=2.0, origin=(-0.5, -0.5)) -> np.ndarray:
    x, y = grid_axes(n, L, origin)
    return x[None, :] + 1j * y[:, None]


@lru_cache(maxsize=16)
def frequencies(n: int, L: float) -> np.ndarray:
    """Complex angular frequency ``xi = k_x + i k_y`` laid out like ``fft2`` output."""
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=L / n)
    xi = k[None, :] + 1j * k[:, None]
    xi.setflags(write=False)
    return xi
