"""Fast invariant checks used by ``qcdistort selftest``."""

import itertools

import numpy as np

from . import kernels
from .beltrami import identity_solution
from .beurling import beurling_apply, cauchy_apply, dbar
from .distortion import tau
from .dyadic import DyadicCube
from .grid import GridField
from .packing import CompactMask, dyadic_content, packing_construct, packing_properties


def _check(name, ok, **detail):
    return name, {"passed": bool(ok), **{k: float(v) for k, v in detail.items()}}


def _tau_algebra(rng):
    t = rng.uniform(0, 2, 1000)
    K1 = rng.uniform(1, 10, 1000)
    K2 = rng.uniform(1, 10, 1000)
    err = np.max(np.abs(tau(tau(t, K1), K2) - tau(t, K1 * K2)) / np.maximum(tau(t, K1 * K2), 1e-300))
    ends = max(abs(tau(2.0, 3.0) - 2.0), abs(tau(0.0, 3.0)), abs(tau(2.0 / 4.0, 3.0) - 1.0))
    return _check("tau_algebra", err <= 1e-12 and ends <= 1e-15, max_rel_err=err)


def _brute_content(E, t):
    # recursive minimum over covers by dyadic cubes, straight from the definition
    def best(q):
        inside = [(a, b) for a, b in zip(*E.cells)
                  if q.contains(DyadicCube(E.M, int(a), int(b)))]
        if not inside:
            return 0.0
        if q.level == E.M:
            return q.side ** t
        return min(q.side ** t, sum(best(c) for c in q.children()))
    return best(DyadicCube(0, 0, 0))


def _content_oracle(rng):
    worst = 0.0
    for _ in range(20):
        E = CompactMask.from_dense(rng.random((8, 8)) < 0.3)
        if E.is_empty:
            continue
        for t in (0.5, 1.0, 1.5):
            worst = max(worst, abs(dyadic_content(E, t) - _brute_content(E, t)))
    return _check("content_oracle", worst <= 1e-12, max_abs_err=worst)


def _packing(rng):
    ok = True
    for _ in range(10):
        E = CompactMask.from_dense(rng.random((32, 32)) < 0.05)
        if E.is_empty:
            continue
        for t, m in itertools.product((0.5, 1.0, 1.5), (0, 1, 2)):
            props = packing_properties(packing_construct(E, t, 1e-9, m), E)
            ok &= all(props[k] for k in ("a_dilations_disjoint", "b_covers_mask", "c_norm_le_1", "d_sum_bound"))
    return _check("packing_properties", ok)


def _beurling(rng):
    f = GridField(rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64)))
    f = f.like(f.samples - f.mean())
    iso = abs(beurling_apply(f).l2_norm() - f.l2_norm()) / f.l2_norm()
    inv = np.max(np.abs(dbar(cauchy_apply(f)).samples - f.samples))
    return _check("beurling_isometry", iso <= 1e-12 and inv <= 1e-10, isometry_err=iso, dbar_cauchy_err=inv)


def _solver():
    sol = identity_solution(64)
    err = float(np.max(np.abs(sol.f.samples - sol.f.z())))
    return _check("solver_identity", err <= 1e-14, max_err=err)


def _backends(rng):
    if kernels.numba_backend is None:
        return _check("backend_parity", True)
    x = rng.integers(0, 1 << 12, 500)
    y = rng.integers(0, 1 << 12, 500)
    a = kernels.numpy_backend.morton_encode(x, y)
    b = kernels.numba_backend.morton_encode(x, y)
    grid = rng.standard_normal((32, 32))
    u = rng.uniform(-40, 40, 200)
    v = rng.uniform(-40, 40, 200)
    diff = np.max(np.abs(kernels.numpy_backend.bilinear_periodic(grid, u, v)
                         - kernels.numba_backend.bilinear_periodic(grid, u, v)))
    return _check("backend_parity", np.array_equal(a, b) and diff <= 1e-12, bilinear_diff=diff)


def run_all(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    checks = [_tau_algebra(rng), _content_oracle(rng), _packing(rng), _beurling(rng), _solver(), _backends(rng)]
    return dict(checks)
