import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import random_mask
from qcdistort.dyadic import DyadicCube, Square
from qcdistort.packing import (BetaWeights, CompactMask, PackingFamily, beta_weights, dyadic_content,
                               minimizing_cover, packing_construct, packing_properties, t_pack_norm,
                               weight_measure)

PROPS = ("a_dilations_disjoint", "b_covers_mask", "c_norm_le_1", "d_sum_bound")


# --- masks -----------------------------------------------------------------

def test_mask_rejects_bad_level_and_cells():
    with pytest.raises(ValueError):
        CompactMask(21)
    with pytest.raises(ValueError):
        CompactMask(2, [4], [0])


def test_mask_json_png_roundtrip(tmp_path, rng):
    E = random_mask(rng, 5, 0.3)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(E.to_json()))
    assert CompactMask.load(p) == E
    E.to_png(tmp_path / "m.png")
    assert CompactMask.load(tmp_path / "m.png") == E


def test_png_orientation(tmp_path):
    E = CompactMask(3, [0], [7])  # top-left pixel
    E.to_png(tmp_path / "a.png")
    from PIL import Image

    arr = np.asarray(Image.open(tmp_path / "a.png").convert("L"))
    assert arr[0, 0] > 0 and arr.sum() == arr[0, 0]


def test_coarsen(rng):
    E = random_mask(rng, 6, 0.1)
    c = E.coarsen(3)
    ix, iy = E.cells
    assert set(zip(*[a.tolist() for a in c.cells])) == set(zip((ix >> 3).tolist(), (iy >> 3).tolist()))


# --- content ---------------------------------------------------------------

def test_content_examples():
    assert dyadic_content(CompactMask.full(4), 2.0) == 1.0
    assert dyadic_content(CompactMask(3, [5], [2]), 1.0) == 0.125
    assert dyadic_content(CompactMask(5), 1.0) == 0.0
    assert [c for c in minimizing_cover(CompactMask.full(6), 1.0)] == [DyadicCube(0, 0, 0)]
    assert minimizing_cover(CompactMask(5, [7], [30]), 1.5) == [DyadicCube(5, 7, 30)]


@pytest.mark.parametrize("t", [0.0, -1.0, 2.5, float("nan")])
def test_content_rejects_bad_t(t):
    with pytest.raises(ValueError):
        dyadic_content(CompactMask.full(2), t)


def test_content_matches_subset_brute_force_all_level1_masks():
    for bits in range(1, 16):
        cells = [(b % 2, b // 2) for b in range(4) if bits >> b & 1]
        E = CompactMask(1, [c[0] for c in cells], [c[1] for c in cells])
        for t in (0.5, 1.0, 1.5, 2.0):
            best = min(sum(cost for _, cost in combo)
                       for r in range(1, 6)
                       for combo in itertools.combinations(
                           [({(0, 0), (1, 0), (0, 1), (1, 1)}, 1.0)] + [({c}, 0.5 ** t) for c in
                                                                      [(0, 0), (1, 0), (0, 1), (1, 1)]], r)
                       if set(cells) <= set().union(*[s for s, _ in combo]))
            assert dyadic_content(E, t) == pytest.approx(best, rel=1e-14)


def test_cover_enumeration_small(rng):
    for M in range(0, 5):
        for _ in range(6):
            E = random_mask(rng, M, 0.15)
            if oracles.cover_count(E) > 50_000:
                continue
            for t in (0.5, 1.0, 1.5):
                covers = oracles.enumerate_covers(E)
                costs = [oracles.cover_cost(c, t) for c in covers]
                best = min(costs)
                assert dyadic_content(E, t) == pytest.approx(best, rel=1e-12)
                mine = sorted(q.to_json() for q in minimizing_cover(E, t))
                assert mine in [sorted(list(q) for q in c) for c, k in zip(covers, costs)
                                if math.isclose(k, best, rel_tol=1e-12)]


def _check_cover(E, t, cover):
    pix = set(zip(*[a.tolist() for a in E.cells]))
    covered = set()
    for q in cover:
        k = E.M - q.level
        inside = {p for p in pix if (p[0] >> k) == q.ix and (p[1] >> k) == q.iy}
        assert inside, "every cover cube meets E"
        covered |= inside
    assert covered == pix
    for a, b in itertools.combinations(cover, 2):
        assert not a.interiors_meet(b)
    assert sum(q.side ** t for q in cover) == pytest.approx(dyadic_content(E, t), rel=1e-12)


def _check_local_property(E, t, cover):
    # sum over cover cubes inside Q never exceeds l(Q)^t, at every dyadic Q down to level M
    sums = {}
    for q in cover:
        for k in range(q.level + 1):
            a = q.ancestor(k)
            sums[a] = sums.get(a, 0.0) + q.side ** t
    for Q, s in sums.items():
        assert s <= Q.side ** t * (1 + 1e-12)


def test_minimizer_admissible_and_local_property_exhaustive_small():
    for M in (1, 2):
        N = 1 << M
        for bits in range(1, 1 << (N * N)):
            arr = np.array([(bits >> b) & 1 for b in range(N * N)], dtype=bool).reshape(N, N)
            E = CompactMask.from_dense(arr)
            for t in (0.5, 1.0, 1.5):
                cover = minimizing_cover(E, t)
                _check_cover(E, t, cover)
                _check_local_property(E, t, cover)


def test_minimizer_local_property_random(rng):
    for k in range(100):
        M = int(rng.integers(3, 11))
        E = random_mask(rng, M, float(rng.choice([0.001, 0.01, 0.1, 0.5])))
        t = float(rng.uniform(0.2, 2.0))
        cover = minimizing_cover(E, t)
        _check_local_property(E, t, cover)
        if M <= 6:
            _check_cover(E, t, cover)


@given(st.integers(0, 2 ** 16 - 1), st.floats(0.05, 1.9), st.floats(0.01, 0.1))
def test_content_monotone_in_t(bits, t, dt):
    arr = np.array([(bits >> b) & 1 for b in range(16)], dtype=bool).reshape(4, 4)
    if not arr.any():
        return
    E = CompactMask.from_dense(arr)
    assert dyadic_content(E, t + dt) <= dyadic_content(E, t) * (1 + 1e-12)


def test_content_recursive_oracle_random(rng):
    for M in range(3, 7):
        for _ in range(10):
            E = random_mask(rng, M, float(rng.choice([0.02, 0.2, 0.6])))
            for t in (0.5, 1.0, 1.5):
                assert dyadic_content(E, t) == pytest.approx(oracles.recursive_content(E, t), rel=1e-12)


def test_numpy_backend_content_matches(rng, monkeypatch):
    from qcdistort import kernels, packing

    E = random_mask(rng, 8, 0.05)
    ref = dyadic_content(E, 1.3)
    monkeypatch.setattr(packing.kernels, "reduce_runs", kernels.numpy_backend.reduce_runs)
    assert dyadic_content(E, 1.3) == ref


# --- packing norm and construction ----------------------------------------

def test_pack_norm_examples():
    assert t_pack_norm([DyadicCube(3, 2, 5)], 1.3) == pytest.approx(1.0)
    kids = list(DyadicCube(0, 0, 0).children())
    assert t_pack_norm(kids, 1.0) == pytest.approx(2.0)
    assert t_pack_norm(kids, 2.0) == pytest.approx(1.0)
    assert t_pack_norm([], 1.0) == 0.0


def _pack_norm_brute(cubes, t):
    best = 0.0
    deepest = max(q.level for q in cubes)
    for k in range(0, deepest + 1):
        for Q in {q.ancestor(k) for q in cubes if q.level >= k}:
            s = sum(p.side ** t for p in cubes if Q.contains(p))
            best = max(best, (s / Q.side ** t) ** (1 / t))
    return best


def test_pack_norm_matches_definition(rng):
    for _ in range(30):
        E = random_mask(rng, 5, 0.2)
        t = float(rng.uniform(0.3, 1.9))
        cover = minimizing_cover(E, 2.0)  # any disjoint family
        fam = cover if len(cover) > 1 else list(DyadicCube(0, 0, 0).children())
        assert t_pack_norm(fam, t) == pytest.approx(_pack_norm_brute(fam, t), rel=1e-12)


def test_family_rejects_overlaps():
    with pytest.raises(ValueError):
        PackingFamily(1.0, (DyadicCube(1, 0, 0), DyadicCube(2, 1, 1)))


def test_family_cached_norm_and_json(rng):
    E = random_mask(rng, 6, 0.05)
    fam = packing_construct(E, 1.2, 1e-9, 1)
    assert fam.norm == pytest.approx(t_pack_norm(fam, 1.2), rel=0, abs=0)
    back = PackingFamily.from_json(json.loads(json.dumps(fam.to_json())))
    assert back.cubes == fam.cubes and back.norm == fam.norm and back.m == fam.m


def test_construct_examples():
    E = CompactMask(6, [20], [33])
    fam = packing_construct(E, 1.0, 1e-9, 2)
    assert len(fam) == 1 and fam.cubes[0].side == 2.0 ** -6 / 8
    assert all(packing_properties(fam, E)[k] for k in PROPS)

    E = CompactMask(4, [4, 11], [4, 11])  # opposite corners of (1/4, 3/4)^2
    fam = packing_construct(E, 1.0, 1e-9, 2)
    assert len(fam) == 2
    props = packing_properties(fam, E)
    assert all(props[k] for k in PROPS)

    E = CompactMask.full(5)
    fam = packing_construct(E, 1.0, 1e-3, 0)
    assert fam.total() <= 9 * 2 * (1 + 1e-3)
    assert all(packing_properties(fam, E)[k] for k in PROPS)


def test_construct_descendant_geometry(rng):
    E = random_mask(rng, 5, 0.1)
    for m in range(4):
        fam = packing_construct(E, 1.0, 1e-9, m)
        cover = minimizing_cover(E, 1.0)
        assert len(fam) == len(cover)
        for T, P in zip(sorted(cover), sorted(fam.cubes, key=lambda p: p.ancestor(p.level - m - 1))):
            assert P.level == T.level + m + 1
            assert T.contains(P)
            assert (P.x1, P.y1) == T.center


@pytest.mark.parametrize("bad", [dict(t=0.0), dict(t=2.0), dict(eps=0.0), dict(m=-1)])
def test_construct_rejects(bad):
    args = dict(E=CompactMask.full(2), t=1.0, eps=1e-9, m=0)
    args.update(bad)
    with pytest.raises(ValueError):
        packing_construct(**args)
    with pytest.raises(ValueError):
        packing_construct(CompactMask(3), 1.0, 1e-9, 0)


def test_construct_predicates_on_grid(rng):
    masks = [random_mask(rng, int(rng.integers(2, 9)), float(rng.choice([0.005, 0.05, 0.3]))) for _ in range(15)]
    masks += [CompactMask.full(3), CompactMask(7, [64], [64])]
    for E, t, m in itertools.product(masks, (0.3, 0.7, 1.0, 1.3, 1.7), range(4)):
        props = packing_properties(packing_construct(E, t, 1e-9, m), E)
        assert all(props[k] for k in PROPS), (E, t, m, props)


# --- weight and beta -------------------------------------------------------

def test_weight_measure_examples(rng):
    E = random_mask(rng, 6, 0.05)
    fam = packing_construct(E, 1.1, 1e-9, 2)
    for P in fam.cubes:
        assert weight_measure(fam, 1.1, Square(P.center, P.side)) == pytest.approx(P.side ** 1.1, rel=1e-12)
    assert weight_measure(fam, 1.1, Square((5.0, 5.0), 0.1)) == 0.0
    unit = weight_measure(fam, 1.1, Square((0.5, 0.5), 1.0))
    assert unit == pytest.approx(fam.total(), rel=1e-12) and unit <= 16


def test_weight_measure_matches_raster():
    fam = PackingFamily(1.0, (DyadicCube(2, 1, 1), DyadicCube(3, 6, 1)))
    n = 512
    xs = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(xs, xs)
    w = np.zeros((n, n))
    for P in fam.cubes:
        w[(X > P.x0) & (X < P.x1) & (Y > P.y0) & (Y < P.y1)] = P.side ** -1.0
    Q = Square((0.4, 0.3), 0.375)
    x0, y0, x1, y1 = Q.bounds
    inside = (X > x0) & (X < x1) & (Y > y0) & (Y < y1)
    assert weight_measure(fam, 1.0, Q) == pytest.approx(w[inside].sum() / n ** 2, rel=2e-2)


def test_weight_measure_packing_bound(rng):
    for _ in range(10):
        t = float(rng.uniform(0.3, 1.9))
        fam = packing_construct(random_mask(rng, 7, 0.02), t, 1e-9, 1)
        norm = fam.norm
        for _ in range(1000):
            side = 10 ** rng.uniform(-3, 0.3)
            Q = Square(tuple(rng.uniform(-0.2, 1.2, 2)), side)
            assert weight_measure(fam, t, Q) <= 16 * norm ** t * side ** t * (1 + 1e-12)


def test_beta_single_cube_and_identity(rng):
    b = beta_weights(PackingFamily(1.0, (DyadicCube(3, 1, 1),)), 1.0)
    assert b.beta[0] == pytest.approx(1.0)
    for _ in range(20):
        t = float(rng.uniform(0.2, 1.95))
        fam = packing_construct(random_mask(rng, 6, 0.1), t, 1e-9, 1)
        bw = beta_weights(fam, t)
        assert isinstance(bw, BetaWeights)
        assert bw.i1() == pytest.approx(fam.total() ** (2 / t), rel=1e-12)
        assert bw.dual_norm() == pytest.approx(1.0, rel=1e-12)
        r = bw.ratio_to_weight()
        assert np.allclose(r, r[0], rtol=1e-12)


def test_beta_independent_formula_t1():
    # at t = 1: beta_j = (sum_k l_k) / l_j
    cubes = (DyadicCube(2, 0, 0), DyadicCube(3, 7, 7), DyadicCube(4, 8, 1))
    bw = beta_weights(PackingFamily(1.0, cubes), 1.0)
    total = sum(c.side for c in cubes)
    by_side = {round(s, 15): b for s, b in zip(bw.side, bw.beta)}
    for c in cubes:
        assert by_side[round(c.side, 15)] == pytest.approx(total / c.side, rel=1e-14)


def test_beta_rejects_empty():
    with pytest.raises(ValueError):
        beta_weights(PackingFamily(1.0, ()), 1.0)
