import numpy as np
import pytest

from biprop.permeability import (
    CrossFilterState,
    PermeabilityParams,
    cross_filter,
    filter_pass,
    oracle_cross_filter,
    permeability,
    scan_1d,
)
from conftest import random_guides


def rel_err(a, b, floor=1e-300):
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), floor))


def test_permeability_examples():
    p = PermeabilityParams(30.0)
    assert permeability((5, 5, 5), (5, 5, 5), p) == 1.0
    assert permeability((0, 0, 0), (30, 0, 0), p) == pytest.approx(np.exp(-1))
    tiny = permeability((0, 0, 0), (255, 255, 255), p)
    assert tiny == pytest.approx(np.exp(-25.5)) and tiny > 0


def test_params_validation():
    with pytest.raises(ValueError):
        PermeabilityParams(0.0)


def test_scan_constant_with_unit_perms():
    c = 2.5
    raw = scan_1d([c, c, c], [1.0, 1.0])
    ones = scan_1d([1.0, 1.0, 1.0], [1.0, 1.0])
    assert np.allclose(raw, [4 * c, 4 * c, 4 * c])
    assert np.allclose(ones, [4.0, 4.0, 4.0])
    assert np.allclose(raw / ones, c)


def test_scan_zero_perm_isolates():
    raw = scan_1d([1.0, 0.0], [0.0])
    ones = scan_1d([1.0, 1.0], [0.0])
    assert np.allclose(raw / ones, [0.5, 0.0])  # self counted twice on both
    assert np.allclose(raw, [2.0, 0.0])


def test_scan_hand_example():
    # forward [1, 1], backward [1, 0]; masses [2+1, 1+2]
    assert np.allclose(scan_1d([1.0, 0.0], [1.0]), [2.0, 1.0])
    assert np.allclose(scan_1d([1.0, 1.0], [1.0]), [3.0, 3.0])


def test_scan_length_mismatch():
    with pytest.raises(ValueError):
        scan_1d([1.0, 2.0], [1.0, 1.0])


def test_filter_pass_rows_match_scan(rng):
    p = PermeabilityParams(30.0)
    guide = np.stack([rng.uniform(0, 255, (4, 4, 3)), rng.uniform(0, 255, (4, 4, 3))])
    values = rng.uniform(0, 10, (1, 2, 4, 4))
    masses = rng.uniform(0, 1, (2, 4, 4))
    state = filter_pass(CrossFilterState(values.copy(), masses.copy(), guide), "H", p)
    for t in range(2):
        for y in range(4):
            perms = permeability(guide[t, y, 1:], guide[t, y, :-1], p)
            assert np.allclose(state.values[0, t, y], scan_1d(values[0, t, y], perms))
            assert np.allclose(state.masses[t, y], scan_1d(masses[t, y], perms))


def test_filter_pass_zero_masses_stay_zero(rng):
    p = PermeabilityParams(30.0)
    guide = np.stack([rng.uniform(0, 255, (3, 5, 3))] * 2)
    state = CrossFilterState(rng.uniform(0, 1, (1, 2, 3, 5)), np.zeros((2, 3, 5)), guide)
    for axis in ("H", "V", "T"):
        out = filter_pass(state, axis, p)
        assert np.all(out.masses == 0.0)


def test_single_pixel_identity(rng):
    p = PermeabilityParams(30.0)
    gp, gc = rng.uniform(0, 255, (2, 1, 1, 3))
    out = cross_filter(np.array([[5.0]]), gp, gc, p)
    assert out == pytest.approx(5.0)


def test_constant_preservation(rng):
    p = PermeabilityParams(30.0)
    gp, gc = random_guides(rng, 6, 7)
    out = cross_filter(np.full((6, 7), 3.25), gp, gc, p)
    assert np.max(np.abs(out - 3.25)) < 1e-12


def test_oracle_equivalence_randomized(rng):
    for lam in (5.0, 30.0, 120.0):
        p = PermeabilityParams(lam)
        for _ in range(12):
            h, w = rng.integers(1, 9, 2)
            src = rng.uniform(0, 10, (int(h), int(w)))
            gp, gc = random_guides(rng, int(h), int(w))
            assert rel_err(cross_filter(src, gp, gc, p), oracle_cross_filter(src, gp, gc, p)) < 1e-9


def test_oracle_zero_plane(rng):
    p = PermeabilityParams(30.0)
    gp, gc = random_guides(rng, 4, 4)
    assert np.all(oracle_cross_filter(np.zeros((4, 4)), gp, gc, p) == 0.0)


def test_oracle_point_source_uniform_guides():
    p = PermeabilityParams(30.0)
    gp = np.full((5, 5, 3), 100.0)
    gc = np.full((5, 5, 3), 100.0)
    src = np.zeros((5, 5))
    src[2, 3] = 1.0
    out = oracle_cross_filter(src, gp, gc, p)
    assert np.all(out > 0) and np.all(out <= 1.0)


def test_linearity(rng):
    p = PermeabilityParams(30.0)
    gp, gc = random_guides(rng, 6, 6)
    x = rng.uniform(0, 10, (6, 6))
    y = rng.uniform(0, 10, (6, 6))
    a, b = 2.25, -0.75
    lhs = cross_filter(a * x + b * y, gp, gc, p)
    rhs = a * cross_filter(x, gp, gc, p) + b * cross_filter(y, gp, gc, p)
    assert np.max(np.abs(lhs - rhs)) / max(np.abs(rhs).max(), 1e-12) < 1e-9


def test_range_bounds(rng):
    p = PermeabilityParams(30.0)
    for _ in range(20):
        h, w = rng.integers(1, 8, 2)
        lo, hi = np.sort(rng.uniform(-5, 15, 2))
        src = rng.uniform(lo, hi, (int(h), int(w)))
        gp, gc = random_guides(rng, int(h), int(w))
        out = cross_filter(src, gp, gc, p)
        assert np.all(out >= lo - 1e-9) and np.all(out <= hi + 1e-9)


def test_channel_order_commutes(rng):
    p = PermeabilityParams(30.0)
    gp, gc = random_guides(rng, 5, 5)
    planes = rng.uniform(0, 10, (3, 5, 5))
    out = cross_filter(planes, gp, gc, p)
    flipped = cross_filter(planes[::-1].copy(), gp, gc, p)
    assert np.allclose(out, flipped[::-1])


def test_masses_exclude_positions(rng):
    # a zero-mass position contributes nothing: the output equals the
    # filter run on the remaining sources
    p = PermeabilityParams(30.0)
    gp, gc = random_guides(rng, 5, 5)
    src = rng.uniform(0, 10, (5, 5))
    mass = np.ones((5, 5))
    mass[2, 2] = 0.0
    out = cross_filter(src, gp, gc, p, masses_src=mass)
    src2 = src.copy()
    src2[2, 2] = 123456.0  # value at excluded position is irrelevant
    out2 = cross_filter(src2, gp, gc, p, masses_src=mass)
    assert np.allclose(out, out2)
