import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdqmc.grid import Grid1D
from tdqmc.potentials import (MEAN_FIELD, LaserParams, effective_v_ee, effective_v_ee_all,
                              laser_field, v_ee, v_en)

pos = st.floats(-50, 50, allow_nan=False)


@pytest.mark.parametrize("x, expected", [(0.0, -2.0), (math.sqrt(3), -1.0),
                                         (10.0, -2 / math.sqrt(101))])
def test_v_en(x, expected):
    assert v_en(x) == pytest.approx(expected, rel=1e-14)


def test_v_en_far_value():
    assert v_en(10.0) == pytest.approx(-0.19901, abs=1e-5)


@pytest.mark.parametrize("x1, x2, expected", [(0.3, 0.3, 1.0), (0.0, 1.0, 0.5), (2.0, -1.0, 0.25)])
def test_v_ee(x1, x2, expected):
    assert v_ee(x1, x2) == expected


@given(pos, pos)
def test_v_ee_symmetric(a, b):
    assert v_ee(a, b) == v_ee(b, a)


def test_laser_zero_before_pulse():
    p = LaserParams(t_start=10.0)
    assert laser_field(5.0, p) == 0.0
    assert laser_field(p.t_end + 1.0, p) == 0.0


def test_laser_peak():
    p = LaserParams()
    assert laser_field(p.t_center, p) == pytest.approx(0.15, abs=1e-15)


def test_laser_duration():
    p = LaserParams(n_cycles=6, carrier_frequency=0.153)
    assert p.duration == pytest.approx(6 * 2 * math.pi / 0.153, rel=1e-14)
    assert p.duration == pytest.approx(246.5, abs=0.2)


@pytest.mark.parametrize("shape", ["sin2", "gaussian"])
def test_laser_max_amplitude(shape):
    p = LaserParams(envelope_shape=shape)
    t = np.linspace(p.t_start - 50, p.t_end + 50, 200001)
    assert np.max(np.abs(laser_field(t, p))) == pytest.approx(p.peak_amplitude, rel=1e-6)


def test_laser_none_is_zero():
    assert laser_field(3.0, None) == 0.0


def test_laser_validation():
    with pytest.raises(ValueError):
        LaserParams(carrier_frequency=0)
    with pytest.raises(ValueError):
        LaserParams(n_cycles=0)


GRID = np.linspace(-5, 5, 41)


def test_single_walker_any_sigma():
    for sigma in (0.0, 0.3, 7.0, MEAN_FIELD):
        assert np.allclose(effective_v_ee(GRID, [1.3], 0, sigma), v_ee(GRID, 1.3), rtol=1e-15)


def test_pairwise_branch():
    walkers = [-1.0, 0.4, 2.0]
    assert np.array_equal(effective_v_ee(GRID, walkers, 2, 0.0), v_ee(GRID, 2.0))


def test_three_walker_hand_value():
    e = math.exp(-0.5)
    z = 2 * e + 1
    expected = (e * 0.5 + 1.0 * 1.0 + e * 0.5) / z
    assert effective_v_ee(np.array([0.0]), [-1.0, 0.0, 1.0], 1, 1.0)[0] == pytest.approx(expected, rel=1e-14)


def test_mean_field_branch():
    walkers = np.array([-2.0, 0.1, 0.5, 3.0])
    expected = np.mean([v_ee(GRID, w) for w in walkers], axis=0)
    assert np.allclose(effective_v_ee(GRID, walkers, 0, MEAN_FIELD), expected, rtol=1e-14)


def test_errors():
    with pytest.raises(ValueError, match="empty ensemble"):
        effective_v_ee(GRID, [], 0, 1.0)
    with pytest.raises(ValueError):
        effective_v_ee(GRID, [0.0], 0, -1.0)


@settings(max_examples=60)
@given(st.lists(st.floats(-6, 6, allow_nan=False), min_size=1, max_size=12),
       st.floats(0.0, 20.0), st.data())
def test_convex_combination_bounds(walkers, sigma, data):
    k = data.draw(st.integers(0, len(walkers) - 1))
    val = effective_v_ee(GRID, walkers, k, sigma)
    each = np.array([v_ee(GRID, w) for w in walkers])
    assert np.all(val >= each.min(axis=0) - 1e-12)
    assert np.all(val <= each.max(axis=0) + 1e-12)


def test_small_sigma_approaches_pairwise():
    rng = np.random.default_rng(3)
    walkers = rng.normal(0, 1, 50)
    spread = walkers.std()
    for k in (0, 17, 49):
        got = effective_v_ee(GRID, walkers, k, 1e-6 * spread)
        assert np.allclose(got, v_ee(GRID, walkers[k]), rtol=0, atol=1e-4)


def test_batched_direct_matches_single():
    grid = Grid1D(-5, 5, 41)
    walkers = np.random.default_rng(0).normal(0, 1, 30)
    full = effective_v_ee_all(grid, walkers, 0.7, method="direct")
    for k in range(30):
        assert np.allclose(full[k], effective_v_ee(grid.x, walkers, k, 0.7), rtol=1e-13)


@pytest.mark.parametrize("sigma", [0.05, 0.3, 1.35, 5.0])
def test_binned_close_to_direct(sigma):
    grid = Grid1D(-20, 20, 256)
    walkers = np.random.default_rng(1).normal(0, 0.9, 1200)
    direct = effective_v_ee_all(grid, walkers, sigma, method="direct")
    binned = effective_v_ee_all(grid, walkers, sigma, method="binned")
    err = np.abs(direct - binned)
    assert err.mean() < 1e-4
    assert err.max() < 5e-3


def test_batched_limits_exact():
    grid = Grid1D(-5, 5, 21)
    walkers = np.array([-1.0, 0.2, 0.9])
    assert np.array_equal(effective_v_ee_all(grid, walkers, 0.0)[1], v_ee(grid.x, 0.2))
    mf = effective_v_ee_all(grid, walkers, MEAN_FIELD)
    assert np.allclose(mf, np.mean([v_ee(grid.x, w) for w in walkers], axis=0)[None, :], rtol=1e-14)
