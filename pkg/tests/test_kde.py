import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tdqmc.grid import Grid2D
from tdqmc.kde import (BandwidthState, DegenerateEnsemble, DensityEstimate, density_and_gradient,
                       kde_bandwidth, kde_density, kde_density_on_grid, kde_gradient, nqcl)
from tdqmc.potentials import MEAN_FIELD


def _straight_line_silverman(samples):
    """Independent rule-of-thumb: explicit loops, hand-rolled percentiles."""
    xs = sorted(samples)
    m = len(xs)
    mean = sum(xs) / m
    std = math.sqrt(sum((x - mean) ** 2 for x in xs) / (m - 1))

    def pct(q):
        pos = q * (m - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, m - 1)
        return xs[lo] + (pos - lo) * (xs[hi] - xs[lo])

    return 1.06 * min(std, (pct(0.75) - pct(0.25)) / 1.34) * m ** (-0.2)


def test_bandwidth_normal_sample():
    x = np.random.default_rng(2024).standard_normal(10_000)
    h = kde_bandwidth(x)
    assert h == pytest.approx(_straight_line_silverman(x.tolist()), rel=1e-12)
    assert h == pytest.approx(1.06 * 10_000 ** -0.2, rel=0.03)  # ~0.168 for unit spread


def test_bandwidth_two_points():
    # std = 1/sqrt(2); IQR of {0,1} is 0.5, so the robust spread is 0.5/1.34
    assert kde_bandwidth([0.0, 1.0]) == pytest.approx(1.06 * (0.5 / 1.34) * 2 ** -0.2, rel=1e-14)


def test_bandwidth_plain_std_rule():
    assert kde_bandwidth([0.0, 1.0], rule="std") == pytest.approx(1.06 * math.sqrt(0.5) * 2 ** -0.2)


@pytest.mark.parametrize("samples", [[1.0], [2.0, 2.0, 2.0]])
def test_bandwidth_degenerate(samples):
    with pytest.raises(DegenerateEnsemble, match="degenerate ensemble"):
        kde_bandwidth(samples)


samples_st = arrays(float, st.integers(5, 60), elements=st.floats(-10, 10, allow_nan=False),
                    unique=True)


@settings(max_examples=60)
@given(samples_st, st.floats(0.01, 100))
def test_bandwidth_scale_equivariant(x, c):
    assert kde_bandwidth(c * x) == pytest.approx(c * kde_bandwidth(x), rel=1e-12)


@settings(max_examples=60)
@given(samples_st, st.floats(-100, 100))
def test_bandwidth_translation_invariant(x, c):
    assert kde_bandwidth(x + c) == pytest.approx(kde_bandwidth(x), rel=1e-9, abs=1e-12)


def test_nqcl_examples():
    assert nqcl(0.5, 2.0) == 1.0
    assert nqcl(0.5, 0.0) == 0.0
    assert math.isinf(nqcl(0.5, MEAN_FIELD))


@given(st.floats(0.01, 10), st.floats(0, 10), st.floats(0.1, 5))
def test_nqcl_linear(h, a, c):
    assert nqcl(c * h, a) == pytest.approx(c * nqcl(h, a), rel=1e-14)
    assert nqcl(h, c * a) == pytest.approx(c * nqcl(h, a), rel=1e-14)


def test_bandwidth_state():
    rng = np.random.default_rng(0)
    pos = rng.normal(0, [[1.0], [2.0]], (2, 500))
    bw = BandwidthState.from_walkers(pos, 3.0)
    assert bw.nqcl == tuple(3.0 * h for h in bw.kde)


def test_density_examples():
    one = DensityEstimate([[0.0]], [1.0])
    assert kde_density([0.0], one) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
    two = DensityEstimate([[0.0], [0.0]], [1.0, 1.0])
    assert kde_density([0.0, 0.0], two) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    pair = DensityEstimate([[-1.0, 1.0]], [1.0])
    expected = 0.5 * 2 * math.exp(-0.5) / math.sqrt(2 * math.pi)
    assert kde_density([0.0], pair) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(0.24197, abs=1e-5)


def test_gradient_examples():
    sym = DensityEstimate([[-1.0, 1.0, -0.3, 0.3], [2.0, -2.0, 0.5, -0.5]], [0.4, 0.7])
    for i in (0, 1):
        assert kde_gradient([0.0, 0.0], sym, i) == pytest.approx(0.0, abs=1e-16)
    one = DensityEstimate([[0.0]], [1.0])
    g = math.exp(-0.125) / math.sqrt(2 * math.pi)
    assert kde_gradient([0.5], one, 0) == pytest.approx(-0.5 * g, rel=1e-14)


def _fd(R, est, i, step=1e-5):
    up = np.array(R, dtype=float)
    dn = up.copy()
    up[i] += step
    dn[i] -= step
    return (kde_density(up, est) - kde_density(dn, est)) / (2 * step)


def test_gradient_small_instance_vs_finite_difference():
    rng = np.random.default_rng(11)
    est = DensityEstimate(rng.normal(0, 1, (2, 5)), [0.6, 0.9])
    R = rng.normal(0, 1, 2)
    for i in (0, 1):
        assert kde_gradient(R, est, i) == pytest.approx(_fd(R, est, i), rel=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_random_points(seed):
    rng = np.random.default_rng(seed)
    est = DensityEstimate(rng.normal(0, 1, (2, rng.integers(1, 20))), rng.uniform(0.3, 1.5, 2))
    pts = rng.normal(0, 1.2, (100, 2))
    p, grad = density_and_gradient(pts, est)
    for R, pr, gr in zip(pts, p, grad):
        assert pr == pytest.approx(kde_density(R, est), rel=1e-12)
        for i in (0, 1):
            fd = _fd(R, est, i)
            assert abs(gr[i] - fd) <= 1e-5 * max(abs(fd), 1e-3 * pr)


def test_density_on_grid_normalization_single_walker():
    est = DensityEstimate([[0.1], [-0.2]], [0.5, 0.5])
    grid = Grid2D.square(-6, 6, 241)
    assert kde_density_on_grid(est, grid).sum() * grid.cell_area == pytest.approx(1.0, abs=1e-6)


def test_density_integrates_to_one_padded():
    rng = np.random.default_rng(5)
    est = DensityEstimate.from_walkers(rng.normal(0, 1, (2, 300)))
    pad = 8 * est.bandwidths.max()
    lo, hi = est.walkers.min() - pad, est.walkers.max() + pad
    grid = Grid2D.square(lo, hi, 401)
    dens = kde_density_on_grid(est, grid)
    assert np.all(dens >= 0)
    assert dens.sum() * grid.cell_area == pytest.approx(1.0, abs=1e-6)


def test_density_on_grid_matches_pointwise():
    rng = np.random.default_rng(6)
    est = DensityEstimate(rng.normal(0, 1, (2, 40)), [0.3, 0.45])
    grid = Grid2D.square(-3, 3, 25)
    dens = kde_density_on_grid(est, grid)
    x1, x2 = grid.mesh()
    pointwise = kde_density(np.stack([x1, x2], axis=-1), est)
    # same Gaussian factors, different summation order
    assert np.allclose(dens, pointwise, rtol=1e-13, atol=0)


def test_density_on_grid_swap_transposes():
    rng = np.random.default_rng(7)
    walkers = rng.normal(0, 1, (2, 500))
    grid = Grid2D.square(-4, 4, 81)
    a = kde_density_on_grid(DensityEstimate(walkers, [0.3, 0.5]), grid)
    b = kde_density_on_grid(DensityEstimate(walkers[::-1], [0.5, 0.3]), grid)
    assert np.allclose(a, b.T, rtol=1e-13, atol=0)
