"""Bandwidth selection, correlation length, and the product-kernel density
estimate of the walker cloud in configuration space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid2D
from .potentials import is_mean_field

SQRT_2PI = np.sqrt(2 * np.pi)


class DegenerateEnsemble(ValueError):
    pass


def kde_bandwidth(samples, rule: str = "silverman") -> float:
    """Rule-of-thumb Gaussian KDE bandwidth, 1.06 * spread * M**(-1/5).

    ``rule="silverman"`` uses the robust spread min(std, IQR/1.34);
    ``rule="std"`` uses the sample standard deviation alone.
    """
    x = np.asarray(samples, dtype=float).ravel()
    m = x.size
    if m < 2:
        raise DegenerateEnsemble("degenerate ensemble")
    std = np.std(x, ddof=1)
    if rule == "silverman":
        q75, q25 = np.percentile(x, [75, 25])
        iqr = (q75 - q25) / 1.34
        spread = min(std, iqr) if iqr > 0 else std
    elif rule == "std":
        spread = std
    else:
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    if not spread > 0:
        raise DegenerateEnsemble("degenerate ensemble")
    return float(1.06 * spread * m ** (-0.2))


def nqcl(bandwidth: float, alpha: float) -> float:
    """Correlation length alpha * bandwidth; the mean-field sentinel propagates."""
    if is_mean_field(alpha):
        return alpha
    if alpha == 0:
        return 0.0
    return alpha * bandwidth


@dataclass(frozen=True)
class BandwidthState:
    kde: tuple[float, ...]
    alpha: float

    @classmethod
    def from_walkers(cls, positions, alpha: float, rule: str = "silverman") -> "BandwidthState":
        return cls(tuple(kde_bandwidth(p, rule) for p in positions), alpha)

    @property
    def nqcl(self) -> tuple[float, ...]:
        return tuple(nqcl(h, self.alpha) for h in self.kde)


@dataclass
class DensityEstimate:
    """Product-Gaussian KDE over N electrons x M walkers."""

    walkers: np.ndarray
    bandwidths: np.ndarray
    alpha: float = float("nan")

    def __post_init__(self):
        self.walkers = np.atleast_2d(np.asarray(self.walkers, dtype=float))
        self.bandwidths = np.asarray(self.bandwidths, dtype=float).reshape(-1)
        if self.bandwidths.size != self.walkers.shape[0]:
            raise ValueError("one bandwidth per electron required")
        if np.any(self.bandwidths <= 0):
            raise ValueError("bandwidths must be positive")

    @classmethod
    def from_walkers(cls, walkers, alpha: float = float("nan"), rule: str = "silverman"):
        walkers = np.atleast_2d(np.asarray(walkers, dtype=float))
        return cls(walkers, [kde_bandwidth(w, rule) for w in walkers], alpha)

    @property
    def n_electrons(self) -> int:
        return self.walkers.shape[0]

    @property
    def n_walkers(self) -> int:
        return self.walkers.shape[1]


def _factors(R, est: DensityEstimate):
    """Per-walker offsets and normalized Gaussian factors at points ``R``."""
    R = np.asarray(R, dtype=float)
    d = R[..., :, None] - est.walkers  # (..., N, M)
    h = est.bandwidths[:, None]
    g = np.exp(-0.5 * (d / h) ** 2) / (SQRT_2PI * h)
    return d, g


def kde_density(R, est: DensityEstimate):
    """Estimate at configuration point(s) ``R`` of shape (..., N)."""
    _, g = _factors(R, est)
    return np.prod(g, axis=-2).sum(axis=-1) / est.n_walkers


def kde_gradient(R, est: DensityEstimate, i: int):
    """Analytic derivative of the estimate with respect to coordinate ``i``."""
    d, g = _factors(R, est)
    h2 = est.bandwidths[i] ** 2
    return (np.prod(g, axis=-2) * (-d[..., i, :] / h2)).sum(axis=-1) / est.n_walkers


def density_and_gradient(points, est: DensityEstimate, chunk: int = 512):
    """Estimate and its full gradient at many points, chunked over points.

    Returns ``(p, grad)`` with shapes (K,) and (K, N).  The pair exponent is
    expanded as a_k + b_l + sum_i x_ik y_il / h_i^2 so each chunk costs one
    small matrix product, one exp, and N+1 matrix-vector products.
    """
    points = np.asarray(points, dtype=float)
    k = points.shape[0]
    p = np.empty(k)
    grad = np.empty((k, est.n_electrons))
    h2 = est.bandwidths**2
    y = est.walkers  # (N, M)
    norm = 1.0 / (est.n_walkers * np.prod(SQRT_2PI * est.bandwidths))
    b = -0.5 * np.sum(y**2 / h2[:, None], axis=0)
    rhs = np.vstack([y, np.ones_like(y[:1])]).T  # (M, N+1)
    for s in range(0, k, chunk):
        x = points[s:s + chunk]
        a = -0.5 * np.sum(x**2 / h2, axis=1)
        expo = (x / h2) @ y
        expo += a[:, None]
        expo += b[None, :]
        np.minimum(expo, 0.0, out=expo)  # exponents are <= 0 up to round-off
        np.exp(expo, out=expo)
        sums = expo @ rhs  # sum_l w, and sum_l w y_il
        p[s:s + chunk] = sums[:, -1] * norm
        grad[s:s + chunk] = -(x * sums[:, -1:] - sums[:, :-1]) / h2 * norm
    return p, grad


def kde_density_on_grid(est: DensityEstimate, grid: Grid2D) -> np.ndarray:
    """Two-electron estimate on every node of ``grid`` (separable evaluation)."""
    if est.n_electrons != 2:
        raise ValueError("grid evaluation needs exactly two electrons")
    g1 = _axis_factors(grid.axis1.x, est.walkers[0], est.bandwidths[0])
    g2 = _axis_factors(grid.axis2.x, est.walkers[1], est.bandwidths[1])
    return (g1.T @ g2) / est.n_walkers


def _axis_factors(x, centers, h):
    return np.exp(-0.5 * ((x[None, :] - centers[:, None]) / h) ** 2) / (SQRT_2PI * h)
