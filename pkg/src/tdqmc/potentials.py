"""Soft-core Coulomb interactions, the laser pulse, and the kernel-smoothed
effective electron-electron potential that couples walker ensembles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .grid import Grid1D

# Kernel width sentinel for the mean-field (Hartree-Fock) limit: every walker
# of the partner ensemble gets the same weight.
MEAN_FIELD = math.inf


def is_mean_field(sigma) -> bool:
    return sigma is not None and math.isinf(sigma)


@dataclass(frozen=True)
class SoftCoreParams:
    a: float = 1.0
    b: float = 1.0
    nuclear_charge: float = 2.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("softening parameters must be positive")


HELIUM = SoftCoreParams()


@dataclass(frozen=True)
class LaserParams:
    peak_amplitude: float = 0.15
    carrier_frequency: float = 0.153
    n_cycles: int = 6
    envelope_shape: str = "sin2"
    t_start: float = 0.0

    def __post_init__(self):
        if self.peak_amplitude < 0:
            raise ValueError("peak_amplitude must be >= 0")
        if self.carrier_frequency <= 0:
            raise ValueError("carrier_frequency must be > 0")
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be >= 1")
        if self.envelope_shape not in ("sin2", "gaussian"):
            raise ValueError(f"unknown envelope {self.envelope_shape!r}")

    @property
    def duration(self) -> float:
        return self.n_cycles * 2 * np.pi / self.carrier_frequency

    @property
    def t_center(self) -> float:
        return self.t_start + 0.5 * self.duration

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


def v_en(x, params: SoftCoreParams = HELIUM):
    """Electron-nucleus attraction -Z/sqrt(a + x^2)."""
    return -params.nuclear_charge / np.sqrt(params.a + np.square(x))


def v_ee(x1, x2, params: SoftCoreParams = HELIUM):
    """Electron-electron repulsion 1/(b + |x1 - x2|)."""
    return 1.0 / (params.b + np.abs(np.subtract(x1, x2)))


def envelope(t, p: LaserParams):
    t = np.asarray(t, dtype=float)
    if p.envelope_shape == "sin2":
        phase = np.pi * (t - p.t_start) / p.duration
        inside = (t >= p.t_start) & (t <= p.t_end)
        return np.where(inside, p.peak_amplitude * np.sin(phase) ** 2, 0.0)
    # gaussian with the same FWHM in intensity as the sin^2 pulse
    fwhm = 0.3641 * p.duration
    width = fwhm / np.sqrt(4 * np.log(2))
    return p.peak_amplitude * np.exp(-((t - p.t_center) ** 2) / (2 * width**2))


def laser_field(t, p: LaserParams | None):
    """E(t) = E0(t) cos(w (t - t_center)); zero when ``p`` is None."""
    if p is None:
        return np.zeros_like(np.asarray(t, dtype=float))
    return envelope(t, p) * np.cos(p.carrier_frequency * (np.asarray(t) - p.t_center))


def gaussian_kernel(u):
    """Unnormalized exp(-u^2/2); constants cancel in the weighted average."""
    with np.errstate(over="ignore"):
        return np.exp(-0.5 * np.square(u))


def effective_v_ee(x_eval, others, k_ref: int, sigma: float, params: SoftCoreParams = HELIUM):
    """Kernel-weighted Coulomb field felt through partner walker ``k_ref``.

    Every walker ``l`` of the partner ensemble contributes v_ee(x, x_l) with
    weight K(|x_l - x_k| / sigma), normalized by the weight sum.  ``sigma == 0``
    keeps only the reference walker; ``MEAN_FIELD`` weights all walkers equally.
    """
    others = np.asarray(others, dtype=float)
    x_eval = np.asarray(x_eval, dtype=float)
    if others.size == 0:
        raise ValueError("empty ensemble")
    if not 0 <= k_ref < others.size:
        raise IndexError("k_ref out of range")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return v_ee(x_eval, others[k_ref], params)
    if is_mean_field(sigma):
        return v_ee(x_eval[..., None], others, params).mean(axis=-1)
    w = gaussian_kernel((others - others[k_ref]) / sigma)
    return v_ee(x_eval[..., None], others, params) @ w / w.sum()


def effective_v_ee_all(grid: Grid1D, others, sigma: float, params: SoftCoreParams = HELIUM,
                       method: str = "auto", chunk: int = 512) -> np.ndarray:
    """Effective potential on ``grid`` for every reference walker at once.

    Returns an array of shape (M, n_points).  ``method="direct"`` evaluates the
    kernel sum exactly (O(M^2 n)); ``"binned"`` deposits the partner walkers on
    an auxiliary grid of spacing min(dx, sigma/8) with cloud-in-cell weights and
    interpolates the smoothed field at each reference position (O(n n_z^2)).
    ``"auto"`` picks direct for small ensembles.
    """
    others = np.asarray(others, dtype=float)
    m = others.size
    if m == 0:
        raise ValueError("empty ensemble")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = grid.x
    if sigma == 0:
        return v_ee(x[None, :], others[:, None], params)
    if is_mean_field(sigma):
        mean = v_ee(x[:, None], others[None, :], params).mean(axis=1)
        return np.broadcast_to(mean, (m, x.size)).copy()
    if method == "auto":
        method = "direct" if m <= 1500 else "binned"
    if method == "direct":
        vmat = v_ee(others[:, None], x[None, :], params)
        out = np.empty((m, x.size))
        for s in range(0, m, chunk):
            w = gaussian_kernel((others[None, :] - others[s:s + chunk, None]) / sigma)
            out[s:s + chunk] = (w @ vmat) / w.sum(axis=1)[:, None]
        return out
    if method != "binned":
        raise ValueError(f"unknown method {method!r}")
    return _binned(x, others, sigma, grid.spacing, params)


def _binned(x, others, sigma, dx, params, dense_limit=1024, sparse_mass=20.0):
    dz = min(dx, sigma / 8)
    lo = others.min() - dz
    nz = int(np.ceil((others.max() + dz - lo) / dz)) + 2
    z = lo + dz * np.arange(nz)
    f = (others - lo) / dz
    i = np.floor(f).astype(np.int64)
    t = f - i
    mass = np.bincount(i, 1 - t, nz) + np.bincount(i + 1, t, nz)
    coulomb = v_ee(x[:, None], z[None, :], params) * mass[None, :]
    if nz <= dense_limit:
        kern = gaussian_kernel((z[:, None] - z[None, :]) / sigma)
        num = coulomb @ kern
        den = mass @ kern
    else:
        # Toeplitz kernel: FFT convolution, truncated where K < 1e-14
        half = min(nz - 1, int(np.ceil(8 * sigma / dz)))
        g = gaussian_kernel(np.arange(-half, half + 1) * dz / sigma)
        num = fftconvolve(coulomb, g[None, :], mode="same", axes=1)
        den = fftconvolve(mass, g, mode="same")
    field = np.divide(num, den, out=np.zeros_like(num), where=den > 1e-12)
    out = (field[:, i] * (1 - t) + field[:, i + 1] * t).T
    # Isolated walkers see only a few partners, where the binning error is
    # not averaged away; those rows are redone exactly.
    sparse = np.flatnonzero(den[i] * (1 - t) + den[i + 1] * t < sparse_mass)
    if sparse.size:
        w = gaussian_kernel((others[None, :] - others[sparse, None]) / sigma)
        out[sparse] = (w @ v_ee(others[:, None], x[None, :], params)) / w.sum(axis=1)[:, None]
    return out
