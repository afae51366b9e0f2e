"""Run orchestration shared by the command line, the scripts and the
acceptance suite: oracle ground state, walker ground state, correlation
length scan, and the laser-driven comparison against the grid solver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .engine import EnsembleState, PropagationConfig, realtime_step, regrid
from .estimators import alpha_scan, integrated_squared_error, run_at_alpha, survival_probability
from .exact import (ExactState, absorber_mask_1d, exact_density, exact_ground_state,
                    exact_propagate, exact_survival_probability)
from .grid import Grid1D, Grid2D
from .kde import DensityEstimate, kde_density_on_grid
from .potentials import LaserParams, laser_field

log = logging.getLogger(__name__)


def oracle(grid: Grid2D, dt_imag: float = 0.02, tol: float = 1e-9) -> ExactState:
    state = exact_ground_state(grid, dt_imag=dt_imag, tol=tol)
    log.info("exact ground state on %dx%d: E = %.6f", *grid.shape, state.energy)
    return state


def ground_state(alpha: float, m: int, cfg: PropagationConfig, grid: Grid1D, seed: int,
                 exact: np.ndarray | None = None, exact_grid: Grid2D | None = None,
                 workers: int = 1, energy_samples: int = 5):
    """One walker ground state plus its record (energy over the final window).

    Returns ``(state, record)``; MISE is NaN when no exact density is given.
    """
    keep = {}
    rec = run_at_alpha(alpha, m, cfg, grid, exact, exact_grid, [seed], energy_samples, workers,
                       on_final=lambda _, s: keep.update(state=s))
    return keep["state"], rec


def scan(alphas, m, cfg, grid, exact, exact_grid, replicates=5, seed=0, workers=1,
         energy_samples=5):
    return alpha_scan(alphas, m, cfg, grid, exact, exact_grid, replicates, seed, energy_samples,
                      workers)


def realtime_grid(ground: Grid1D, half_extent: float) -> Grid1D:
    """Grid of the same spacing as ``ground`` reaching at least +-half_extent."""
    h = ground.spacing
    k = int(math.ceil((half_extent - ground.x_max) / h - 1e-9))
    k = max(k, 0)
    return Grid1D(ground.x_min - k * h, ground.x_max + k * h, ground.n_points + 2 * k)


def live_density_on_grid(state: EnsembleState, grid: Grid2D) -> np.ndarray:
    """KDE of the walkers that have not escaped, weighted by their share of
    all replicas so that it compares with an exact density that has lost the
    absorbed norm."""
    alive = ~np.any(state.walkers.escaped, axis=0)
    n_alive = int(alive.sum())
    if n_alive < 2:
        return np.zeros(grid.shape)
    est = DensityEstimate(state.walkers.positions[:, alive], state.bandwidths.kde, state.alpha)
    return kde_density_on_grid(est, grid) * (n_alive / state.n_walkers)


@dataclass
class RealtimeResult:
    rows: list
    state: EnsembleState
    exact: ExactState | None


def realtime(state: EnsembleState, laser: LaserParams | None, cfg: PropagationConfig,
             n_steps: int, stride: int = 10, exact: ExactState | None = None,
             workers: int = 1, radius: float = 10.0) -> RealtimeResult:
    """Advance walkers and (optionally) the grid solver side by side.

    Every ``stride`` steps one row with the time-series columns is recorded:
    field, mean correlation length, MISE of the live-walker estimate against
    the exact density, and both survival probabilities.
    """
    if cfg.mode != "real_time":
        raise ValueError("realtime comparison needs mode='real_time'")
    mask = absorber_mask_1d(state.grid, cfg.absorber_fraction, cfg.absorber_power)
    rows = []

    def sample(s, ex):
        row = {"t": s.t, "field": float(laser_field(s.t, laser)),
               "nqcl": float(np.mean(s.bandwidths.nqcl)),
               "survival_tdqmc": survival_probability(s.walkers, radius)}
        if ex is not None:
            row["mise"] = integrated_squared_error(live_density_on_grid(s, ex.grid),
                                                   exact_density(ex), ex.grid)
            row["survival_exact"] = exact_survival_probability(ex, radius)
        rows.append(row)

    sample(state, exact)
    done = 0
    while done < n_steps:
        chunk = min(stride, n_steps - done)
        for _ in range(chunk):
            state = realtime_step(state, cfg, laser, workers, mask)
        if exact is not None:
            _, exact = exact_propagate(exact, laser, cfg.dt, chunk,
                                       absorber_fraction=cfg.absorber_fraction,
                                       absorber_power=cfg.absorber_power)
        done += chunk
        sample(state, exact)
    return RealtimeResult(rows, state, exact)


def to_realtime(state: EnsembleState, half_extent: float) -> EnsembleState:
    """Embed a ground state in a wider grid and reset the clock to zero."""
    wide = regrid(state, realtime_grid(state.grid, half_extent))
    return replace(wide, t=0.0)

