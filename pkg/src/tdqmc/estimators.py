"""Observables of the walker ensemble: energy, MISE against a reference
density, survival probability, and the correlation-length scan."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

from .grid import Grid2D
from .kde import DensityEstimate, density_and_gradient, kde_density_on_grid
from .potentials import v_ee, v_en

log = logging.getLogger(__name__)

UNDERFLOW = 1e-300
MAX_EXCLUDED = 1e-3


class EstimatorError(RuntimeError):
    pass


def local_energies(walkers: np.ndarray, est: DensityEstimate, params=None) -> np.ndarray:
    """Per-replica energy terms: (1/8) sum_i (dP/dx_i / P)^2 + potentials.

    ``walkers`` has shape (2, M).  Replicas where the estimate underflows get
    NaN.
    """
    from .potentials import HELIUM

    params = params or HELIUM
    pts = walkers.T
    p, grad = density_and_gradient(pts, est)
    ok = p > UNDERFLOW
    safe = np.where(ok, p, 1.0)
    kinetic = 0.125 * np.sum((grad / safe[:, None]) ** 2, axis=1)
    potential = (v_en(walkers[0], params) + v_en(walkers[1], params)
                 + v_ee(walkers[0], walkers[1], params))
    return np.where(ok, kinetic + potential, np.nan)


def energy_estimate(state, est: DensityEstimate | None = None):
    """Walker average of the density-gradient energy; returns (energy, stderr).

    Only meaningful for a (near) real ground state.
    """
    est = state.density_estimate() if est is None else est
    e = local_energies(est.walkers, est, state.params)
    bad = np.isnan(e)
    if bad.mean() > MAX_EXCLUDED:
        raise EstimatorError(f"density underflow at {bad.sum()} of {e.size} walkers")
    if bad.any():
        log.warning("excluded %d walkers with underflowing density", bad.sum())
    e = e[~bad]
    return float(e.mean()), float(e.std(ddof=1) / np.sqrt(e.size))


def integrated_squared_error(estimate: np.ndarray, exact: np.ndarray, grid: Grid2D) -> float:
    if estimate.shape != exact.shape or exact.shape != grid.shape:
        raise ValueError("mismatched grids")
    return float(np.sum((estimate - exact) ** 2) * grid.cell_area)


def mise(estimates: Sequence, exact: np.ndarray, grid: Grid2D):
    """Mean over replicates of the integrated squared error; (mise, stderr).

    ``estimates`` holds DensityEstimate objects or density arrays already on
    ``grid``.
    """
    if len(estimates) < 1:
        raise ValueError("no replicates")
    ise = []
    for est in estimates:
        dens = kde_density_on_grid(est, grid) if isinstance(est, DensityEstimate) else np.asarray(est)
        ise.append(integrated_squared_error(dens, exact, grid))
    ise = np.array(ise)
    err = float(ise.std(ddof=1) / np.sqrt(ise.size)) if ise.size > 1 else float("nan")
    return float(ise.mean()), err


def survival_probability(walkers, radius: float = 10.0) -> float:
    """Fraction of replicas with both electrons within ``radius`` and not escaped."""
    pos = walkers.positions
    inside = np.all(np.abs(pos) <= radius, axis=0) & ~np.any(walkers.escaped, axis=0)
    return float(inside.mean())


@dataclass
class ScanRecord:
    alpha: float
    sigma: float
    energy: float
    energy_stderr: float
    mise: float
    mise_stderr: float


SCAN_HEADER = [f.name for f in fields(ScanRecord)]
TIMESERIES_HEADER = ["t", "field", "nqcl", "mise", "survival_tdqmc", "survival_exact"]


def steady_state_window(n_steps: int, fraction: float = 0.1) -> int:
    return max(1, int(math.ceil(fraction * n_steps)))


def run_at_alpha(alpha: float, m: int, cfg, grid, exact: np.ndarray | None, exact_grid: Grid2D | None,
                 seeds: Sequence[int], energy_samples: int = 5, workers: int = 1,
                 window: float = 0.1, on_final=None) -> ScanRecord:
    """Prepare ``len(seeds)`` independent ground states at ``alpha``.

    Energy and sigma are averaged over the final ``window`` fraction of the
    complex-time run (energy on ``energy_samples`` evenly spaced steps) and over
    replicates; MISE uses each replicate's final walker cloud.  ``on_final``,
    if given, is called as ``on_final(seed, state)`` for every replicate.
    """
    from .engine import prepare_ground_state

    n_win = steady_state_window(cfg.n_steps, window)
    first = cfg.n_steps - n_win + 1
    marks = set(np.linspace(first, cfg.n_steps, max(1, energy_samples)).round().astype(int).tolist())
    energies, sigmas, finals = [], [], []
    for seed in seeds:
        samples = []

        def grab(s):
            if s.step >= first:
                sigmas.append(np.mean(s.bandwidths.nqcl))
            if s.step in marks:
                samples.append(energy_estimate(s))

        state, _ = prepare_ground_state(alpha, m, cfg, grid, seed, workers, callback=grab)
        if on_final is not None:
            on_final(seed, state)
        energies.extend(samples)
        finals.append(state.density_estimate(cfg.bandwidth_rule))
    e = np.array([s[0] for s in energies])
    se = np.array([s[1] for s in energies])
    # snapshots within a run are correlated: never claim less than one snapshot's error / sqrt(runs)
    stderr = max(float(np.sqrt(np.mean(se**2) / len(seeds))),
                 float(e.std(ddof=1) / np.sqrt(e.size)) if e.size > 1 else 0.0)
    if exact is not None:
        m_val, m_err = mise(finals, exact, exact_grid)
    else:
        m_val, m_err = float("nan"), float("nan")
    return ScanRecord(alpha, float(np.mean(sigmas)), float(e.mean()), stderr, m_val, m_err)


def alpha_scan(alphas: Sequence[float], m: int, cfg, grid, exact: np.ndarray | None,
               exact_grid: Grid2D | None, replicates: int = 5, seed: int = 0,
               energy_samples: int = 5, workers: int = 1):
    """Independent ground-state runs per alpha; records sorted by sigma.

    A failing alpha is logged and skipped.  Returns ``(records, summary)``
    where ``summary`` names the sigma at the energy and MISE minima.
    """
    records = []
    for n, alpha in enumerate(alphas):
        seeds = [seed + 1000 * n + r for r in range(replicates)]
        try:
            rec = run_at_alpha(alpha, m, cfg, grid, exact, exact_grid, seeds, energy_samples, workers)
        except (FloatingPointError, ValueError, RuntimeError) as err:
            log.error("alpha=%s failed: %s", alpha, err)
            continue
        log.info("alpha=%s sigma=%.3f E=%.5f+-%.5f mise=%.3e", alpha, rec.sigma, rec.energy,
                 rec.energy_stderr, rec.mise)
        records.append(rec)
    records.sort(key=lambda r: r.sigma)
    return records, scan_summary(records)


def scan_summary(records: Sequence[ScanRecord]) -> dict:
    if not records:
        return {}
    e_best = min(records, key=lambda r: r.energy)
    out = {"energy_argmin_sigma": e_best.sigma, "energy_min": e_best.energy,
           "energy_argmin_alpha": e_best.alpha}
    with_mise = [r for r in records if not math.isnan(r.mise)]
    if with_mise:
        m_best = min(with_mise, key=lambda r: r.mise)
        out.update(mise_argmin_sigma=m_best.sigma, mise_min=m_best.mise,
                   mise_argmin_alpha=m_best.alpha)
    return out


def write_scan_csv(path, records: Sequence[ScanRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCAN_HEADER)
        for r in records:
            w.writerow([repr(float(v)) for v in astuple(r)])


def read_scan_csv(path) -> list[ScanRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [ScanRecord(**{k: float(v) for k, v in row.items()}) for row in rows]


def write_timeseries_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for row in rows:
            w.writerow([repr(float(row.get(k, float("nan")))) for k in TIMESERIES_HEADER])
