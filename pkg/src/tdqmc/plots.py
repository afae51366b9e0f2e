"""Static figures written at the end of a run (Agg backend, PNG)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def density_contours(path, grid, exact, estimate=None, extent: float = 4.0) -> Path:
    """Configuration-space contours: walker estimate (filled) over the exact density (lines)."""
    x1, x2 = grid.mesh()
    fig, ax = plt.subplots(figsize=(5, 4.5))
    levels = np.linspace(0, float(np.max(exact)), 9)[1:]
    if estimate is not None:
        cs = ax.contourf(x1, x2, estimate, levels=12, cmap="Blues")
        fig.colorbar(cs, ax=ax, label="walker estimate")
    ax.contour(x1, x2, exact, levels=levels, colors="red", linewidths=0.8)
    ax.set(xlim=(-extent, extent), ylim=(-extent, extent), xlabel="$x_1$ (a.u.)",
           ylabel="$x_2$ (a.u.)", aspect="equal")
    return _save(fig, path)


def scan_curves(path, records, exact_energy: float | None = None) -> Path:
    finite = [r for r in records if math.isfinite(r.sigma)]
    mf = [r for r in records if not math.isfinite(r.sigma)]
    s = np.array([r.sigma for r in finite])
    fig, (a, b) = plt.subplots(2, 1, figsize=(5, 6), sharex=True)
    a.errorbar(s, [r.energy for r in finite], [r.energy_stderr for r in finite], fmt="o-")
    if exact_energy is not None:
        a.axhline(exact_energy, color="k", ls=":", label="exact")
    for r in mf:
        a.axhline(r.energy, color="gray", ls="--", label="mean field")
    a.set_ylabel("energy (a.u.)")
    a.legend(loc="best", fontsize=8)
    b.errorbar(s, [r.mise for r in finite], [r.mise_stderr for r in finite], fmt="s-")
    for r in mf:
        b.axhline(r.mise, color="gray", ls="--")
    b.set(xlabel=r"$\sigma$ (a.u.)", ylabel="MISE")
    return _save(fig, path)


def realtime_series(path, rows) -> Path:
    t = np.array([r["t"] for r in rows])
    fig, axes = plt.subplots(3, 1, figsize=(5, 6.5), sharex=True)
    axes[0].plot(t, [r["field"] for r in rows])
    axes[0].set_ylabel("field (a.u.)")
    axes[1].plot(t, [r["nqcl"] for r in rows])
    axes[1].set_ylabel(r"$\sigma$ (a.u.)")
    axes[2].semilogy(t, [r.get("mise", np.nan) for r in rows])
    axes[2].set(ylabel="MISE", xlabel="t (a.u.)")
    return _save(fig, path)


def survival(path, series: dict) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, rows in series.items():
        t = [r["t"] for r in rows]
        ax.plot(t, [r["survival_tdqmc"] for r in rows], label=f"walkers, {label}")
    first = next(iter(series.values()))
    if "survival_exact" in first[0]:
        ax.plot([r["t"] for r in first], [r["survival_exact"] for r in first], "k--",
                label="exact")
    ax.set(xlabel="t (a.u.)", ylabel="survival probability")
    ax.legend(fontsize=8)
    return _save(fig, path)
