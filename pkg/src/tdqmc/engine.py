"""Walker ensembles guided by per-walker guide waves.

One propagation step, for both electrons at once:

1. freeze a snapshot of all walker positions and recompute the bandwidths,
2. advance every guide wave with the split-operator method under
   v_en + effective e-e field (reference = its own replica's partner walker)
   + laser term,
3. move each walker along the de Broglie-Bohm velocity of its own wave,
4. in complex time, add the thermalizing kick and one Metropolis move
   against |wave|^2.

All random numbers of a step are drawn up front from a generator keyed on
(seed, step), so results do not depend on how the wave updates are split
across worker threads.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import fft

from .grid import ComplexField1D, Grid1D, gradient_rows, interp_rows, normalize_rows
from .kde import BandwidthState, DegenerateEnsemble, DensityEstimate
from .potentials import (HELIUM, LaserParams, SoftCoreParams, effective_v_ee,
                         effective_v_ee_all, laser_field, v_en)
from .exact import BlowUp, absorber_mask_1d

log = logging.getLogger(__name__)

N_ELECTRONS = 2
NODE_FLOOR = 1e-10
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 0.1
    mode: str = "complex_time"
    n_steps: int = 400
    noise_scale: float = 0.0
    proposal_width: float = 0.2
    metropolis_stride: int = 1
    burn_in_sweeps: int = 200
    absorber_fraction: float = 0.2
    absorber_power: float = 0.125
    bandwidth_rule: str = "silverman"
    veff_method: str = "auto"

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.mode not in ("complex_time", "real_time"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.noise_scale < 0 or self.proposal_width < 0:
            raise ValueError("noise and proposal width must be >= 0")
        if self.metropolis_stride < 1:
            raise ValueError("metropolis_stride must be >= 1")

    @property
    def tau(self) -> complex:
        """Propagation step; equal real and imaginary parts in complex time."""
        if self.mode == "complex_time":
            return self.dt * (1 - 1j) / np.sqrt(2)
        return complex(self.dt)

    @property
    def dt_real(self) -> float:
        return self.tau.real


@dataclass
class WalkerEnsemble:
    positions: np.ndarray
    escaped: np.ndarray = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[0] != N_ELECTRONS:
            raise ValueError("positions must have shape (2, M)")
        if self.escaped is None:
            self.escaped = np.zeros(self.positions.shape, dtype=bool)
        self.escaped = np.asarray(self.escaped, dtype=bool)

    @property
    def n_walkers(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "WalkerEnsemble":
        return WalkerEnsemble(self.positions.copy(), self.escaped.copy())


@dataclass
class EnsembleState:
    grid: Grid1D
    walkers: WalkerEnsemble
    waves: np.ndarray
    bandwidths: BandwidthState
    t: float = 0.0
    seed: int = 0
    step: int = 0
    params: SoftCoreParams = HELIUM
    trace: list = field(default_factory=list)

    @property
    def alpha(self) -> float:
        return self.bandwidths.alpha

    @property
    def n_walkers(self) -> int:
        return self.walkers.n_walkers

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.step, salt])

    def wave(self, i: int, k: int) -> ComplexField1D:
        return ComplexField1D(self.grid, self.waves[i, k])

    def density_estimate(self, rule: str = "silverman") -> DensityEstimate:
        alive = ~np.any(self.walkers.escaped, axis=0)
        return DensityEstimate.from_walkers(self.walkers.positions[:, alive], self.alpha, rule)


# -- guide waves ---------------------------------------------------------------

def split_operator_step(values: np.ndarray, grid: Grid1D, potential: np.ndarray, tau: complex,
                        kin_phase: np.ndarray | None = None) -> np.ndarray:
    """One Strang step exp(-iV tau/2) exp(-iT tau) exp(-iV tau/2) along the last axis."""
    if kin_phase is None:
        kin_phase = np.exp(-0.5j * tau * grid.k**2)
    half = np.exp(-0.5j * tau * potential)
    return half * fft.ifft(kin_phase * fft.fft(half * values, axis=-1), axis=-1)


def _check_finite(values, where: str):
    if not np.all(np.isfinite(values)):
        raise BlowUp(f"propagation blow-up in {where}")


def step_guide_wave(wave: ComplexField1D, i: int, k: int, state: EnsembleState,
                    cfg: PropagationConfig, laser: LaserParams | None = None) -> ComplexField1D:
    """Advance the single guide wave of electron ``i``, replica ``k``.

    Uses the exact kernel sum for the effective field; the batched
    :func:`step_guide_waves` is what the propagation loops call.
    """
    grid = state.grid
    j = 1 - i
    sigma = state.bandwidths.nqcl[j]
    pot = v_en(grid.x, state.params) + effective_v_ee(grid.x, state.walkers.positions[j], k, sigma,
                                                       state.params)
    pot = pot + grid.x * float(laser_field(state.t + 0.5 * cfg.dt_real, laser))
    out = split_operator_step(wave.values, grid, pot, cfg.tau)
    _check_finite(out, f"wave ({i}, {k}) at step {state.step}")
    if cfg.mode == "complex_time":
        out = normalize_rows(out, grid.spacing)
    else:
        out = out * absorber_mask_1d(grid, cfg.absorber_fraction, cfg.absorber_power)
    return ComplexField1D(grid, out)


def step_guide_waves(state: EnsembleState, cfg: PropagationConfig, laser: LaserParams | None = None,
                     workers: int = 1, mask: np.ndarray | None = None) -> np.ndarray:
    """Advance all 2*M guide waves one step from the current position snapshot."""
    grid = state.grid
    x = grid.x
    snapshot = state.walkers.positions.copy()
    kin_phase = np.exp(-0.5j * cfg.tau * grid.k**2)
    external = x * float(laser_field(state.t + 0.5 * cfg.dt_real, laser))
    base = v_en(x, state.params) + external
    if mask is None and cfg.mode == "real_time":
        mask = absorber_mask_1d(grid, cfg.absorber_fraction, cfg.absorber_power)
    out = np.empty_like(state.waves)
    m = state.n_walkers
    for i in range(N_ELECTRONS):
        j = 1 - i
        veff = effective_v_ee_all(grid, snapshot[j], state.bandwidths.nqcl[j], state.params,
                                  method=cfg.veff_method)

        def work(sl, i=i, veff=veff):
            w = split_operator_step(state.waves[i, sl], grid, base[None, :] + veff[sl], cfg.tau,
                                    kin_phase)
            if cfg.mode == "complex_time":
                w = normalize_rows(w, grid.spacing)
            else:
                w *= mask
            out[i, sl] = w

        chunks = _chunks(m)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(work, chunks))
        else:
            for sl in chunks:
                work(sl)
    _check_finite(out, f"guide waves at step {state.step}, t={state.t:.3f}")
    return out


def _chunks(m: int, block: int = 256):
    # Fixed blocks whatever the worker count: vectorized complex arithmetic
    # rounds differently depending on array extent, so the decomposition must
    # not change with the number of threads.
    return [slice(a, min(a + block, m)) for a in range(0, m, block)]


# -- walkers ---------------------------------------------------------------------

def bohm_velocities(waves: np.ndarray, grid: Grid1D, x: np.ndarray):
    """Im(grad(wave)/wave) at ``x`` for each row; frozen (0) near nodes.

    The gradient uses the same stencils as :func:`gradient_rows`, evaluated only
    at the two nodes bracketing each position.  Returns ``(v, near_node)``.
    """
    n = grid.n_points
    f = (np.asarray(x, dtype=float) - grid.x_min) / grid.spacing
    i = np.clip(np.floor(f).astype(np.int64), 0, n - 2)
    t = f - i
    idx = np.clip(i[..., None] + np.arange(-1, 3), 0, n - 1)
    w = np.take_along_axis(waves, idx, axis=-1)  # nodes i-1 .. i+2
    h2 = 2 * grid.spacing
    d_lo = (w[..., 2] - w[..., 0]) / h2
    d_hi = (w[..., 3] - w[..., 1]) / h2
    if np.any(i == 0) or np.any(i == n - 2):
        g_end = gradient_rows(waves[..., :3], grid.spacing)[..., 0]
        g_top = gradient_rows(waves[..., -3:], grid.spacing)[..., -1]
        d_lo = np.where(i == 0, g_end, d_lo)
        d_hi = np.where(i == n - 2, g_top, d_hi)
    psi = np.where(t == 0, w[..., 1], w[..., 1] * (1 - t) + w[..., 2] * t)
    dpsi = d_lo * (1 - t) + d_hi * t
    amp = np.abs(psi)
    floor = NODE_FLOOR * np.max(np.abs(waves), axis=-1)
    near_node = amp <= floor
    safe = np.where(near_node, 1.0, psi)
    v = np.where(near_node, 0.0, np.imag(dpsi / safe))
    return v, near_node


def bohm_velocity(wave: ComplexField1D, x: float) -> float:
    v, _ = bohm_velocities(wave.values[None, :], wave.grid, np.array([x]))
    return float(v[0])


def advance_walkers(state: EnsembleState, dt: float) -> EnsembleState:
    """Euler step of every live walker along its own wave's Bohm velocity.

    Walkers that leave the absorber-free interior in real time are flagged
    escaped and frozen there; in complex time they are re-drawn from their
    guide wave (see :func:`thermalize_and_resample`).
    """
    grid = state.grid
    pos = state.walkers.positions
    escaped = state.walkers.escaped.copy()
    new = pos.copy()
    inside = grid.contains(pos)
    for i in range(N_ELECTRONS):
        v, _ = bohm_velocities(state.waves[i], grid, np.clip(pos[i], grid.x_min, grid.x_max))
        live = ~escaped[i] & inside[i]
        new[i] = np.where(live, pos[i] + v * dt, pos[i])
    return replace(state, walkers=WalkerEnsemble(new, escaped))


def flag_escapes(state: EnsembleState, interior: float) -> EnsembleState:
    pos = state.walkers.positions
    center = 0.5 * (state.grid.x_min + state.grid.x_max)
    out = np.abs(pos - center) > interior
    escaped = state.walkers.escaped | out
    # escaped walkers stay where they crossed
    return replace(state, walkers=WalkerEnsemble(pos, escaped))


def _density_at(waves, grid, x):
    inside = grid.contains(x)
    psi = interp_rows(waves, grid, np.clip(x, grid.x_min, grid.x_max))
    return np.where(inside, psi.real**2 + psi.imag**2, 0.0)


def metropolis_move(waves: np.ndarray, grid: Grid1D, x: np.ndarray, width: float,
                    rng: np.random.Generator):
    """One Metropolis move per row targeting |wave|^2; returns (x_new, accepted)."""
    proposal = x + rng.normal(0.0, width, x.shape) if width > 0 else x.copy()
    u = rng.random(x.shape)
    p_old = _density_at(waves, grid, x)
    p_new = _density_at(waves, grid, proposal)
    accept = (p_new >= p_old) | (u * p_old < p_new)
    return np.where(accept, proposal, x), accept


def redraw(waves: np.ndarray, grid: Grid1D, rng: np.random.Generator, sweeps: int = 100,
           width: float = 1.0) -> np.ndarray:
    """Fresh samples of |wave|^2, Metropolis from uniform interior starts."""
    lo = grid.x_min + 0.25 * (grid.x_max - grid.x_min)
    hi = grid.x_max - 0.25 * (grid.x_max - grid.x_min)
    x = rng.uniform(lo, hi, waves.shape[0])
    for _ in range(sweeps):
        x, _ = metropolis_move(waves, grid, x, width, rng)
    return x


def thermalize_and_resample(state: EnsembleState, cfg: PropagationConfig,
                            rng: np.random.Generator | None = None) -> EnsembleState:
    """Thermalizing kick of std ``noise_scale * bandwidth`` then one Metropolis move.

    Walkers that end up off the grid are re-drawn from their own guide wave.
    """
    if cfg.mode != "complex_time":
        raise ValueError("thermalization is a complex-time operation")
    rng = state.rng(salt=1) if rng is None else rng
    grid = state.grid
    pos = state.walkers.positions.copy()
    for i in range(N_ELECTRONS):
        amp = cfg.noise_scale * state.bandwidths.kde[i]
        kick = rng.normal(0.0, 1.0, pos[i].shape)
        if amp > 0:
            pos[i] = pos[i] + amp * kick
        if state.step % cfg.metropolis_stride == 0:
            pos[i], _ = metropolis_move(state.waves[i], grid, pos[i], cfg.proposal_width, rng)
        lost = ~grid.contains(pos[i])
        if np.any(lost):
            log.debug("re-drawing %d walkers of electron %d", lost.sum(), i)
            pos[i, lost] = redraw(state.waves[i, lost], grid, rng)
    return replace(state, walkers=WalkerEnsemble(pos, state.walkers.escaped))


# -- drivers --------------------------------------------------------------------

def initial_state(grid: Grid1D, alpha: float, m: int, seed: int = 0, burn_in: int = 200,
                  params: SoftCoreParams = HELIUM, rule: str = "silverman") -> EnsembleState:
    """Every guide wave = normalized exp(-x^2); walkers burned in against it."""
    if m < 2:
        raise ValueError("M below minimum 2")
    wave = normalize_rows(np.exp(-grid.x**2).astype(complex), grid.spacing)
    waves = np.broadcast_to(wave, (N_ELECTRONS, m, grid.n_points)).copy()
    rng = np.random.default_rng([seed, 0, 99])
    pos = np.empty((N_ELECTRONS, m))
    for i in range(N_ELECTRONS):
        x = rng.normal(0.0, 0.5, m)
        for _ in range(burn_in):
            x, _ = metropolis_move(waves[i], grid, x, 0.5, rng)
        pos[i] = x
    walkers = WalkerEnsemble(pos)
    bw = BandwidthState.from_walkers(pos, alpha, rule)
    return EnsembleState(grid, walkers, waves, bw, 0.0, seed, 0, params)


def complex_time_step(state: EnsembleState, cfg: PropagationConfig, workers: int = 1) -> EnsembleState:
    bw = BandwidthState.from_walkers(state.walkers.positions, state.alpha, cfg.bandwidth_rule)
    state = replace(state, bandwidths=bw)
    waves = step_guide_waves(state, cfg, None, workers)
    state = replace(state, waves=waves)
    state = advance_walkers(state, cfg.dt_real)
    state = thermalize_and_resample(state, cfg)
    return replace(state, t=state.t + cfg.dt_real, step=state.step + 1)


def prepare_ground_state(alpha: float, m: int, cfg: PropagationConfig, grid: Grid1D | None = None,
                         seed: int = 0, workers: int = 1, params: SoftCoreParams = HELIUM,
                         callback: Callable[[EnsembleState], None] | None = None,
                         energy_stride: int = 0):
    """Relax the walker/guide-wave ensemble in complex time.

    Returns ``(state, trace)`` where ``trace`` holds one dict per step with the
    correlation lengths and, every ``energy_stride`` steps (0 = never), the
    walker energy estimate.
    """
    from .estimators import energy_estimate

    if cfg.mode != "complex_time":
        raise ValueError("ground-state preparation runs in complex time")
    grid = grid or Grid1D(-30.0, 30.0, 512)
    state = initial_state(grid, alpha, m, seed, cfg.burn_in_sweeps, params, cfg.bandwidth_rule)
    trace = []
    for n in range(cfg.n_steps):
        state = complex_time_step(state, cfg, workers)
        rec = {"step": state.step, "t": state.t, "sigma_kde": state.bandwidths.kde,
               "nqcl": state.bandwidths.nqcl}
        if energy_stride and state.step % energy_stride == 0:
            rec["energy"], rec["energy_stderr"] = energy_estimate(state)
        trace.append(rec)
        if callback is not None:
            callback(state)
    state.trace = trace
    return state, trace


def realtime_step(state: EnsembleState, cfg: PropagationConfig, laser: LaserParams | None,
                  workers: int = 1, mask=None, interior: float | None = None) -> EnsembleState:
    alive = ~np.any(state.walkers.escaped, axis=0)
    try:
        bw = BandwidthState.from_walkers(state.walkers.positions[:, alive], state.alpha,
                                         cfg.bandwidth_rule)
        state = replace(state, bandwidths=bw)
    except DegenerateEnsemble:
        # (almost) fully ionized: keep the last bandwidths
        log.debug("fewer than two distinct live walkers at t=%.3f", state.t)
    waves = step_guide_waves(state, cfg, laser, workers, mask)
    state = replace(state, waves=waves)
    state = advance_walkers(state, cfg.dt_real)
    if interior is None:
        interior = 0.5 * (state.grid.x_max - state.grid.x_min) * (1 - cfg.absorber_fraction)
    state = flag_escapes(state, interior)
    return replace(state, t=state.t + cfg.dt_real, step=state.step + 1)


Observer = Callable[[EnsembleState], dict]


def propagate_realtime(state: EnsembleState, laser: LaserParams | None, cfg: PropagationConfig,
                       observers: Sequence[Observer] = (), stride: int = 10, workers: int = 1,
                       n_steps: int | None = None):
    """Laser-driven real-time evolution; returns ``(records, final_state)``.

    Bandwidths are recomputed every step from the walkers that have not
    escaped.  Observers are called at t0 and every ``stride`` steps.
    """
    if cfg.mode != "real_time":
        raise ValueError("propagate_realtime needs mode='real_time'")
    mask = absorber_mask_1d(state.grid, cfg.absorber_fraction, cfg.absorber_power)
    n_steps = cfg.n_steps if n_steps is None else n_steps
    records = []

    def sample(s):
        rec = {"t": s.t, "field": float(laser_field(s.t, laser))}
        for obs in observers:
            rec.update(obs(s))
        records.append(rec)

    sample(state)
    for n in range(1, n_steps + 1):
        state = realtime_step(state, cfg, laser, workers, mask)
        if n % stride == 0:
            sample(state)
    return records, state


def regrid(state: EnsembleState, grid: Grid1D) -> EnsembleState:
    """Move the guide waves onto a larger grid with the same spacing."""
    old = state.grid
    if not np.isclose(grid.spacing, old.spacing, rtol=1e-9):
        raise ValueError("regrid needs matching spacing")
    offset = int(round((old.x_min - grid.x_min) / grid.spacing))
    if offset < 0 or offset + old.n_points > grid.n_points:
        raise ValueError("new grid must contain the old one")
    waves = np.zeros(state.waves.shape[:2] + (grid.n_points,), dtype=complex)
    waves[..., offset:offset + old.n_points] = state.waves
    return replace(state, grid=grid, waves=waves)


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, state: EnsembleState) -> None:
    """Versioned ``.npz`` snapshot sufficient to resume propagation."""
    header = {
        "format": "tdqmc-ensemble",
        "version": CHECKPOINT_VERSION,
        "grid": asdict(state.grid),
        "params": asdict(state.params),
        "alpha": state.alpha,
        "bandwidth_kde": list(state.bandwidths.kde),
        "t": state.t,
        "seed": state.seed,
        "step": state.step,
    }
    np.savez_compressed(path, header=np.array(json.dumps(header)), waves=state.waves,
                        positions=state.walkers.positions, escaped=state.walkers.escaped)


def load_checkpoint(path) -> EnsembleState:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != "tdqmc-ensemble":
            raise ValueError("not an ensemble checkpoint")
        if header["version"] > CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint version {header['version']} is newer than supported")
        grid = Grid1D(**header["grid"])
        walkers = WalkerEnsemble(data["positions"], data["escaped"])
        bw = BandwidthState(tuple(header["bandwidth_kde"]), header["alpha"])
        return EnsembleState(grid, walkers, data["waves"], bw, header["t"], header["seed"],
                             header["step"], SoftCoreParams(**header["params"]))
