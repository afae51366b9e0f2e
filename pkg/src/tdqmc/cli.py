"""Command-line front end.

Configuration is a flat ``key = value`` file (``#`` starts a comment); every
key can also be given as ``--key value`` on the command line, which wins over
the file.  Four modes:

``oracle``        exact grid ground state and its density matrix
``ground_state``  one walker ground state at ``alpha``
``alpha_scan``    energy and MISE versus correlation length
``realtime``      laser-driven walkers against the grid solver

Each run writes CSV results, a ``manifest.json`` (resolved config plus
SHA-256 of every artifact) and, with ``--plots``, static figures.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import engine, estimators, exact, experiments
from .grid import Grid1D, Grid2D
from .kde import DegenerateEnsemble
from .potentials import MEAN_FIELD, LaserParams

log = logging.getLogger("tdqmc")

MODES = ("ground_state", "alpha_scan", "realtime", "oracle")


@dataclass
class RunConfig:
    mode: str = "ground_state"
    seed: int = 0
    walkers: int = 2000
    alpha: float = 6.0
    alphas: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 12.0, MEAN_FIELD)
    replicates: int = 5
    workers: int = 1
    out: str = "runs/latest"
    plots: bool = False
    # walker grid (ground state); the real-time grid keeps its spacing
    grid_min: float = -20.0
    grid_max: float = 20.0
    grid_points: int = 256
    realtime_extent: float = 60.0
    # grid solver
    exact_extent: float = 15.0
    exact_points: int = 128
    exact_realtime_extent: float = 60.0
    exact_realtime_points: int = 256
    exact_dt_imag: float = 0.02
    exact_tol: float = 1e-9
    # propagation
    dt: float = 0.1
    n_steps: int = 400
    noise_scale: float = 0.0
    proposal_width: float = 0.2
    metropolis_stride: int = 1
    burn_in_sweeps: int = 200
    absorber_fraction: float = 0.2
    absorber_power: float = 0.125
    bandwidth_rule: str = "silverman"
    veff_method: str = "auto"
    energy_samples: int = 5
    realtime_dt: float = 0.05
    stride: int = 20
    compare_mean_field: bool = True
    # laser
    peak_amplitude: float = 0.15
    carrier_frequency: float = 0.153
    n_cycles: int = 6
    envelope_shape: str = "sin2"
    t_start: float = 0.0

    def propagation(self, mode: str = "complex_time") -> engine.PropagationConfig:
        return engine.PropagationConfig(
            dt=self.dt if mode == "complex_time" else self.realtime_dt, mode=mode,
            n_steps=self.n_steps, noise_scale=self.noise_scale,
            proposal_width=self.proposal_width, metropolis_stride=self.metropolis_stride,
            burn_in_sweeps=self.burn_in_sweeps, absorber_fraction=self.absorber_fraction,
            absorber_power=self.absorber_power, bandwidth_rule=self.bandwidth_rule,
            veff_method=self.veff_method)

    def laser(self) -> LaserParams:
        return LaserParams(self.peak_amplitude, self.carrier_frequency, self.n_cycles,
                           self.envelope_shape, self.t_start)

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.grid_min, self.grid_max, self.grid_points)

    @property
    def exact_grid(self) -> Grid2D:
        return Grid2D.square(-self.exact_extent, self.exact_extent, self.exact_points)

    @property
    def exact_realtime_grid(self) -> Grid2D:
        return Grid2D.square(-self.exact_realtime_extent, self.exact_realtime_extent,
                             self.exact_realtime_points)


# Walker count and grids used with --paper-scale.
PAPER_SCALE = {"walkers": 25000, "grid_min": -30.0, "grid_max": 30.0, "grid_points": 512,
               "realtime_extent": 120.0, "exact_points": 512, "exact_realtime_points": 1024,
               "exact_realtime_extent": 60.0, "realtime_dt": 0.02}

_FIELDS = {f.name: f for f in fields(RunConfig)}


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def parse_alpha(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    t = str(text).strip().lower()
    if t in ("mean_field", "meanfield", "inf", "infinity", "hf"):
        return MEAN_FIELD
    return float(t)


def _coerce(name: str, raw):
    default = _FIELDS[name].default
    if name == "alpha":
        return parse_alpha(raw)
    if name == "alphas":
        if isinstance(raw, (list, tuple)):
            return tuple(parse_alpha(a) for a in raw)
        return tuple(parse_alpha(a) for a in str(raw).split(",") if a.strip())
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        t = str(raw).strip().lower()
        if t in ("1", "true", "yes", "on"):
            return True
        if t in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        f = float(raw)
        if f != int(f):
            raise ValueError(f"not an integer: {raw!r}")
        return int(f)
    if isinstance(default, float):
        return float(raw)
    return str(raw).strip()


def parse_config_text(text: str) -> tuple[dict, list]:
    """``key = value`` lines -> (raw dict, errors)."""
    values, errors = {}, []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {n}: expected 'key = value'")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values, errors


def validate(values: dict, paper_scale: bool = False) -> RunConfig:
    """Resolve raw values (strings or typed) into a RunConfig.

    Every problem is collected and raised together as :class:`ConfigError`.
    """
    errors = []
    resolved = dict(PAPER_SCALE) if paper_scale else {}
    for key, raw in values.items():
        if key not in _FIELDS:
            errors.append(f"{key}: unknown key")
            continue
        try:
            resolved[key] = _coerce(key, raw)
        except (TypeError, ValueError) as err:
            errors.append(f"{key}: {err}")
    cfg = RunConfig(**{k: v for k, v in resolved.items() if k in _FIELDS})
    errors += _check(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def _check(c: RunConfig) -> list:
    e = []
    if c.mode not in MODES:
        e.append(f"mode: must be one of {', '.join(MODES)}")
    if c.walkers < 2:
        e.append("walkers: M below minimum 2")
    if c.alpha < 0 or math.isnan(c.alpha):
        e.append("alpha: must be >= 0 or mean_field")
    if not c.alphas:
        e.append("alphas: empty list")
    elif any(a < 0 or math.isnan(a) for a in c.alphas):
        e.append("alphas: entries must be >= 0 or mean_field")
    if c.replicates < 1:
        e.append("replicates: must be >= 1")
    if c.mode == "alpha_scan" and c.replicates < 2:
        e.append("replicates: MISE needs at least 2")
    if c.workers < 1:
        e.append("workers: must be >= 1")
    if not c.grid_max > c.grid_min:
        e.append("grid_max: must exceed grid_min")
    if c.grid_points < 3:
        e.append("grid_points: must be >= 3")
    if c.realtime_extent < max(abs(c.grid_min), abs(c.grid_max)):
        e.append("realtime_extent: must cover the ground-state grid")
    if c.exact_extent < 15:
        e.append("exact_extent: grid solver needs at least [-15, 15]")
    for key in ("exact_points", "exact_realtime_points"):
        if getattr(c, key) < 8:
            e.append(f"{key}: must be >= 8")
    for key in ("dt", "realtime_dt", "exact_dt_imag", "exact_tol", "carrier_frequency"):
        if not getattr(c, key) > 0:
            e.append(f"{key}: must be > 0")
    for key in ("n_steps", "burn_in_sweeps", "stride", "metropolis_stride", "n_cycles",
                "energy_samples"):
        if getattr(c, key) < (0 if key in ("n_steps", "burn_in_sweeps") else 1):
            e.append(f"{key}: out of range")
    if c.noise_scale < 0 or c.proposal_width < 0 or c.peak_amplitude < 0:
        e.append("noise_scale/proposal_width/peak_amplitude: must be >= 0")
    if not 0 < c.absorber_fraction < 1:
        e.append("absorber_fraction: must lie in (0, 1)")
    if c.bandwidth_rule not in ("silverman", "std"):
        e.append("bandwidth_rule: must be silverman or std")
    if c.veff_method not in ("auto", "direct", "binned"):
        e.append("veff_method: must be auto, direct or binned")
    if c.envelope_shape not in ("sin2", "gaussian"):
        e.append("envelope_shape: must be sin2 or gaussian")
    return e


def describe(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(_fmt_alpha(a) for a in v)
        elif f.name == "alpha":
            v = _fmt_alpha(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines)


def _fmt_alpha(a: float) -> str:
    return "mean_field" if math.isinf(a) else repr(float(a))


def _jsonable(cfg: RunConfig) -> dict:
    out = {}
    for k, v in dataclasses.asdict(cfg).items():
        if k == "alpha":
            v = _fmt_alpha(v)
        elif k == "alphas":
            v = [_fmt_alpha(a) for a in v]
        out[k] = v
    return out


# -- runs --------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: RunConfig, artifacts: list, summary: dict) -> Path:
    entries = [{"path": p.name, "sha256": _sha256(p)} for p in sorted(set(artifacts)) if p.exists()]
    manifest = {"config": _jsonable(cfg), "seed": cfg.seed, "summary": summary,
                "artifacts": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def _run_oracle(cfg: RunConfig, out: Path):
    st = experiments.oracle(cfg.exact_grid, cfg.exact_dt_imag, cfg.exact_tol)
    dens = out / "exact_density.csv"
    exact.write_density(dens, exact.exact_density(st), st.grid)
    res = out / "oracle.csv"
    res.write_text("energy,grid_points,extent\n"
                   f"{st.energy!r},{cfg.exact_points},{cfg.exact_extent!r}\n")
    print(f"exact ground-state energy: {st.energy:.6f}")
    arts = [dens, res]
    if cfg.plots:
        from . import plots
        arts.append(plots.density_contours(out / "fig_density.png", st.grid,
                                           exact.exact_density(st), None))
    return arts, {"exact_energy": st.energy}


def _run_ground_state(cfg: RunConfig, out: Path):
    ex = experiments.oracle(cfg.exact_grid, cfg.exact_dt_imag, cfg.exact_tol)
    ref = exact.exact_density(ex)
    state, rec = experiments.ground_state(cfg.alpha, cfg.walkers, cfg.propagation(), cfg.grid,
                                          cfg.seed, ref, cfg.exact_grid, cfg.workers,
                                          cfg.energy_samples)
    res = out / "ground_state.csv"
    estimators.write_scan_csv(res, [rec])
    ck = out / "ground_state.npz"
    engine.save_checkpoint(ck, state)
    print(f"alpha={_fmt_alpha(rec.alpha)} sigma={rec.sigma:.4f} energy={rec.energy:.5f}"
          f" +- {rec.energy_stderr:.5f} ise={rec.mise:.3e} exact={ex.energy:.5f}")
    arts = [res, ck]
    if cfg.plots:
        from . import plots
        from .kde import kde_density_on_grid
        arts.append(plots.density_contours(out / "fig_density.png", cfg.exact_grid, ref,
                                           kde_density_on_grid(state.density_estimate(),
                                                               cfg.exact_grid)))
    return arts, {"energy": rec.energy, "energy_stderr": rec.energy_stderr, "sigma": rec.sigma,
                  "ise": rec.mise, "exact_energy": ex.energy}


def _run_scan(cfg: RunConfig, out: Path):
    ex = experiments.oracle(cfg.exact_grid, cfg.exact_dt_imag, cfg.exact_tol)
    recs, summary = experiments.scan(cfg.alphas, cfg.walkers, cfg.propagation(), cfg.grid,
                                     exact.exact_density(ex), cfg.exact_grid, cfg.replicates,
                                     cfg.seed, cfg.workers, cfg.energy_samples)
    res = out / "alpha_scan.csv"
    estimators.write_scan_csv(res, recs)
    if summary:
        print(f"argmin: energy sigma={summary['energy_argmin_sigma']:.4f}"
              f" (E={summary['energy_min']:.5f}) mise sigma={summary['mise_argmin_sigma']:.4f}"
              f" (MISE={summary['mise_min']:.3e})")
    arts = [res]
    if cfg.plots:
        from . import plots
        arts.append(plots.scan_curves(out / "fig_scan.png", recs, ex.energy))
    summary = dict(summary, exact_energy=ex.energy, n_records=len(recs))
    return arts, summary


def _run_realtime(cfg: RunConfig, out: Path):
    laser = cfg.laser()
    ex0 = experiments.oracle(cfg.exact_realtime_grid, cfg.exact_dt_imag, cfg.exact_tol)
    rt_cfg = cfg.propagation("real_time")
    n = int(round((laser.t_end + 0.0) / cfg.realtime_dt))
    runs = [("correlated", cfg.alpha)]
    if cfg.compare_mean_field and not math.isinf(cfg.alpha):
        runs.append(("mean_field", MEAN_FIELD))
    arts, summary = [], {}
    series = {}
    for label, alpha in runs:
        gs, rec = experiments.ground_state(alpha, cfg.walkers, cfg.propagation(), cfg.grid,
                                           cfg.seed, None, None, cfg.workers, 1)
        wide = experiments.to_realtime(gs, cfg.realtime_extent)
        result = experiments.realtime(wide, laser, rt_cfg, n, cfg.stride, ex0, cfg.workers)
        path = out / f"realtime_{label}.csv"
        estimators.write_timeseries_csv(path, result.rows)
        arts.append(path)
        series[label] = result.rows
        nq = np.array([r["nqcl"] for r in result.rows])
        summary[label] = {"survival_final": result.rows[-1]["survival_tdqmc"],
                          "survival_exact_final": result.rows[-1]["survival_exact"],
                          "nqcl_ratio": float(np.max(nq) / nq[0]) if np.isfinite(nq[0]) else None,
                          "mise_max": float(max(r["mise"] for r in result.rows))}
        print(f"{label}: survival {result.rows[-1]['survival_tdqmc']:.4f}"
              f" (exact {result.rows[-1]['survival_exact']:.4f})")
    if cfg.plots:
        from . import plots
        arts.append(plots.realtime_series(out / "fig_timeseries.png", series["correlated"]))
        arts.append(plots.survival(out / "fig_survival.png", series))
    return arts, summary


RUNNERS = {"oracle": _run_oracle, "ground_state": _run_ground_state, "alpha_scan": _run_scan,
           "realtime": _run_realtime}


def run(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    arts, summary = RUNNERS[cfg.mode](cfg, out)
    (out / "config.txt").write_text(describe(cfg) + "\n")
    arts.append(out / "config.txt")
    write_manifest(out, cfg, arts, summary)
    return summary


# -- argument handling -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdqmc", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="key = value file")
    p.add_argument("--paper-scale", action="store_true",
                   help="M=25000 walkers and the large grids")
    p.add_argument("--validate", action="store_true", help="resolve and echo the config, then exit")
    p.add_argument("-v", "--verbose", action="store_true")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            p.add_argument(flag, dest=f.name, nargs="?", const="true", default=None)
        else:
            p.add_argument(flag, dest=f.name, default=None)
    return p


def resolve(argv=None) -> tuple[RunConfig, argparse.Namespace]:
    args = build_parser().parse_args(argv)
    values, errors = {}, []
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as err:
            raise ConfigError([f"config: cannot read {args.config}: {err.strerror}"]) from err
        values, errors = parse_config_text(text)
    for f in fields(RunConfig):
        v = getattr(args, f.name)
        if v is not None:
            values[f.name] = v
    try:
        cfg = validate(values, args.paper_scale)
    except ConfigError as err:
        raise ConfigError(errors + err.errors) from None
    if errors:
        raise ConfigError(errors)
    return cfg, args


ERROR_CATEGORIES = [
    (ConfigError, "config", 2),
    (exact.BlowUp, "blowup", 3),
    (exact.ConvergenceError, "convergence", 3),
    (DegenerateEnsemble, "degenerate-ensemble", 4),
    (estimators.EstimatorError, "estimator", 4),
    (OSError, "io", 5),
]


def main(argv=None) -> int:
    try:
        cfg, args = resolve(argv)
    except ConfigError as err:
        print(f"error[config]: {err}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.validate:
        print(describe(cfg))
        return 0
    try:
        run(cfg)
    except Exception as err:  # one machine-readable line per failure
        for kind, name, code in ERROR_CATEGORIES:
            if isinstance(err, kind):
                print(f"error[{name}]: {err}", file=sys.stderr)
                return code
        print(f"error[internal]: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
